#include "phenoclust/survival.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "phenoclust/error.hpp"
#include "phenoclust/stats.hpp"
#include "phenoclust/text.hpp"

namespace phenoclust::survival {

namespace {

const std::vector<std::string> kBaseHeader = {"patient_id", "time_months", "event"};

std::string where(const std::string& source, std::size_t line) { return source + ":" + std::to_string(line) + ": "; }

double parse_cell(const std::string& cell, const std::string& column, const std::string& at) {
    double v = 0.0;
    if (!text::parse_double(cell, v))
        throw Error(Errc::malformed_input, at + "column '" + column + "' holds non-numeric value '" + cell + "'");
    return v;
}

void check_records(std::span<const SurvivalRecord> records) {
    for (const auto& r : records) {
        if (!std::isfinite(r.time) || r.time < 0.0)
            throw Error(Errc::malformed_input, "record '" + r.id + "' has an invalid follow-up time");
        if (r.event != 0 && r.event != 1)
            throw Error(Errc::malformed_input, "record '" + r.id + "' has a non-binary event flag");
    }
}

std::size_t count_events(std::span<const SurvivalRecord> records) {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [](const SurvivalRecord& r) { return r.event == 1; }));
}

std::vector<double> distinct_event_times(std::span<const SurvivalRecord> records) {
    std::set<double> times;
    for (const auto& r : records)
        if (r.event == 1) times.insert(r.time);
    return {times.begin(), times.end()};
}

struct CoxState {
    double loglik = 0.0;
    Eigen::VectorXd score;
    Eigen::MatrixXd information;
};

// Breslow partial likelihood with its gradient and observed information,
// accumulated over risk sets from the longest follow-up down.
CoxState cox_state(std::span<const SurvivalRecord> records, const Eigen::MatrixXd& x, const Eigen::VectorXd& beta,
                   bool derivatives) {
    const auto n = static_cast<Eigen::Index>(records.size());
    const auto p = x.cols();
    const Eigen::VectorXd eta_raw = x * beta;
    const double shift = n > 0 ? eta_raw.maxCoeff() : 0.0;
    const Eigen::VectorXd eta = eta_raw.array() - shift;

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return records[static_cast<std::size_t>(a)].time > records[static_cast<std::size_t>(b)].time;
    });

    CoxState s;
    s.score = Eigen::VectorXd::Zero(p);
    s.information = Eigen::MatrixXd::Zero(p, p);
    double s0 = 0.0;
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);

    std::size_t i = 0;
    while (i < order.size()) {
        const double t = records[static_cast<std::size_t>(order[i])].time;
        std::size_t j = i;
        for (; j < order.size() && records[static_cast<std::size_t>(order[j])].time == t; ++j) {
            const auto k = order[j];
            const double w = std::exp(eta(k));
            s0 += w;
            if (derivatives) {
                s1 += w * x.row(k).transpose();
                s2 += w * x.row(k).transpose() * x.row(k);
            }
        }
        for (std::size_t e = i; e < j; ++e) {
            const auto k = order[e];
            if (records[static_cast<std::size_t>(k)].event != 1) continue;
            s.loglik += eta(k) - std::log(s0);
            if (derivatives) {
                const Eigen::VectorXd mean = s1 / s0;
                s.score += x.row(k).transpose() - mean;
                s.information += s2 / s0 - mean * mean.transpose();
            }
        }
        i = j;
    }
    // The shift cancels inside each risk-set term; nothing to undo.
    return s;
}

void check_cox_inputs(std::span<const SurvivalRecord> records, const Eigen::MatrixXd& x) {
    check_records(records);
    if (static_cast<std::size_t>(x.rows()) != records.size())
        throw Error(Errc::shape, "covariate rows do not match the record count");
    if (x.cols() == 0) throw Error(Errc::shape, "Cox model needs at least one covariate");
    if (!x.allFinite()) throw Error(Errc::malformed_input, "covariates contain non-finite values");
    if (records.size() <= static_cast<std::size_t>(x.cols()))
        throw Error(Errc::insufficient_data, "Cox model needs more subjects than covariates");
    if (count_events(records) == 0) throw Error(Errc::insufficient_data, "Cox model needs at least one event");
    for (Eigen::Index c = 0; c < x.cols(); ++c)
        if (x.col(c).maxCoeff() == x.col(c).minCoeff())
            throw Error(Errc::collinearity, "covariate " + std::to_string(c) + " is constant");
}

void check_separation(const Eigen::VectorXd& beta, const CoxConfig& cfg) {
    if (beta.cwiseAbs().maxCoeff() > cfg.separation_limit)
        throw Error(Errc::separation, "Cox coefficients diverge (|beta| > " + text::format_double(cfg.separation_limit) +
                                          "): monotone likelihood, likely complete separation");
}

bool singular(const Eigen::MatrixXd& info) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info, Eigen::EigenvaluesOnly);
    const double hi = eig.eigenvalues().maxCoeff();
    const double lo = eig.eigenvalues().minCoeff();
    return !(hi > 0.0) || !(lo > 1e-12 * hi);
}

// Half-unit counts over comparable pairs: 2 per concordant pair, 1 per risk tie.
std::pair<std::uint64_t, std::uint64_t> harrell_counts(std::span<const double> risk,
                                                       std::span<const SurvivalRecord> records,
                                                       std::span<const std::size_t> idx) {
    std::uint64_t comparable = 0, halves = 0;
    for (std::size_t a = 0; a < idx.size(); ++a) {
        const auto& ra = records[idx[a]];
        for (std::size_t b = a + 1; b < idx.size(); ++b) {
            const auto& rb = records[idx[b]];
            // Decide which of the pair is known to fail first, if either.
            std::size_t first, second;
            if (ra.time < rb.time && ra.event == 1) {
                first = idx[a];
                second = idx[b];
            } else if (rb.time < ra.time && rb.event == 1) {
                first = idx[b];
                second = idx[a];
            } else if (ra.time == rb.time && ra.event != rb.event) {
                first = ra.event == 1 ? idx[a] : idx[b];
                second = ra.event == 1 ? idx[b] : idx[a];
            } else {
                continue;
            }
            ++comparable;
            if (risk[first] > risk[second])
                halves += 2;
            else if (risk[first] == risk[second])
                halves += 1;
        }
    }
    return {comparable, halves};
}

std::vector<std::size_t> sorted_labels(std::span<const std::size_t> labels) {
    std::set<std::size_t> s(labels.begin(), labels.end());
    return {s.begin(), s.end()};
}

bool has_covariates(std::span<const SurvivalRecord> records) {
    return std::all_of(records.begin(), records.end(),
                       [](const SurvivalRecord& r) { return r.age.has_value() && r.sex.has_value(); });
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

Records parse_survival_csv(std::string_view content, const std::string& source) {
    std::istringstream in{std::string(content)};
    std::string line;
    if (!std::getline(in, line)) throw Error(Errc::malformed_input, source + ": empty file");
    std::vector<std::string> header;
    for (const auto& h : text::split(text::trim(line), ',')) header.emplace_back(text::trim(h));
    const bool base = header == kBaseHeader;
    const bool extended =
        header.size() == 5 && std::equal(kBaseHeader.begin(), kBaseHeader.end(), header.begin()) &&
        header[3] == "age" && header[4] == "sex";
    if (!base && !extended)
        throw Error(Errc::malformed_input, source + ": header must be 'patient_id,time_months,event[,age,sex]'");

    Records out;
    std::set<std::string> seen;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        const std::string at = where(source, line_no);
        const auto cells = text::split(text::trim(line), ',');
        if (cells.size() != header.size())
            throw Error(Errc::malformed_input, at + "expected " + std::to_string(header.size()) + " cells, found " +
                                                   std::to_string(cells.size()));
        SurvivalRecord r;
        r.id = std::string(text::trim(cells[0]));
        if (r.id.empty()) throw Error(Errc::malformed_input, at + "empty patient id");
        if (!seen.insert(r.id).second) throw Error(Errc::duplicate_id, at + "duplicate patient id '" + r.id + "'");
        r.time = parse_cell(cells[1], "time_months", at);
        if (r.time < 0.0) throw Error(Errc::malformed_input, at + "negative follow-up time");
        const double ev = parse_cell(cells[2], "event", at);
        if (ev != 0.0 && ev != 1.0) throw Error(Errc::malformed_input, at + "event must be 0 or 1");
        r.event = static_cast<int>(ev);
        if (extended) {
            if (!text::trim(cells[3]).empty()) r.age = parse_cell(cells[3], "age", at);
            if (!text::trim(cells[4]).empty()) {
                const double sex = parse_cell(cells[4], "sex", at);
                if (sex != 0.0 && sex != 1.0) throw Error(Errc::malformed_input, at + "sex must be 0 or 1");
                r.sex = sex;
            }
        }
        out.push_back(std::move(r));
    }
    return out;
}

Records read_survival_csv(const std::filesystem::path& path) {
    return parse_survival_csv(text::read_file(path), path.string());
}

std::string format_survival_csv(std::span<const SurvivalRecord> records) {
    const bool extended = std::any_of(records.begin(), records.end(), [](const SurvivalRecord& r) {
        return r.age.has_value() || r.sex.has_value();
    });
    std::string out = extended ? "patient_id,time_months,event,age,sex\n" : "patient_id,time_months,event\n";
    for (const auto& r : records) {
        out += r.id + "," + text::format_double(r.time) + "," + std::to_string(r.event);
        if (extended) {
            out += "," + (r.age ? text::format_double(*r.age) : std::string());
            out += "," + (r.sex ? text::format_double(*r.sex) : std::string());
        }
        out += "\n";
    }
    return out;
}

void write_survival_csv(const std::filesystem::path& path, std::span<const SurvivalRecord> records) {
    text::write_file(path, format_survival_csv(records));
}

double KmCurve::at(double t) const {
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return 1.0;
    return survival[static_cast<std::size_t>(it - times.begin()) - 1];
}

KmCurve kaplan_meier(std::span<const SurvivalRecord> records) {
    if (records.empty()) throw Error(Errc::insufficient_data, "Kaplan-Meier estimate of an empty group");
    check_records(records);
    KmCurve km;
    double s = 1.0;
    for (double t : distinct_event_times(records)) {
        std::size_t n = 0, d = 0;
        for (const auto& r : records) {
            if (r.time >= t) ++n;
            if (r.time == t && r.event == 1) ++d;
        }
        s *= 1.0 - static_cast<double>(d) / static_cast<double>(n);
        km.times.push_back(t);
        km.survival.push_back(s);
        km.at_risk.push_back(n);
        km.events.push_back(d);
    }
    return km;
}

LogRankResult log_rank(const std::vector<Records>& groups) {
    const std::size_t k = groups.size();
    if (k < 2) throw Error(Errc::insufficient_data, "log-rank test needs at least two groups");
    Records pooled;
    for (std::size_t g = 0; g < k; ++g) {
        if (groups[g].empty()) throw Error(Errc::insufficient_data, "group " + std::to_string(g) + " is empty");
        check_records(groups[g]);
        pooled.insert(pooled.end(), groups[g].begin(), groups[g].end());
    }
    if (count_events(pooled) == 0) throw Error(Errc::insufficient_data, "log-rank test needs at least one event");

    LogRankResult res;
    res.df = k - 1;
    res.observed.assign(k, 0.0);
    res.expected.assign(k, 0.0);
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    std::vector<double> n_g(k), d_g(k);
    for (double t : distinct_event_times(pooled)) {
        double n = 0.0, d = 0.0;
        for (std::size_t g = 0; g < k; ++g) {
            n_g[g] = d_g[g] = 0.0;
            for (const auto& r : groups[g]) {
                if (r.time >= t) n_g[g] += 1.0;
                if (r.time == t && r.event == 1) d_g[g] += 1.0;
            }
            n += n_g[g];
            d += d_g[g];
        }
        for (std::size_t g = 0; g < k; ++g) {
            res.observed[g] += d_g[g];
            res.expected[g] += d * n_g[g] / n;
        }
        if (n <= 1.0) continue;
        const double spread = d * (n - d) / (n - 1.0);
        for (std::size_t g = 0; g < k; ++g)
            for (std::size_t h = 0; h < k; ++h)
                v(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(h)) +=
                    spread * (n_g[g] / n) * ((g == h ? 1.0 : 0.0) - n_g[h] / n);
    }
    // Drop the last group: the full covariance is singular by construction.
    const auto q = static_cast<Eigen::Index>(k - 1);
    Eigen::VectorXd diff(q);
    for (Eigen::Index g = 0; g < q; ++g)
        diff(g) = res.observed[static_cast<std::size_t>(g)] - res.expected[static_cast<std::size_t>(g)];
    const Eigen::MatrixXd vq = v.topLeftCorner(q, q);
    const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(vq);
    res.chi2 = std::max(0.0, diff.dot(cod.pseudoInverse() * diff));
    res.p = res.chi2 > 0.0 ? chi2_survival(res.chi2, static_cast<double>(res.df)) : 1.0;
    return res;
}

double cox_log_partial_likelihood(std::span<const SurvivalRecord> records, const Eigen::MatrixXd& x,
                                  const Eigen::VectorXd& beta) {
    if (static_cast<std::size_t>(x.rows()) != records.size() || x.cols() != beta.size())
        throw Error(Errc::shape, "covariate matrix does not match records or coefficients");
    return cox_state(records, x, beta, false).loglik;
}

CoxModel cox_fit(std::span<const SurvivalRecord> records, const Eigen::MatrixXd& x, const CoxConfig& cfg) {
    check_cox_inputs(records, x);
    const auto p = x.cols();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    CoxState state = cox_state(records, x, beta, true);
    CoxModel model;
    model.log_likelihood_history.push_back(state.loglik);

    if (singular(state.information))
        throw Error(Errc::collinearity, "Cox information matrix is singular; covariates are collinear");
    bool converged = false;
    for (std::size_t iter = 0; iter < cfg.max_iter; ++iter) {
        if (singular(state.information))
            throw Error(Errc::separation, "Cox information vanished away from beta = 0; likely complete separation");
        const Eigen::VectorXd newton = state.information.ldlt().solve(state.score);
        const double scale = 1.0 + beta.cwiseAbs().maxCoeff();
        if (state.score.norm() < cfg.gradient_tol && newton.cwiseAbs().maxCoeff() <= cfg.step_tol * scale) {
            converged = true;
            break;
        }
        Eigen::VectorXd step = newton;
        bool accepted = false;
        for (int halving = 0; halving < 60; ++halving, step *= 0.5) {
            const Eigen::VectorXd trial = beta + step;
            const double ll = cox_state(records, x, trial, false).loglik;
            if (ll > state.loglik) {
                beta = trial;
                accepted = true;
                break;
            }
        }
        ++model.iterations;
        check_separation(beta, cfg);
        if (!accepted) {
            // Newton still wants to move but no step gains likelihood: the
            // supremum lies at infinity.
            if (newton.cwiseAbs().maxCoeff() > 1e-4 * scale)
                throw Error(Errc::separation, "Cox likelihood is flat along the Newton direction; likely complete separation");
            converged = true;
            break;
        }
        state = cox_state(records, x, beta, true);
        model.log_likelihood_history.push_back(state.loglik);
    }
    if (!converged)
        throw Error(Errc::fit_failure, "Cox model did not converge in " + std::to_string(cfg.max_iter) + " iterations");
    check_separation(beta, cfg);
    if (singular(state.information))
        throw Error(Errc::separation, "Cox information matrix is singular at the optimum; likely complete separation");

    const Eigen::MatrixXd cov = state.information.inverse();
    model.beta = beta;
    model.log_partial_likelihood = state.loglik;
    model.se = cov.diagonal().array().sqrt();
    model.hazard_ratio = beta.array().exp();
    model.ci_lower = (beta.array() - 1.96 * model.se.array()).exp();
    model.ci_upper = (beta.array() + 1.96 * model.se.array()).exp();
    model.z = beta.array() / model.se.array();
    model.p.resize(p);
    for (Eigen::Index c = 0; c < p; ++c) model.p(c) = normal_two_sided_p(model.z(c));
    return model;
}

Concordance concordance_index(std::span<const double> risk, std::span<const SurvivalRecord> records,
                              std::size_t resamples, std::uint64_t seed) {
    if (risk.size() != records.size()) throw Error(Errc::shape, "risk and record counts differ");
    check_records(records);
    for (double r : risk)
        if (!std::isfinite(r)) throw Error(Errc::malformed_input, "risk scores must be finite");
    const std::size_t n = records.size();
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    const auto [comparable, halves] = harrell_counts(risk, records, all);
    if (comparable == 0) throw Error(Errc::no_comparable_pairs, "no comparable pairs for the concordance index");

    Concordance out;
    out.comparable = comparable;
    out.concordant_halves = halves;
    out.c = static_cast<double>(halves) / (2.0 * static_cast<double>(comparable));

    std::vector<double> boot;
    boot.reserve(resamples);
    std::vector<std::size_t> idx(n);
    for (std::size_t b = 0; b < resamples; ++b) {
        std::mt19937_64 rng(seed + b);
        for (auto& i : idx) i = static_cast<std::size_t>(rng() % n);
        const auto [bc, bh] = harrell_counts(risk, records, idx);
        if (bc > 0) boot.push_back(static_cast<double>(bh) / (2.0 * static_cast<double>(bc)));
    }
    out.bootstrap_used = boot.size();
    if (boot.size() > 1) {
        const double mean = std::accumulate(boot.begin(), boot.end(), 0.0) / static_cast<double>(boot.size());
        double ss = 0.0;
        for (double c : boot) ss += (c - mean) * (c - mean);
        out.se = std::sqrt(ss / static_cast<double>(boot.size() - 1));
    }
    return out;
}

PairwiseHr max_pairwise_hr(std::span<const SurvivalRecord> records, std::span<const std::size_t> labels,
                           bool adjust) {
    if (labels.size() != records.size()) throw Error(Errc::shape, "label and record counts differ");
    const auto clusters = sorted_labels(labels);
    if (clusters.size() < 2) throw Error(Errc::insufficient_data, "pairwise hazard ratios need at least two clusters");
    const bool covariates = adjust && has_covariates(records);

    std::optional<PairwiseHr> best;
    std::string last_failure = "no pair has an event";
    for (std::size_t a = 0; a < clusters.size(); ++a)
        for (std::size_t b = a + 1; b < clusters.size(); ++b) {
            Records subset;
            std::vector<double> indicator;
            for (std::size_t i = 0; i < records.size(); ++i)
                if (labels[i] == clusters[a] || labels[i] == clusters[b]) {
                    subset.push_back(records[i]);
                    indicator.push_back(labels[i] == clusters[b] ? 1.0 : 0.0);
                }
            Eigen::MatrixXd x(static_cast<Eigen::Index>(subset.size()), covariates ? 3 : 1);
            for (std::size_t i = 0; i < subset.size(); ++i) {
                const auto r = static_cast<Eigen::Index>(i);
                x(r, 0) = indicator[i];
                if (covariates) {
                    x(r, 1) = *subset[i].age;
                    x(r, 2) = *subset[i].sex;
                }
            }
            CoxModel fit;
            try {
                fit = cox_fit(subset, x);
            } catch (const Error& e) {
                last_failure = e.message();
                continue;
            }
            PairwiseHr row;
            if (fit.hazard_ratio(0) >= 1.0) {
                row = {clusters[b], clusters[a], fit.hazard_ratio(0), fit.ci_lower(0), fit.ci_upper(0), fit.p(0)};
            } else {
                row = {clusters[a], clusters[b], 1.0 / fit.hazard_ratio(0), 1.0 / fit.ci_upper(0),
                       1.0 / fit.ci_lower(0), fit.p(0)};
            }
            if (!best || row.hr > best->hr) best = row;
        }
    if (!best) throw Error(Errc::fit_failure, "no cluster pair admits a Cox fit: " + last_failure);
    return *best;
}

std::vector<double> cluster_risk_scores(std::span<const SurvivalRecord> records, std::span<const std::size_t> labels,
                                        bool adjust) {
    if (labels.size() != records.size()) throw Error(Errc::shape, "label and record counts differ");
    const auto clusters = sorted_labels(labels);
    std::vector<double> risk(records.size(), 0.0);
    if (clusters.size() < 2) return risk;
    const bool covariates = adjust && has_covariates(records);
    const auto q = static_cast<Eigen::Index>(clusters.size() - 1);
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(records.size()), q + (covariates ? 2 : 0));
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const auto pos = std::lower_bound(clusters.begin(), clusters.end(), labels[i]) - clusters.begin();
        if (pos > 0) x(r, pos - 1) = 1.0;
        if (covariates) {
            x(r, q) = *records[i].age;
            x(r, q + 1) = *records[i].sex;
        }
    }
    try {
        const Eigen::VectorXd eta = x * cox_fit(records, x).beta;
        risk.assign(eta.data(), eta.data() + eta.size());
    } catch (const Error&) {
        std::fill(risk.begin(), risk.end(), 0.0);
    }
    return risk;
}

std::string format_concordance(const Concordance& c) { return fixed(c.c, 3) + "±" + fixed(c.se, 3); }

std::string format_hazard_ratio(double hr, double lower, double upper) {
    return fixed(hr, 2) + " (" + fixed(lower, 2) + "-" + fixed(upper, 2) + ")";
}

std::string format_p_value(double p) { return p < 0.001 ? std::string("<0.001") : fixed(p, 3); }

}  // namespace phenoclust::survival
