#include "phenoclust/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "json.hpp"
#include "phenoclust/error.hpp"
#include "phenoclust/text.hpp"

namespace phenoclust::mml {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

struct Factor {
    Eigen::MatrixXd lower;
    double log_det = 0.0;
};

bool try_factor(const Eigen::MatrixXd& cov, Factor& out) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) return false;
    out.lower = llt.matrixL();
    const Eigen::VectorXd diag = out.lower.diagonal();
    if ((diag.array() <= 0.0).any() || !diag.allFinite()) return false;
    out.log_det = 2.0 * diag.array().log().sum();
    return true;
}

double mean_diagonal(const Eigen::MatrixXd& cov) { return cov.trace() / static_cast<double>(cov.rows()); }

// Factor as given, falling back to the escalating jitter ladder.
Factor factor_or_jitter(const Eigen::MatrixXd& cov) {
    Factor f;
    if (try_factor(cov, f)) return f;
    if (try_factor(regularize_covariance(cov), f)) return f;
    throw Error(Errc::singular_covariance, "covariance is not positive definite");
}

// Log density of every row of `data` under one component.
Eigen::VectorXd log_density_rows(const Eigen::MatrixXd& data, const Eigen::VectorXd& mean, const Factor& f) {
    Eigen::MatrixXd centered = (data.rowwise() - mean.transpose()).transpose();
    f.lower.triangularView<Eigen::Lower>().solveInPlace(centered);
    const Eigen::VectorXd maha = centered.colwise().squaredNorm().transpose();
    const double constant = -0.5 * (static_cast<double>(data.cols()) * kLog2Pi + f.log_det);
    return (constant - 0.5 * maha.array()).matrix();
}

Eigen::MatrixXd log_densities(const MixtureModel& model, const Eigen::MatrixXd& data) {
    Eigen::MatrixXd out(data.rows(), static_cast<Eigen::Index>(model.components()));
    for (std::size_t m = 0; m < model.components(); ++m)
        out.col(static_cast<Eigen::Index>(m)) =
            log_density_rows(data, model.means[m], factor_or_jitter(model.covariances[m]));
    return out;
}

// Row-wise normalized posteriors from log joint densities; returns the
// total log-likelihood.
double normalize_rows(const Eigen::MatrixXd& log_joint, Eigen::MatrixXd* resp) {
    double total = 0.0;
    if (resp) resp->resize(log_joint.rows(), log_joint.cols());
    for (Eigen::Index i = 0; i < log_joint.rows(); ++i) {
        const double shift = log_joint.row(i).maxCoeff();
        if (!std::isfinite(shift))
            throw Error(Errc::numeric, "sample " + std::to_string(i) + " has zero density under every component");
        const Eigen::RowVectorXd w = (log_joint.row(i).array() - shift).exp().matrix();
        const double s = w.sum();
        total += shift + std::log(s);
        if (resp) resp->row(i) = w / s;
    }
    return total;
}

Eigen::MatrixXd log_joint(const Eigen::MatrixXd& log_dens, const std::vector<double>& weights) {
    Eigen::MatrixXd out = log_dens;
    for (std::size_t m = 0; m < weights.size(); ++m)
        out.col(static_cast<Eigen::Index>(m)).array() += std::log(weights[m]);
    return out;
}

Eigen::MatrixXd population_covariance(const Eigen::MatrixXd& data, const Eigen::VectorXd& w, double mass,
                                      const Eigen::VectorXd& mean) {
    const Eigen::MatrixXd centered = data.rowwise() - mean.transpose();
    return (centered.transpose() * w.asDiagonal() * centered) / mass;
}

void check_data(const Eigen::MatrixXd& data) {
    if (data.rows() == 0 || data.cols() == 0) throw Error(Errc::insufficient_data, "empty data matrix");
    if (!data.allFinite()) throw Error(Errc::malformed_input, "data contains non-finite values");
}

void renormalize(std::vector<double>& weights) {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (!(total > 0.0)) throw Error(Errc::degenerate_model, "every component was annihilated");
    for (auto& a : weights) a /= total;
}

void erase_component(MixtureModel& model, Eigen::MatrixXd& log_dens, std::size_t m) {
    const auto k = static_cast<Eigen::Index>(model.components());
    const auto mi = static_cast<Eigen::Index>(m);
    model.weights.erase(model.weights.begin() + static_cast<std::ptrdiff_t>(m));
    model.means.erase(model.means.begin() + static_cast<std::ptrdiff_t>(m));
    model.covariances.erase(model.covariances.begin() + static_cast<std::ptrdiff_t>(m));
    if (mi + 1 < k) log_dens.middleCols(mi, k - mi - 1) = log_dens.rightCols(k - mi - 1).eval();
    log_dens.conservativeResize(Eigen::NoChange, k - 1);
}

// One pass over the components. Each step recomputes responsibilities,
// reweights component m by the annihilating rule (the others keep their
// proportions) and refits its mean and covariance. Returns true when some
// component fell to or below the annihilation threshold during the pass.
bool componentwise_sweep(MixtureModel& model, Eigen::MatrixXd& log_dens, const Eigen::MatrixXd& data) {
    const double half_np = 0.5 * static_cast<double>(parameters_per_component(model.dim));
    bool thresholded = false;
    std::size_t m = 0;
    while (m < model.components()) {
        Eigen::MatrixXd resp;
        normalize_rows(log_joint(log_dens, model.weights), &resp);
        const Eigen::VectorXd mass = resp.colwise().sum().transpose();
        const double support_total = (mass.array() - half_np).max(0.0).sum();
        thresholded = thresholded || (mass.array() <= half_np).any();
        const auto mi = static_cast<Eigen::Index>(m);
        const double alpha = mass(mi) > half_np ? (mass(mi) - half_np) / support_total : 0.0;
        const double others = 1.0 - model.weights[m];
        for (std::size_t j = 0; j < model.components(); ++j)
            model.weights[j] = j == m ? alpha : model.weights[j] * (1.0 - alpha) / others;
        if (alpha == 0.0) {
            erase_component(model, log_dens, m);
            renormalize(model.weights);
            continue;
        }
        const Eigen::VectorXd w = resp.col(mi);
        const Eigen::VectorXd mean = (data.transpose() * w) / mass(mi);
        model.means[m] = mean;
        model.covariances[m] = regularize_covariance(population_covariance(data, w, mass(mi), mean));
        log_dens.col(mi) = log_density_rows(data, mean, factor_or_jitter(model.covariances[m]));
        ++m;
    }
    return thresholded;
}

bool batch_sweep(MixtureModel& model, Eigen::MatrixXd& log_dens, const Eigen::MatrixXd& data) {
    Eigen::MatrixXd resp;
    normalize_rows(log_joint(log_dens, model.weights), &resp);
    const double half_np = 0.5 * static_cast<double>(parameters_per_component(model.dim));
    const bool thresholded = (resp.colwise().sum().array() <= half_np).any();
    model = m_step_annihilating(resp, data);
    log_dens = log_densities(model, data);
    return thresholded;
}

MixtureModel initial_model(const Eigen::MatrixXd& data, std::size_t k, std::uint64_t seed) {
    const auto n = static_cast<std::size_t>(data.rows());
    const auto d = static_cast<std::size_t>(data.cols());
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng() % (n - i)]);

    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(data.rows());
    const Eigen::VectorXd mean = data.colwise().mean().transpose();
    const Eigen::MatrixXd global = population_covariance(data, ones, static_cast<double>(n), mean);
    const Eigen::MatrixXd shrunk =
        regularize_covariance(global / std::pow(static_cast<double>(k), 2.0 / static_cast<double>(d)));

    MixtureModel model;
    model.dim = d;
    model.weights.assign(k, 1.0 / static_cast<double>(k));
    for (std::size_t m = 0; m < k; ++m) {
        model.means.emplace_back(data.row(static_cast<Eigen::Index>(idx[m])).transpose());
        model.covariances.push_back(shrunk);
    }
    return model;
}

// Every weight term of the code length is non-negative, i.e. each component
// carries at least 12 effective samples.
bool well_supported(const MixtureModel& model, std::size_t n) {
    return std::all_of(model.weights.begin(), model.weights.end(),
                       [&](double a) { return static_cast<double>(n) * a >= 12.0; });
}

struct Candidate {
    MixtureModel model;
    double length = std::numeric_limits<double>::infinity();
    double log_likelihood = 0.0;
    std::size_t trace_index = 0;
};

// Runs one initialization through the full annihilation schedule, updating
// `best` whenever a segment ends with a shorter code.
void run_restart(const Eigen::MatrixXd& data, const FitConfig& cfg, std::size_t restart, FitTrace& trace,
                 Candidate& best, Candidate& fallback) {
    const auto n = static_cast<std::size_t>(data.rows());
    MixtureModel model = initial_model(data, std::min(cfg.k_max, n), cfg.seed + restart);
    Eigen::MatrixXd log_dens = log_densities(model, data);

    auto record = [&](std::size_t segment, std::size_t sweep, bool thresholded) {
        const double ll = normalize_rows(log_joint(log_dens, model.weights), nullptr);
        const double len = message_length(model, n, ll);
        if (!std::isfinite(len)) throw Error(Errc::numeric, "message length is not finite");
        trace.entries.push_back({restart, segment, sweep, model.components(), thresholded, ll, len});
        return len;
    };

    for (std::size_t segment = 0;; ++segment) {
        double prev = record(segment, 0, false);
        bool converged = false;
        for (std::size_t sweep = 1; sweep <= cfg.max_iter && !converged; ++sweep) {
            const bool thresholded = cfg.componentwise ? componentwise_sweep(model, log_dens, data)
                                                       : batch_sweep(model, log_dens, data);
            const double len = record(segment, sweep, thresholded);
            converged = std::abs(prev - len) < cfg.tol * std::abs(prev);
            prev = len;
        }
        Candidate& slot = converged && well_supported(model, n) ? best : fallback;
        if (prev < slot.length) {
            slot.model = model;
            slot.length = prev;
            slot.log_likelihood = trace.entries.back().log_likelihood;
            slot.trace_index = trace.entries.size() - 1;
        }
        if (model.components() <= cfg.k_min) return;
        const auto weakest = static_cast<std::size_t>(
            std::min_element(model.weights.begin(), model.weights.end()) - model.weights.begin());
        erase_component(model, log_dens, weakest);
        renormalize(model.weights);
    }
}

void sort_by_weight(MixtureModel& model) {
    std::vector<std::size_t> order(model.components());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return model.weights[a] > model.weights[b]; });
    MixtureModel sorted;
    sorted.dim = model.dim;
    for (auto m : order) {
        sorted.weights.push_back(model.weights[m]);
        sorted.means.push_back(model.means[m]);
        sorted.covariances.push_back(model.covariances[m]);
    }
    model = std::move(sorted);
}

}  // namespace

Eigen::MatrixXd regularize_covariance(const Eigen::MatrixXd& cov) {
    const double base = kJitterScale * mean_diagonal(cov);
    double jitter = base;
    Factor f;
    for (int attempt = 0; attempt <= kJitterEscalations; ++attempt, jitter *= 10.0) {
        Eigen::MatrixXd reg = cov;
        reg.diagonal().array() += jitter;
        if (base > 0.0 && try_factor(reg, f)) return reg;
    }
    throw Error(Errc::singular_covariance,
                "covariance stays singular after " + std::to_string(kJitterEscalations) + " jitter escalations");
}

double log_gaussian_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
    if (x.size() != mean.size() || cov.rows() != x.size() || cov.cols() != x.size())
        throw Error(Errc::shape, "dimension mismatch in Gaussian density");
    const Factor f = factor_or_jitter(cov);
    return log_density_rows(x.transpose(), mean, f)(0);
}

void MixtureModel::validate() const {
    if (weights.empty()) throw Error(Errc::degenerate_model, "mixture has no components");
    if (dim == 0) throw Error(Errc::shape, "mixture dimension is zero");
    if (means.size() != weights.size() || covariances.size() != weights.size())
        throw Error(Errc::shape, "mixture parameter lists have different lengths");
    double total = 0.0;
    for (std::size_t m = 0; m < weights.size(); ++m) {
        if (!(weights[m] >= 0.0) || !std::isfinite(weights[m]))
            throw Error(Errc::malformed_input, "component " + std::to_string(m) + " has an invalid weight");
        total += weights[m];
        if (static_cast<std::size_t>(means[m].size()) != dim || static_cast<std::size_t>(covariances[m].rows()) != dim ||
            static_cast<std::size_t>(covariances[m].cols()) != dim)
            throw Error(Errc::shape, "component " + std::to_string(m) + " has the wrong dimension");
        if (!means[m].allFinite() || !covariances[m].allFinite())
            throw Error(Errc::malformed_input, "component " + std::to_string(m) + " holds non-finite parameters");
        const double scale = std::max(1.0, covariances[m].cwiseAbs().maxCoeff());
        if ((covariances[m] - covariances[m].transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
            throw Error(Errc::malformed_input, "covariance " + std::to_string(m) + " is not symmetric");
        Factor f;
        if (!try_factor(covariances[m], f))
            throw Error(Errc::singular_covariance, "covariance " + std::to_string(m) + " is not positive definite");
    }
    if (std::abs(total - 1.0) > 1e-12) throw Error(Errc::malformed_input, "weights do not sum to 1");
}

EStep e_step(const MixtureModel& model, const Eigen::MatrixXd& data) {
    model.validate();
    check_data(data);
    if (static_cast<std::size_t>(data.cols()) != model.dim)
        throw Error(Errc::shape, "data width " + std::to_string(data.cols()) + " does not match model dimension " +
                                     std::to_string(model.dim));
    EStep out;
    out.log_likelihood = normalize_rows(log_joint(log_densities(model, data), model.weights), &out.responsibilities);
    return out;
}

MixtureModel m_step_annihilating(const Eigen::MatrixXd& resp, const Eigen::MatrixXd& data) {
    check_data(data);
    if (resp.rows() != data.rows() || resp.cols() == 0)
        throw Error(Errc::shape, "responsibility matrix does not match the data");
    if (((resp.rowwise().sum().array() - 1.0).abs() > 1e-9).any() || (resp.array() < 0.0).any())
        throw Error(Errc::contract, "responsibility rows must be non-negative and sum to 1");
    const auto d = static_cast<std::size_t>(data.cols());
    const double half_np = 0.5 * static_cast<double>(parameters_per_component(d));

    MixtureModel model;
    model.dim = d;
    for (Eigen::Index m = 0; m < resp.cols(); ++m) {
        const Eigen::VectorXd w = resp.col(m);
        const double mass = w.sum();
        const double support = std::max(0.0, mass - half_np);
        if (support == 0.0) continue;
        const Eigen::VectorXd mean = (data.transpose() * w) / mass;
        model.weights.push_back(support);
        model.means.push_back(mean);
        model.covariances.push_back(regularize_covariance(population_covariance(data, w, mass, mean)));
    }
    if (model.weights.empty()) throw Error(Errc::degenerate_model, "every component was annihilated");
    renormalize(model.weights);
    return model;
}

double message_length(const MixtureModel& model, std::size_t n, double log_likelihood) {
    const double np = static_cast<double>(parameters_per_component(model.dim));
    const double nn = static_cast<double>(n);
    double weight_terms = 0.0;
    double alive = 0.0;
    for (double a : model.weights) {
        if (a <= 0.0) continue;
        weight_terms += std::log(nn * a / 12.0);
        alive += 1.0;
    }
    return 0.5 * np * weight_terms + 0.5 * alive * std::log(nn / 12.0) + alive * (np + 1.0) / 2.0 - log_likelihood;
}

double message_length(const MixtureModel& model, const Eigen::MatrixXd& data) {
    return message_length(model, static_cast<std::size_t>(data.rows()), e_step(model, data).log_likelihood);
}

FitResult fit_mml(const Eigen::MatrixXd& data, const FitConfig& cfg) {
    check_data(data);
    const auto n = static_cast<std::size_t>(data.rows());
    const auto d = static_cast<std::size_t>(data.cols());
    if (n <= d + 1)
        throw Error(Errc::insufficient_data,
                    "need more than " + std::to_string(d + 1) + " samples, got " + std::to_string(n));
    if (cfg.k_min < 1 || cfg.k_max < cfg.k_min)
        throw Error(Errc::malformed_input, "require 1 <= k_min <= k_max");
    if (n <= cfg.k_min) throw Error(Errc::insufficient_data, "sample count must exceed k_min");
    if (cfg.max_iter < 1) throw Error(Errc::malformed_input, "max_iter must be >= 1");
    if (!(cfg.tol > 0.0)) throw Error(Errc::malformed_input, "tolerance must be positive");
    if (cfg.restarts < 1) throw Error(Errc::malformed_input, "restarts must be >= 1");

    FitResult result;
    Candidate best, fallback;
    std::string last_failure;
    for (std::size_t r = 0; r < cfg.restarts; ++r) {
        try {
            run_restart(data, cfg, r, result.trace, best, fallback);
        } catch (const Error& e) {
            if (!e.is_numeric()) throw;
            last_failure = e.message();
        }
    }
    if (!std::isfinite(best.length)) best = std::move(fallback);
    if (!std::isfinite(best.length))
        throw Error(Errc::fit_failure, "no mixture candidate survived: " + last_failure);
    sort_by_weight(best.model);
    result.model = std::move(best.model);
    result.message_length = best.length;
    result.log_likelihood = best.log_likelihood;
    result.trace.selected = best.trace_index;
    return result;
}

Assignment predict(const MixtureModel& model, const Eigen::MatrixXd& data) {
    Assignment out;
    out.responsibilities = e_step(model, data).responsibilities;
    out.labels.resize(static_cast<std::size_t>(data.rows()));
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        Eigen::Index arg = 0;
        for (Eigen::Index m = 1; m < out.responsibilities.cols(); ++m)
            if (out.responsibilities(i, m) > out.responsibilities(i, arg)) arg = m;
        out.labels[static_cast<std::size_t>(i)] = static_cast<std::size_t>(arg);
    }
    return out;
}

namespace {
constexpr const char* kModelFormat = "phenoclust-gmm";
constexpr int kModelVersion = 1;
}  // namespace

std::string MixtureModel::to_json() const {
    nlohmann::ordered_json doc;
    doc["format"] = kModelFormat;
    doc["version"] = kModelVersion;
    doc["components"] = components();
    doc["dim"] = dim;
    doc["weights"] = weights;
    auto& mu = doc["means"] = nlohmann::ordered_json::array();
    auto& sigma = doc["covariances"] = nlohmann::ordered_json::array();
    for (std::size_t m = 0; m < components(); ++m) {
        mu.push_back(std::vector<double>(means[m].data(), means[m].data() + means[m].size()));
        std::vector<double> flat;
        for (Eigen::Index r = 0; r < covariances[m].rows(); ++r)
            for (Eigen::Index c = 0; c < covariances[m].cols(); ++c) flat.push_back(covariances[m](r, c));
        sigma.push_back(flat);
    }
    return doc.dump() + "\n";
}

MixtureModel MixtureModel::from_json(const std::string& text_doc) {
    try {
        const auto doc = nlohmann::json::parse(text_doc);
        if (doc.at("format") != kModelFormat) throw Error(Errc::malformed_input, "not a mixture model document");
        if (doc.at("version") != kModelVersion)
            throw Error(Errc::malformed_input, "unsupported mixture model version " + doc.at("version").dump());
        MixtureModel model;
        model.dim = doc.at("dim").get<std::size_t>();
        model.weights = doc.at("weights").get<std::vector<double>>();
        const auto c = doc.at("components").get<std::size_t>();
        const auto& mu = doc.at("means");
        const auto& sigma = doc.at("covariances");
        if (model.weights.size() != c || mu.size() != c || sigma.size() != c)
            throw Error(Errc::malformed_input, "component count disagrees with parameter lists");
        const auto d = static_cast<Eigen::Index>(model.dim);
        for (std::size_t m = 0; m < c; ++m) {
            const auto mean = mu[m].get<std::vector<double>>();
            const auto flat = sigma[m].get<std::vector<double>>();
            if (mean.size() != model.dim || flat.size() != model.dim * model.dim)
                throw Error(Errc::malformed_input, "component " + std::to_string(m) + " has the wrong dimension");
            model.means.emplace_back(Eigen::Map<const Eigen::VectorXd>(mean.data(), d));
            model.covariances.emplace_back(
                Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(flat.data(),
                                                                                                          d, d));
        }
        model.validate();
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::malformed_input, std::string("mixture model: ") + e.what());
    }
}

void MixtureModel::save(const std::filesystem::path& path) const { text::write_file(path, to_json()); }

MixtureModel MixtureModel::load(const std::filesystem::path& path) { return from_json(text::read_file(path)); }

}  // namespace phenoclust::mml
