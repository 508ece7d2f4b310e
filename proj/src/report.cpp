#include "phenoclust/report.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <sstream>

#include "json.hpp"
#include "phenoclust/error.hpp"
#include "phenoclust/text.hpp"

namespace phenoclust::report {

using nlohmann::ordered_json;

namespace {

std::string fixed(double x, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    return buf;
}

// Display width of UTF-8 text: continuation bytes do not count.
std::size_t display_width(const std::string& s) {
    return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) {
        return (static_cast<unsigned char>(c) & 0xC0) != 0x80;
    }));
}

std::string pad(const std::string& s, std::size_t width) {
    const std::size_t w = display_width(s);
    return w >= width ? s + " " : s + std::string(width - w, ' ');
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

ordered_json doubles(const std::vector<double>& v) { return ordered_json(v); }

}  // namespace

std::size_t ClusterReport::occupied() const {
    return static_cast<std::size_t>(std::count_if(sizes.begin(), sizes.end(), [](std::size_t s) { return s > 0; }));
}

ClusterReport build_report(const std::vector<std::string>& ids, const std::vector<std::size_t>& labels,
                           const Eigen::MatrixXd& posteriors, const survival::Records& records,
                           const EvaluationConfig& cfg) {
    if (ids.size() != labels.size() || static_cast<Eigen::Index>(ids.size()) != posteriors.rows())
        throw Error(Errc::shape, "ids, labels and posteriors disagree on the number of patients");
    if (ids.empty()) throw Error(Errc::contract, "cannot evaluate an empty assignment");
    const auto c = static_cast<std::size_t>(posteriors.cols());
    for (std::size_t l : labels)
        if (l >= c) throw Error(Errc::contract, "cluster label outside the fitted components");

    std::map<std::string, const survival::SurvivalRecord*> by_id;
    for (const auto& r : records) by_id.emplace(r.id, &r);
    survival::Records aligned;
    for (const auto& id : ids) {
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw Error(Errc::malformed_input, "no survival record for patient '" + id + "'");
        aligned.push_back(*it->second);
    }

    ClusterReport rep;
    rep.ids = ids;
    rep.labels = labels;
    rep.posteriors = posteriors;
    rep.plot_horizon = cfg.plot_horizon;
    rep.sizes.assign(c, 0);
    for (std::size_t l : labels) ++rep.sizes[l];

    std::vector<survival::Records> groups(c);
    for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(aligned[i]);
    std::vector<survival::Records> occupied;
    for (const auto& g : groups) {
        rep.km.push_back(g.empty() ? survival::KmCurve{} : survival::kaplan_meier(g));
        if (!g.empty()) occupied.push_back(g);
    }

    rep.adjusted = cfg.adjust && std::all_of(aligned.begin(), aligned.end(), [](const auto& r) {
                       return r.age.has_value() && r.sex.has_value();
                   });
    if (cfg.adjust && !rep.adjusted) rep.notes.push_back("age/sex adjustment requested but covariates are missing");

    if (occupied.size() < 2) {
        rep.notes.push_back("a single occupied cluster: log-rank test and hazard ratios not applicable");
        return rep;
    }
    try {
        rep.log_rank = survival::log_rank(occupied);
    } catch (const Error& e) {
        rep.notes.push_back(std::string("log-rank: ") + e.message());
    }
    try {
        rep.max_hr = survival::max_pairwise_hr(aligned, labels, rep.adjusted);
    } catch (const Error& e) {
        rep.notes.push_back(std::string("hazard ratio: ") + e.message());
    }
    try {
        const auto risk = survival::cluster_risk_scores(aligned, labels, rep.adjusted);
        rep.concordance = survival::concordance_index(risk, aligned, cfg.bootstrap, cfg.seed);
    } catch (const Error& e) {
        rep.notes.push_back(std::string("concordance: ") + e.message());
    }
    return rep;
}

std::string format_cluster_sizes(const std::vector<std::size_t>& sizes) {
    std::string out;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (i > 0) out += i + 1 == sizes.size() ? " and " : ", ";
        out += std::to_string(sizes[i]);
    }
    return out;
}

std::string format_p_with_star(double p) {
    return survival::format_p_value(p) + (p < kSignificance ? "*" : "");
}

std::string report_json(const ClusterReport& r, const std::string& config_echo_json) {
    ordered_json doc;
    doc["format"] = "phenoclust-report";
    doc["version"] = 1;
    doc["method"] = r.method;
    doc["patients"] = r.ids.size();
    doc["components"] = r.components();
    doc["cluster_sizes"] = r.sizes;
    doc["cluster_sizes_text"] = format_cluster_sizes(r.sizes);
    if (r.log_rank) {
        doc["log_rank"] = {{"chi2", r.log_rank->chi2},
                           {"df", r.log_rank->df},
                           {"p", r.log_rank->p},
                           {"observed", doubles(r.log_rank->observed)},
                           {"expected", doubles(r.log_rank->expected)}};
    } else {
        doc["log_rank"] = nullptr;
    }
    if (r.max_hr) {
        const auto& h = *r.max_hr;
        doc["max_pairwise_hr"] = {{"higher_risk_cluster", h.higher + 1},
                                  {"lower_risk_cluster", h.lower + 1},
                                  {"hr", h.hr},
                                  {"ci_lower", h.ci_lower},
                                  {"ci_upper", h.ci_upper},
                                  {"p", h.p},
                                  {"formatted", survival::format_hazard_ratio(h.hr, h.ci_lower, h.ci_upper)}};
    } else {
        doc["max_pairwise_hr"] = nullptr;
    }
    if (r.concordance) {
        doc["concordance"] = {{"c", r.concordance->c},
                              {"se", r.concordance->se},
                              {"comparable_pairs", r.concordance->comparable},
                              {"bootstrap_resamples", r.concordance->bootstrap_used},
                              {"formatted", survival::format_concordance(*r.concordance)}};
    } else {
        doc["concordance"] = nullptr;
    }
    doc["adjusted_for"] = r.adjusted ? ordered_json::array({"age", "sex"}) : ordered_json::array();

    ordered_json km = ordered_json::array();
    for (std::size_t k = 0; k < r.km.size(); ++k) {
        if (r.sizes[k] == 0) continue;
        km.push_back({{"cluster", k + 1},
                      {"times", doubles(r.km[k].times)},
                      {"survival", doubles(r.km[k].survival)},
                      {"at_risk", r.km[k].at_risk},
                      {"events", r.km[k].events}});
    }
    doc["kaplan_meier"] = km;

    ordered_json rows = ordered_json::array();
    for (std::size_t i = 0; i < r.ids.size(); ++i) {
        std::vector<double> post(static_cast<std::size_t>(r.posteriors.cols()));
        for (std::size_t k = 0; k < post.size(); ++k) post[k] = r.posteriors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
        rows.push_back({{"patient_id", r.ids[i]}, {"cluster", r.labels[i] + 1}, {"posterior", post}});
    }
    doc["assignments"] = rows;
    doc["notes"] = r.notes;
    if (!config_echo_json.empty()) doc["config"] = ordered_json::parse(config_echo_json);
    return doc.dump(2) + "\n";
}

std::string report_table(const ClusterReport& r) {
    const std::array<std::size_t, 4> w{14, 15, 20, 8};
    std::ostringstream out;
    out << pad("Method", w[0]) << pad("CI", w[1]) << pad("HR", w[2]) << "p\n";
    const std::string ci = r.concordance ? survival::format_concordance(*r.concordance) : "n/a";
    const std::string hr = r.max_hr ? survival::format_hazard_ratio(r.max_hr->hr, r.max_hr->ci_lower, r.max_hr->ci_upper)
                                    : "n/a";
    const std::string p = r.max_hr ? format_p_with_star(r.max_hr->p) : "n/a";
    out << pad(r.method, w[0]) << pad(ci, w[1]) << pad(hr, w[2]) << p << "\n\n";

    out << "Clusters: " << r.occupied() << " occupied of " << r.components() << " fitted ("
        << format_cluster_sizes(r.sizes) << " patients)\n";
    if (r.log_rank)
        out << "Log-rank: chi2 = " << fixed(r.log_rank->chi2, 3) << ", df = " << r.log_rank->df
            << ", p " << (r.log_rank->p < 0.001 ? "< " : "= ") << format_p_with_star(r.log_rank->p).substr(r.log_rank->p < 0.001 ? 1 : 0)
            << "\n";
    if (r.max_hr)
        out << "Maximum pairwise HR: cluster " << r.max_hr->higher + 1 << " vs cluster " << r.max_hr->lower + 1 << "\n";
    if (r.adjusted) out << "Cox models adjusted for age and sex\n";
    for (const auto& n : r.notes) out << "Note: " << n << "\n";
    out << "* p < " << fixed(kSignificance, 2) << "\n";
    return out.str();
}

std::string km_csv(const ClusterReport& r) {
    std::string out = "cluster,time,survival,at_risk,events\n";
    for (std::size_t k = 0; k < r.km.size(); ++k) {
        const auto& km = r.km[k];
        for (std::size_t i = 0; i < km.times.size(); ++i)
            out += std::to_string(k + 1) + "," + text::format_double(km.times[i]) + "," +
                   text::format_double(km.survival[i]) + "," + std::to_string(km.at_risk[i]) + "," +
                   std::to_string(km.events[i]) + "\n";
    }
    return out;
}

std::string km_svg(const ClusterReport& r) {
    static const std::array<const char*, 8> palette{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                    "#9467bd", "#8c564b", "#e377c2", "#17becf"};
    const double width = 640, height = 420, left = 60, right = 170, top = 30, bottom = 50;
    const double pw = width - left - right, ph = height - top - bottom;
    double t_max = r.plot_horizon;
    for (const auto& km : r.km)
        if (!km.times.empty()) t_max = std::max(t_max, km.times.back());
    const auto sx = [&](double t) { return fixed(left + pw * t / t_max, 2); };
    const auto sy = [&](double s) { return fixed(top + ph * (1.0 - s), 2); };

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << " " << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
        << "  <title>Kaplan-Meier survival by cluster (" << xml_escape(r.method) << ")</title>\n"
        << "  <rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";

    svg << "  <g stroke=\"black\" stroke-width=\"1\">\n"
        << "    <line x1=\"" << sx(0) << "\" y1=\"" << sy(0) << "\" x2=\"" << sx(t_max) << "\" y2=\"" << sy(0) << "\"/>\n"
        << "    <line x1=\"" << sx(0) << "\" y1=\"" << sy(0) << "\" x2=\"" << sx(0) << "\" y2=\"" << sy(1) << "\"/>\n"
        << "  </g>\n  <g text-anchor=\"middle\">\n";
    const double tick = t_max <= 48.0 ? 6.0 : 12.0;
    for (double t = 0.0; t <= t_max + 1e-9; t += tick)
        svg << "    <text x=\"" << sx(t) << "\" y=\"" << fixed(top + ph + 18, 2) << "\">" << fixed(t, 0) << "</text>\n";
    svg << "    <text x=\"" << sx(t_max / 2) << "\" y=\"" << fixed(height - 10, 2) << "\">Months</text>\n  </g>\n"
        << "  <g text-anchor=\"end\">\n";
    for (int i = 0; i <= 4; ++i)
        svg << "    <text x=\"" << fixed(left - 6, 2) << "\" y=\"" << fixed(top + ph * (1.0 - i / 4.0) + 4, 2) << "\">"
            << fixed(i / 4.0, 2) << "</text>\n";
    svg << "  </g>\n"
        << "  <text x=\"16\" y=\"" << fixed(top + ph / 2, 2) << "\" transform=\"rotate(-90 16 " << fixed(top + ph / 2, 2)
        << ")\" text-anchor=\"middle\">Survival probability</text>\n";

    std::size_t slot = 0;
    for (std::size_t k = 0; k < r.km.size(); ++k) {
        if (r.sizes[k] == 0) continue;
        const auto& km = r.km[k];
        const char* colour = palette[k % palette.size()];
        std::string d = "M " + sx(0) + " " + sy(1);
        for (std::size_t i = 0; i < km.times.size(); ++i)
            d += " H " + sx(km.times[i]) + " V " + sy(km.survival[i]);
        d += " H " + sx(t_max);
        svg << "  <path d=\"" << d << "\" fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
        const double ly = top + 10 + 20.0 * static_cast<double>(slot++);
        svg << "  <line x1=\"" << fixed(width - right + 15, 2) << "\" y1=\"" << fixed(ly, 2) << "\" x2=\""
            << fixed(width - right + 40, 2) << "\" y2=\"" << fixed(ly, 2) << "\" stroke=\"" << colour
            << "\" stroke-width=\"2\"/>\n"
            << "  <text x=\"" << fixed(width - right + 46, 2) << "\" y=\"" << fixed(ly + 4, 2) << "\">Cluster " << k + 1
            << " (n=" << r.sizes[k] << ")</text>\n";
    }
    const std::string annotation =
        r.log_rank ? "Log-rank p " + (r.log_rank->p < 0.001 ? std::string("< 0.001") : "= " + survival::format_p_value(r.log_rank->p))
                   : "Log-rank: n/a";
    svg << "  <text x=\"" << fixed(width - right + 15, 2) << "\" y=\"" << fixed(top + 20.0 * static_cast<double>(slot) + 24, 2)
        << "\">" << xml_escape(annotation) << "</text>\n</svg>\n";
    return svg.str();
}

void emit_km_artifacts(const ClusterReport& r, const std::filesystem::path& out_dir) {
    if (r.occupied() == 0) throw Error(Errc::contract, "report has no cluster curves to plot");
    text::write_file(out_dir / "km.csv", km_csv(r));
    text::write_file(out_dir / "km.svg", km_svg(r));
}

}  // namespace phenoclust::report
