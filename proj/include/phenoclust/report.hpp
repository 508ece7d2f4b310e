#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phenoclust/survival.hpp"

namespace phenoclust::report {

inline constexpr double kSignificance = 0.05;

struct EvaluationConfig {
    std::size_t bootstrap = survival::kBootstrapResamples;
    std::uint64_t seed = 0;
    /// Adds age and sex to every Cox model when all records carry them.
    bool adjust = false;
    double plot_horizon = 36.0;
};

/// Cluster assignments joined with outcomes and the statistics derived from them.
/// Cluster k in labels is reported as "k + 1".
struct ClusterReport {
    std::string method = "AE+GMM+MML";
    std::vector<std::string> ids;
    std::vector<std::size_t> labels;
    Eigen::MatrixXd posteriors;  // n x components
    std::vector<std::size_t> sizes;  // per fitted component, possibly 0
    std::vector<survival::KmCurve> km;  // per component; empty curve when size is 0
    std::optional<survival::LogRankResult> log_rank;
    std::optional<survival::PairwiseHr> max_hr;
    std::optional<survival::Concordance> concordance;
    bool adjusted = false;
    double plot_horizon = 36.0;
    std::vector<std::string> notes;

    std::size_t components() const { return sizes.size(); }
    /// Components with at least one assigned patient.
    std::size_t occupied() const;
};

/// Joins outcomes to `ids` by patient id (every id needs a record; extra
/// records are ignored) and computes the per-cluster statistics. Outcome
/// data enters the pipeline here and nowhere earlier.
ClusterReport build_report(const std::vector<std::string>& ids, const std::vector<std::size_t>& labels,
                           const Eigen::MatrixXd& posteriors, const survival::Records& records,
                           const EvaluationConfig& cfg = {});

/// "46, 41 and 21"
std::string format_cluster_sizes(const std::vector<std::size_t>& sizes);

/// p with a trailing "*" below kSignificance.
std::string format_p_with_star(double p);

std::string report_json(const ClusterReport& r, const std::string& config_echo_json = "");
/// Plain-text table with the columns method | CI | HR | p.
std::string report_table(const ClusterReport& r);

/// `cluster,time,survival,at_risk,events`, one row per cluster event time.
std::string km_csv(const ClusterReport& r);
/// Overlaid step curves, one <path> per occupied cluster, legend and
/// log-rank annotation.
std::string km_svg(const ClusterReport& r);
void emit_km_artifacts(const ClusterReport& r, const std::filesystem::path& out_dir);

}  // namespace phenoclust::report
