#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace phenoclust::survival {

struct SurvivalRecord {
    std::string id;
    double time = 0.0;  // months
    int event = 0;      // 1 = death, 0 = censored
    std::optional<double> age;
    std::optional<double> sex;  // 0 or 1
};

using Records = std::vector<SurvivalRecord>;

/// `patient_id,time_months,event[,age,sex]`.
Records parse_survival_csv(std::string_view content, const std::string& source = "<survival>");
Records read_survival_csv(const std::filesystem::path& path);
std::string format_survival_csv(std::span<const SurvivalRecord> records);
void write_survival_csv(const std::filesystem::path& path, std::span<const SurvivalRecord> records);

/// Product-limit estimate evaluated at each distinct event time.
struct KmCurve {
    std::vector<double> times;
    std::vector<double> survival;  // S(t) just after each time
    std::vector<std::size_t> at_risk;
    std::vector<std::size_t> events;

    /// Step-function value at an arbitrary time.
    double at(double t) const;
};

KmCurve kaplan_meier(std::span<const SurvivalRecord> records);

struct LogRankResult {
    double chi2 = 0.0;
    std::size_t df = 0;
    double p = 1.0;
    std::vector<double> observed;
    std::vector<double> expected;
};

/// k-group log-rank test with the hypergeometric covariance of the
/// observed-minus-expected event counts.
LogRankResult log_rank(const std::vector<Records>& groups);

struct CoxConfig {
    std::size_t max_iter = 100;
    double gradient_tol = 1e-9;
    /// Convergence also needs the Newton step below step_tol * (1 + max|beta|);
    /// on a monotone likelihood the score vanishes while the step does not.
    double step_tol = 1e-6;
    double separation_limit = 20.0;
};

struct CoxModel {
    Eigen::VectorXd beta;
    Eigen::VectorXd se;
    Eigen::VectorXd hazard_ratio;
    Eigen::VectorXd ci_lower;
    Eigen::VectorXd ci_upper;
    Eigen::VectorXd z;
    Eigen::VectorXd p;
    double log_partial_likelihood = 0.0;
    std::vector<double> log_likelihood_history;  // one entry per accepted step, starting at beta = 0
    std::size_t iterations = 0;
};

/// Breslow log partial likelihood.
double cox_log_partial_likelihood(std::span<const SurvivalRecord> records, const Eigen::MatrixXd& x,
                                  const Eigen::VectorXd& beta);

/// Newton-Raphson with step halving from beta = 0.
CoxModel cox_fit(std::span<const SurvivalRecord> records, const Eigen::MatrixXd& x, const CoxConfig& cfg = {});

struct Concordance {
    double c = 0.5;
    double se = 0.0;  // bootstrap standard error
    std::uint64_t comparable = 0;
    std::uint64_t concordant_halves = 0;  // twice the concordant count, ties counted once
    std::size_t bootstrap_used = 0;
};

inline constexpr std::size_t kBootstrapResamples = 1000;

/// Harrell's C: higher risk should fail first. Bootstrap resample b draws
/// from a generator seeded with seed + b.
Concordance concordance_index(std::span<const double> risk, std::span<const SurvivalRecord> records,
                              std::size_t resamples = kBootstrapResamples, std::uint64_t seed = 0);

struct PairwiseHr {
    std::size_t higher = 0;  // cluster with the larger hazard
    std::size_t lower = 0;
    double hr = 1.0;
    double ci_lower = 1.0;
    double ci_upper = 1.0;
    double p = 1.0;
};

/// Largest hazard ratio over all cluster pairs, each from a Cox model on the
/// pair's members with a membership indicator (plus age and sex when
/// `adjust` is set and every record carries them).
PairwiseHr max_pairwise_hr(std::span<const SurvivalRecord> records, std::span<const std::size_t> labels,
                           bool adjust = false);

/// Linear predictor of a Cox model on cluster indicators (first cluster as
/// reference); all zeros when that model cannot be fitted.
std::vector<double> cluster_risk_scores(std::span<const SurvivalRecord> records, std::span<const std::size_t> labels,
                                        bool adjust = false);

/// "0.623±0.052"
std::string format_concordance(const Concordance& c);
/// "3.32 (1.35-8.18)"
std::string format_hazard_ratio(double hr, double lower, double upper);
/// Three decimals, "<0.001" below that.
std::string format_p_value(double p);

}  // namespace phenoclust::survival
