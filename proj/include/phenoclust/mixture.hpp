#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace phenoclust::mml {

/// Gaussian mixture with full covariances.
struct MixtureModel {
    std::size_t dim = 0;
    std::vector<double> weights;
    std::vector<Eigen::VectorXd> means;
    std::vector<Eigen::MatrixXd> covariances;

    std::size_t components() const { return weights.size(); }
    /// Throws unless the weights lie on the simplex and every covariance is
    /// symmetric with a Cholesky factor.
    void validate() const;

    std::string to_json() const;
    static MixtureModel from_json(const std::string& doc);
    void save(const std::filesystem::path& path) const;
    static MixtureModel load(const std::filesystem::path& path);
};

/// Free parameters of one full-covariance component in d dimensions.
inline std::size_t parameters_per_component(std::size_t d) { return d + d * (d + 1) / 2; }

inline constexpr double kJitterScale = 1e-6;
inline constexpr int kJitterEscalations = 3;

/// Adds kJitterScale * mean(diag) * I, escalating by 10x (at most three
/// times) until the Cholesky factorization succeeds.
Eigen::MatrixXd regularize_covariance(const Eigen::MatrixXd& cov);

double log_gaussian_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov);

struct EStep {
    Eigen::MatrixXd responsibilities;  // n x c, rows sum to 1
    double log_likelihood = 0.0;
};

EStep e_step(const MixtureModel& model, const Eigen::MatrixXd& data);

/// Batch M-step with the MML weight rule: components whose responsibility
/// mass does not exceed half their parameter count are dropped.
MixtureModel m_step_annihilating(const Eigen::MatrixXd& resp, const Eigen::MatrixXd& data);

/// Two-part code length of `data` under `model`; zero-weight components cost
/// nothing.
double message_length(const MixtureModel& model, const Eigen::MatrixXd& data);
/// Same, reusing a log-likelihood that has already been computed.
double message_length(const MixtureModel& model, std::size_t n, double log_likelihood);

struct FitConfig {
    std::size_t k_max = 25;
    std::size_t k_min = 1;
    double tol = 1e-5;
    std::size_t max_iter = 100;
    std::uint64_t seed = 0;
    /// Component-wise updates; false switches to batch EM with the same weight rule.
    bool componentwise = true;
    /// Independent initializations (seeds seed, seed+1, ...); the shortest code wins.
    std::size_t restarts = 1;
};

struct TraceEntry {
    std::size_t restart = 0;
    /// Support-changing forced annihilations start a new segment.
    std::size_t segment = 0;
    std::size_t sweep = 0;  // 0 is the state at segment start
    std::size_t components = 0;  // after the sweep
    /// Some component's responsibility mass was at or below half its
    /// parameter count during the sweep, so the weight rule clamped it.
    bool thresholded = false;
    double log_likelihood = 0.0;
    double message_length = 0.0;
};

struct FitTrace {
    std::vector<TraceEntry> entries;
    std::size_t selected = 0;  // index into entries of the returned model
};

struct FitResult {
    MixtureModel model;  // components ordered by decreasing weight
    FitTrace trace;
    double message_length = 0.0;
    double log_likelihood = 0.0;
};

FitResult fit_mml(const Eigen::MatrixXd& data, const FitConfig& cfg = {});

struct Assignment {
    std::vector<std::size_t> labels;  // 0-based component index
    Eigen::MatrixXd responsibilities;
};

/// Posterior responsibilities and argmax labels (ties go to the lower index).
Assignment predict(const MixtureModel& model, const Eigen::MatrixXd& data);

}  // namespace phenoclust::mml
