#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "phenoclust/feature_matrix.hpp"
#include "phenoclust/survival.hpp"
#include "phenoclust/volume.hpp"

namespace phenoclust::cohort {

inline constexpr double kFollowUpHorizon = 36.0;  // months

struct SyntheticCohortSpec {
    std::size_t n = 108;
    std::vector<std::size_t> sizes{46, 41, 21};
    /// Distance scale between cluster centres in the planted 3-D factor
    /// space; 0 makes the clusters indistinguishable.
    double separation = 8.0;
    /// Within-cluster standard deviation of the factors.
    double factor_sd = 0.2;
    /// Feature-specific noise added after the factor loadings.
    double noise_sd = 1.0;
    /// Exponential event rates per month, one per cluster.
    std::vector<double> hazards{0.03, 0.0375, 0.12};
    double horizon = kFollowUpHorizon;
    /// Independent censoring times are uniform on [0, censor_max].
    double censor_max = 120.0;
    std::size_t features = 28;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticCohort {
    FeatureMatrix features;  // raw, un-normalized
    survival::Records survival;
    std::vector<std::size_t> labels;  // true cluster, 0-based, aligned with features.ids
};

/// Patients get ids P001, P002, ... in row order; cluster membership is
/// shuffled across ids. Age and sex are drawn independently of cluster and outcome.
SyntheticCohort generate_synthetic_cohort(const SyntheticCohortSpec& spec);

/// Same cohort with equal hazards and no separation.
SyntheticCohortSpec null_spec(const SyntheticCohortSpec& base);

struct Phantom {
    features::Volume volume;
    features::Mask mask;
};

/// Ellipsoidal lesion on an anisotropic grid. Clusters differ in size,
/// elongation and texture heterogeneity, scaled by `separation`.
Phantom generate_phantom(std::size_t cluster, double separation, std::mt19937_64& rng);

/// Writes one VOL1 volume and mask per patient under `dir` plus
/// `dir/manifest.csv` (`patient_id,volume,mask`, paths relative to `dir`).
/// Returns the manifest path.
std::filesystem::path write_phantom_bundles(const std::filesystem::path& dir, const SyntheticCohort& cohort,
                                            double separation, std::uint64_t seed);

}  // namespace phenoclust::cohort
