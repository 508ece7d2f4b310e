#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "phenoclust/volume.hpp"

namespace phenoclust::features {

enum class Category { intensity, shape, texture };

const char* category_name(Category c);

/// Named per-patient feature tuple. `provenance` echoes the stage
/// parameters used to produce it.
struct FeatureVector {
    std::vector<std::string> names;
    std::vector<double> values;
    std::vector<Category> categories;
    std::map<std::string, std::string> provenance;

    std::size_t size() const { return values.size(); }
    void append(std::string name, double value, Category category);
    void append(const FeatureVector& other);
    double get(const std::string& name) const;
};

inline constexpr std::size_t kFirstOrderCount = 14;
inline constexpr std::size_t kShapeCount = 6;
inline constexpr std::size_t kGlcmCount = 8;
inline constexpr std::size_t kFeatureCount = kFirstOrderCount + kShapeCount + kGlcmCount;

/// Names in extraction order: 14 first-order, 6 shape, 8 GLCM.
const std::vector<std::string>& feature_names();

/// Intensity statistics over masked voxels. Entropy uses the histogram of
/// `discretize(v, m, bin_width)`.
FeatureVector first_order_features(const Volume& v, const Mask& m, double bin_width = 5.0);

/// Geometry of the mask on a grid with `spacing`; independent of intensities.
FeatureVector shape_features(const Mask& m, const Spacing& spacing);

/// Unit offsets (dx, dy, dz) of the 13 unique 3D directions at distance 1.
const std::array<std::array<int, 3>, 13>& glcm_directions();

/// Raw symmetric pair counts per direction. counts[d] is an Ng x Ng row-major
/// matrix indexed by (bin - 1); Ng is the largest masked bin.
struct GlcmCounts {
    std::size_t levels = 0;
    std::vector<std::vector<double>> counts;
};

GlcmCounts glcm_counts(const Volume& binned, const Mask& m);

/// The 8 texture statistics of one normalized, symmetric co-occurrence matrix.
std::array<double, kGlcmCount> glcm_statistics(const std::vector<double>& probabilities, std::size_t levels);

/// Texture statistics averaged over the directions that have at least one pair.
FeatureVector glcm_features(const Volume& binned, const Mask& m);

struct ExtractionConfig {
    bool resample = true;
    Spacing target_spacing{3.0, 3.0, 3.0};
    double bin_width = 5.0;
};

/// resample -> z-normalize/cap -> discretize -> first-order | shape | GLCM.
FeatureVector extract_feature_vector(const Volume& v, const Mask& m, const ExtractionConfig& cfg = {});

}  // namespace phenoclust::features
