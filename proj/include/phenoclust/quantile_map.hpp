#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "phenoclust/feature_matrix.hpp"

namespace phenoclust::normalization {

/// The seven permitted output codes, k / 6 for k = 0..6.
inline constexpr std::array<double, 7> kCodes = {0.0,       1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0,
                                                 4.0 / 6.0, 5.0 / 6.0, 1.0};

/// Fitted cut points of one feature column.
struct ColumnQuantiles {
    std::string name;
    double min = 0.0;
    std::array<double, 5> cuts{};  // 5th, 25th, 50th, 75th, 95th percentiles
    double max = 0.0;

    bool constant() const { return min == max; }
    /// Interval index 0..6 for x; left-open/right-closed at the interior cuts,
    /// with anything at or above the fitted maximum mapped to 6.
    int code_index(double x) const;
};

struct QuantileMap {
    std::size_t n_samples = 0;
    std::vector<ColumnQuantiles> columns;

    std::string to_json() const;
    static QuantileMap from_json(const std::string& doc);
    void save(const std::filesystem::path& path) const;
    static QuantileMap load(const std::filesystem::path& path);
};

/// Per-column 5/25/50/75/95 percentiles (linear rule) plus min/max.
QuantileMap fit_quantiles(const FeatureMatrix& raw);

/// Maps each value to its code in kCodes. Columns must match the fitted map
/// by name and order; values outside the fitted range clamp to 0 or 1.
FeatureMatrix apply_quantile_map(const QuantileMap& map, const FeatureMatrix& raw);

}  // namespace phenoclust::normalization
