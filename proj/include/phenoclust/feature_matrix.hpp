#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace phenoclust {

/// n_patients x n_features table with named columns. Used for raw,
/// normalized and latent features alike.
struct FeatureMatrix {
    std::vector<std::string> ids;
    std::vector<std::string> columns;
    Eigen::MatrixXd values;

    std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }

    /// Shape consistency, unique ids and column names, finite values.
    void validate() const;
};

/// CSV with header `patient_id,<columns...>`.
FeatureMatrix parse_feature_csv(std::string_view content, const std::string& source = "<memory>");
FeatureMatrix read_feature_csv(const std::filesystem::path& path);
std::string format_feature_csv(const FeatureMatrix& m);
void write_feature_csv(const std::filesystem::path& path, const FeatureMatrix& m);

}  // namespace phenoclust
