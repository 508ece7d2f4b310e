#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "phenoclust/autoencoder.hpp"
#include "phenoclust/feature_matrix.hpp"
#include "phenoclust/features.hpp"
#include "phenoclust/mixture.hpp"
#include "phenoclust/report.hpp"

namespace phenoclust::pipeline {

enum class InputMode { features, volumes };

/// Versioned JSON config ("phenoclust-config", version 1). Relative paths
/// resolve against the directory of the config file.
struct PipelineConfig {
    InputMode mode = InputMode::features;
    std::filesystem::path features_csv;  // features mode
    std::filesystem::path manifest;      // volumes mode: patient_id,volume,mask
    std::filesystem::path survival_csv;
    std::filesystem::path out_dir;

    features::ExtractionConfig extraction;
    ae::TrainConfig train;
    std::vector<std::size_t> hidden;  // empty: default widths for the input
    mml::FitConfig mixture;
    report::EvaluationConfig evaluation;
    /// Required; every stage derives its generator from it.
    std::optional<std::uint64_t> seed;

    static PipelineConfig from_json(const std::string& doc, const std::filesystem::path& base_dir = {});
    static PipelineConfig load(const std::filesystem::path& path);
    /// Full config including paths.
    std::string to_json() const;
    /// Parameters only, without paths, for embedding in reports.
    std::string parameters_json() const;
    void validate() const;
};

/// Each manifest row is extracted independently; rows keep manifest order.
FeatureMatrix extract_manifest(const std::filesystem::path& manifest, const features::ExtractionConfig& cfg);

ae::Checkpoint train_autoencoder(const FeatureMatrix& normalized, const ae::TrainConfig& cfg,
                                 const std::vector<std::size_t>& hidden = {});
/// Latent columns z1, z2, z3.
FeatureMatrix encode_features(const ae::Checkpoint& ckpt, const FeatureMatrix& normalized);

struct Clustering {
    mml::FitResult fit;
    mml::Assignment assignment;
};
Clustering cluster_latent(const FeatureMatrix& latent, const mml::FitConfig& cfg);

/// `patient_id,cluster,p1..pc` with 1-based clusters.
FeatureMatrix assignments_table(const std::vector<std::string>& ids, const mml::Assignment& a);
struct LoadedAssignments {
    std::vector<std::string> ids;
    std::vector<std::size_t> labels;  // 0-based
    Eigen::MatrixXd posteriors;
};
LoadedAssignments parse_assignments(const FeatureMatrix& table);
std::string format_trace_csv(const mml::FitTrace& trace);

struct PipelineResult {
    report::ClusterReport report;
    std::size_t selected_components = 0;
    std::vector<std::string> log;
};

using LogSink = std::function<void(const std::string&)>;

/// extract (volumes mode) -> normalize -> train/encode -> cluster -> evaluate.
/// Every artifact lands in cfg.out_dir. Survival data is opened only by the
/// final stage; failures carry the stage name and leave earlier artifacts in place.
PipelineResult run_pipeline(const PipelineConfig& cfg, const LogSink& sink = {});

}  // namespace phenoclust::pipeline
