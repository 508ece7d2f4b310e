#include "phenoclust/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"
#include "phenoclust/error.hpp"
#include "phenoclust/quantile_map.hpp"
#include "phenoclust/survival.hpp"
#include "phenoclust/text.hpp"
#include "phenoclust/volume.hpp"

namespace phenoclust::pipeline {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kConfigFormat = "phenoclust-config";
constexpr int kConfigVersion = 1;

void check_keys(const ordered_json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw Error(Errc::schema, where + " must be an object");
    for (const auto& [key, value] : obj.items())
        if (!allowed.count(key)) throw Error(Errc::schema, "unknown key '" + key + "' in " + where);
}

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

ordered_json parameters(const PipelineConfig& c) {
    ordered_json doc;
    doc["format"] = kConfigFormat;
    doc["version"] = kConfigVersion;
    if (c.seed) doc["seed"] = *c.seed;
    doc["extraction"] = {{"resample", c.extraction.resample},
                         {"target_spacing", c.extraction.target_spacing},
                         {"bin_width", c.extraction.bin_width}};
    doc["autoencoder"] = {{"epochs", c.train.epochs},
                          {"batch_size", c.train.batch_size},
                          {"learning_rate", c.train.adam.learning_rate},
                          {"beta1", c.train.adam.beta1},
                          {"beta2", c.train.adam.beta2},
                          {"epsilon", c.train.adam.epsilon},
                          {"loss", c.train.loss},
                          {"hidden", c.hidden}};
    doc["mixture"] = {{"k_max", c.mixture.k_max},
                      {"k_min", c.mixture.k_min},
                      {"tol", c.mixture.tol},
                      {"max_iter", c.mixture.max_iter},
                      {"restarts", c.mixture.restarts},
                      {"update", c.mixture.componentwise ? "componentwise" : "batch"}};
    doc["evaluation"] = {{"bootstrap", c.evaluation.bootstrap},
                         {"adjust_age_sex", c.evaluation.adjust},
                         {"plot_horizon", c.evaluation.plot_horizon}};
    return doc;
}

template <typename T>
void read_if(const ordered_json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

class StageLog {
public:
    StageLog(const fs::path& file, const LogSink& sink, std::vector<std::string>& lines)
        : out_(file, std::ios::trunc), sink_(sink), lines_(lines) {
        if (!out_) throw Error(Errc::io, "cannot write " + file.string());
    }
    void operator()(const std::string& line) {
        out_ << line << '\n';
        out_.flush();
        lines_.push_back(line);
        if (sink_) sink_(line);
    }

private:
    std::ofstream out_;
    const LogSink& sink_;
    std::vector<std::string>& lines_;
};

template <typename F>
auto stage(const std::string& name, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const Error& e) {
        throw with_stage(name, e);
    } catch (const fs::filesystem_error& e) {
        throw with_stage(name, Error(Errc::io, e.what()));
    } catch (const nlohmann::json::exception& e) {
        throw with_stage(name, Error(Errc::schema, e.what()));
    }
}

// Everything the modeling stages may see. Outcome data is deliberately absent.
struct ModelingInputs {
    InputMode mode;
    fs::path features_csv;
    fs::path manifest;
    fs::path out_dir;
    features::ExtractionConfig extraction;
    ae::TrainConfig train;
    std::vector<std::size_t> hidden;
    mml::FitConfig mixture;
};

struct ModelingOutput {
    std::vector<std::string> ids;
    Clustering clustering;
};

ModelingOutput run_modeling(const ModelingInputs& in, StageLog& log) {
    const fs::path& out = in.out_dir;
    FeatureMatrix raw = stage("stage 1/5 features", [&] {
        if (in.mode == InputMode::volumes) {
            log("stage 1/5 features: extracting from manifest " + in.manifest.filename().string());
            FeatureMatrix m = extract_manifest(in.manifest, in.extraction);
            write_feature_csv(out / "features.csv", m);
            log("  wrote features.csv (" + std::to_string(m.rows()) + " x " + std::to_string(m.cols()) + ")");
            return m;
        }
        log("stage 1/5 features: reading " + in.features_csv.filename().string());
        FeatureMatrix m = read_feature_csv(in.features_csv);
        log("  " + std::to_string(m.rows()) + " patients x " + std::to_string(m.cols()) + " features");
        return m;
    });

    FeatureMatrix normalized = stage("stage 2/5 normalize", [&] {
        const auto map = normalization::fit_quantiles(raw);
        map.save(out / "quantile_map.json");
        FeatureMatrix m = normalization::apply_quantile_map(map, raw);
        write_feature_csv(out / "normalized.csv", m);
        log("stage 2/5 normalize: wrote quantile_map.json, normalized.csv");
        return m;
    });

    FeatureMatrix latent = stage("stage 3/5 represent", [&] {
        const auto ckpt = train_autoencoder(normalized, in.train, in.hidden);
        ckpt.save(out / "autoencoder.json");
        FeatureMatrix z = encode_features(ckpt, normalized);
        write_feature_csv(out / "latent.csv", z);
        log("stage 3/5 represent: " + std::to_string(in.train.epochs) + " epochs, loss " +
            text::format_double(ckpt.loss_history.front()) + " -> " + text::format_double(ckpt.loss_history.back()));
        log("  wrote autoencoder.json, latent.csv");
        return z;
    });

    Clustering clustering = stage("stage 4/5 cluster", [&] {
        Clustering c = cluster_latent(latent, in.mixture);
        c.fit.model.save(out / "gmm.json");
        text::write_file(out / "gmm_trace.csv", format_trace_csv(c.fit.trace));
        write_feature_csv(out / "assignments.csv", assignments_table(latent.ids, c.assignment));
        log("stage 4/5 cluster: selected " + std::to_string(c.fit.model.components()) +
            " components, message length " + text::format_double(c.fit.message_length));
        log("  wrote gmm.json, gmm_trace.csv, assignments.csv");
        return c;
    });
    return {latent.ids, std::move(clustering)};
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const std::string& text_doc, const fs::path& base_dir) {
    PipelineConfig c;
    try {
        const auto doc = ordered_json::parse(text_doc);
        check_keys(doc, {"format", "version", "seed", "input", "survival", "out_dir", "extraction", "autoencoder",
                         "mixture", "evaluation"},
                   "config");
        if (doc.value("format", "") != kConfigFormat)
            throw Error(Errc::schema, std::string("config must declare \"format\": \"") + kConfigFormat + "\"");
        if (!doc.contains("version") || doc.at("version") != kConfigVersion)
            throw Error(Errc::schema, "unsupported config version (expected " + std::to_string(kConfigVersion) + ")");
        if (doc.contains("seed")) c.seed = doc.at("seed").get<std::uint64_t>();
        if (doc.contains("input")) {
            const auto& in = doc.at("input");
            check_keys(in, {"mode", "features", "manifest"}, "input");
            const std::string mode = in.value("mode", "features");
            if (mode == "features") c.mode = InputMode::features;
            else if (mode == "volumes") c.mode = InputMode::volumes;
            else throw Error(Errc::schema, "input.mode must be \"features\" or \"volumes\"");
            if (in.contains("features")) c.features_csv = resolve(base_dir, in.at("features").get<std::string>());
            if (in.contains("manifest")) c.manifest = resolve(base_dir, in.at("manifest").get<std::string>());
        }
        if (doc.contains("survival")) c.survival_csv = resolve(base_dir, doc.at("survival").get<std::string>());
        if (doc.contains("out_dir")) c.out_dir = resolve(base_dir, doc.at("out_dir").get<std::string>());
        if (doc.contains("extraction")) {
            const auto& e = doc.at("extraction");
            check_keys(e, {"resample", "target_spacing", "bin_width"}, "extraction");
            read_if(e, "resample", c.extraction.resample);
            read_if(e, "target_spacing", c.extraction.target_spacing);
            read_if(e, "bin_width", c.extraction.bin_width);
        }
        if (doc.contains("autoencoder")) {
            const auto& a = doc.at("autoencoder");
            check_keys(a, {"epochs", "batch_size", "learning_rate", "beta1", "beta2", "epsilon", "loss", "hidden"},
                       "autoencoder");
            read_if(a, "epochs", c.train.epochs);
            read_if(a, "batch_size", c.train.batch_size);
            read_if(a, "learning_rate", c.train.adam.learning_rate);
            read_if(a, "beta1", c.train.adam.beta1);
            read_if(a, "beta2", c.train.adam.beta2);
            read_if(a, "epsilon", c.train.adam.epsilon);
            read_if(a, "loss", c.train.loss);
            read_if(a, "hidden", c.hidden);
        }
        if (doc.contains("mixture")) {
            const auto& m = doc.at("mixture");
            check_keys(m, {"k_max", "k_min", "tol", "max_iter", "restarts", "update"}, "mixture");
            read_if(m, "k_max", c.mixture.k_max);
            read_if(m, "k_min", c.mixture.k_min);
            read_if(m, "tol", c.mixture.tol);
            read_if(m, "max_iter", c.mixture.max_iter);
            read_if(m, "restarts", c.mixture.restarts);
            const std::string update = m.value("update", "componentwise");
            if (update != "componentwise" && update != "batch")
                throw Error(Errc::schema, "mixture.update must be \"componentwise\" or \"batch\"");
            c.mixture.componentwise = update == "componentwise";
        }
        if (doc.contains("evaluation")) {
            const auto& e = doc.at("evaluation");
            check_keys(e, {"bootstrap", "adjust_age_sex", "plot_horizon"}, "evaluation");
            read_if(e, "bootstrap", c.evaluation.bootstrap);
            read_if(e, "adjust_age_sex", c.evaluation.adjust);
            read_if(e, "plot_horizon", c.evaluation.plot_horizon);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::schema, std::string("invalid config: ") + e.what());
    }
    return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
    try {
        return from_json(text::read_file(path), path.parent_path());
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.message());
    }
}

std::string PipelineConfig::to_json() const {
    ordered_json doc = parameters(*this);
    ordered_json in = {{"mode", mode == InputMode::features ? "features" : "volumes"}};
    if (!features_csv.empty()) in["features"] = features_csv.string();
    if (!manifest.empty()) in["manifest"] = manifest.string();
    doc["input"] = in;
    if (!survival_csv.empty()) doc["survival"] = survival_csv.string();
    if (!out_dir.empty()) doc["out_dir"] = out_dir.string();
    return doc.dump(2) + "\n";
}

std::string PipelineConfig::parameters_json() const { return parameters(*this).dump(); }

void PipelineConfig::validate() const {
    if (!seed) throw Error(Errc::contract, "a seed is required (config \"seed\" or --seed)");
    if (mode == InputMode::features && features_csv.empty())
        throw Error(Errc::contract, "features mode needs input.features");
    if (mode == InputMode::volumes && manifest.empty()) throw Error(Errc::contract, "volumes mode needs input.manifest");
    if (survival_csv.empty()) throw Error(Errc::contract, "survival CSV path is required for the evaluation stage");
    if (out_dir.empty()) throw Error(Errc::contract, "an output directory is required (out_dir or --out-dir)");
    for (double s : extraction.target_spacing)
        if (!(s > 0.0)) throw Error(Errc::contract, "target spacing must be positive");
    if (!(extraction.bin_width > 0.0)) throw Error(Errc::contract, "bin width must be positive");
    if (train.epochs < 1 || train.batch_size < 1) throw Error(Errc::contract, "epochs and batch size must be >= 1");
    if (!(train.adam.learning_rate > 0.0)) throw Error(Errc::contract, "learning rate must be positive");
    if (mixture.k_min < 1 || mixture.k_min > mixture.k_max) throw Error(Errc::contract, "need 1 <= k_min <= k_max");
    if (!(mixture.tol > 0.0) || mixture.max_iter < 1 || mixture.restarts < 1)
        throw Error(Errc::contract, "mixture tol, max_iter and restarts must be positive");
}

FeatureMatrix extract_manifest(const fs::path& manifest, const features::ExtractionConfig& cfg) {
    const std::string content = text::read_file(manifest);
    const fs::path base = manifest.parent_path();
    std::vector<std::string> lines;
    for (const auto& l : text::split(content, '\n'))
        if (!text::trim(l).empty()) lines.emplace_back(text::trim(l));
    if (lines.empty() || lines.front() != "patient_id,volume,mask")
        throw Error(Errc::malformed_input, manifest.string() + ":1: header must be patient_id,volume,mask");

    FeatureMatrix m;
    m.columns = features::feature_names();
    std::vector<std::vector<double>> rows;
    std::set<std::string> seen;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto cells = text::split(lines[i], ',');
        const std::string where = manifest.string() + ":" + std::to_string(i + 1);
        if (cells.size() != 3) throw Error(Errc::malformed_input, where + ": expected 3 cells");
        const std::string id(text::trim(cells[0]));
        if (!seen.insert(id).second) throw Error(Errc::duplicate_id, where + ": duplicate patient id '" + id + "'");
        try {
            const auto v = features::read_vol1(resolve(base, std::string(text::trim(cells[1]))));
            const auto mask = features::read_mask(resolve(base, std::string(text::trim(cells[2]))));
            rows.push_back(features::extract_feature_vector(v, mask, cfg).values);
        } catch (const Error& e) {
            throw with_stage("patient " + id, e);
        }
        m.ids.push_back(id);
    }
    if (rows.empty()) throw Error(Errc::insufficient_data, manifest.string() + ": no patients listed");
    m.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m.columns.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    return m;
}

ae::Checkpoint train_autoencoder(const FeatureMatrix& normalized, const ae::TrainConfig& cfg,
                                 const std::vector<std::size_t>& hidden) {
    const std::size_t w = normalized.cols();
    std::vector<std::size_t> sizes;
    if (hidden.empty()) {
        sizes = ae::default_layer_sizes(w);
    } else {
        sizes.push_back(w);
        sizes.insert(sizes.end(), hidden.begin(), hidden.end());
        sizes.push_back(ae::kLatentWidth);
        sizes.insert(sizes.end(), hidden.rbegin(), hidden.rend());
        sizes.push_back(w);
    }
    auto result = ae::train(ae::init_mlp(sizes, cfg.seed), normalized.values, cfg);
    return {std::move(result.net), cfg, std::move(result.loss_history)};
}

FeatureMatrix encode_features(const ae::Checkpoint& ckpt, const FeatureMatrix& normalized) {
    FeatureMatrix z;
    z.ids = normalized.ids;
    for (std::size_t j = 0; j < ae::kLatentWidth; ++j) z.columns.push_back("z" + std::to_string(j + 1));
    z.values = ae::encode(ckpt.net, normalized.values);
    return z;
}

Clustering cluster_latent(const FeatureMatrix& latent, const mml::FitConfig& cfg) {
    Clustering c;
    c.fit = mml::fit_mml(latent.values, cfg);
    c.assignment = mml::predict(c.fit.model, latent.values);
    return c;
}

FeatureMatrix assignments_table(const std::vector<std::string>& ids, const mml::Assignment& a) {
    FeatureMatrix t;
    t.ids = ids;
    t.columns = {"cluster"};
    const auto c = a.responsibilities.cols();
    for (Eigen::Index k = 0; k < c; ++k) t.columns.push_back("p" + std::to_string(k + 1));
    t.values.resize(a.responsibilities.rows(), c + 1);
    for (Eigen::Index i = 0; i < t.values.rows(); ++i) {
        t.values(i, 0) = static_cast<double>(a.labels[static_cast<std::size_t>(i)] + 1);
        t.values.row(i).tail(c) = a.responsibilities.row(i);
    }
    return t;
}

LoadedAssignments parse_assignments(const FeatureMatrix& table) {
    if (table.columns.size() < 2 || table.columns[0] != "cluster")
        throw Error(Errc::malformed_input, "assignments need columns cluster,p1,...");
    const auto c = static_cast<Eigen::Index>(table.columns.size() - 1);
    for (Eigen::Index k = 0; k < c; ++k)
        if (table.columns[static_cast<std::size_t>(k + 1)] != "p" + std::to_string(k + 1))
            throw Error(Errc::malformed_input, "assignment column " + std::to_string(k + 2) + " must be p" +
                                                   std::to_string(k + 1));
    LoadedAssignments a;
    a.ids = table.ids;
    a.posteriors = table.values.rightCols(c);
    for (Eigen::Index i = 0; i < table.values.rows(); ++i) {
        const double v = table.values(i, 0);
        if (v != std::round(v) || v < 1.0 || v > static_cast<double>(c))
            throw Error(Errc::malformed_input, "patient '" + table.ids[static_cast<std::size_t>(i)] +
                                                   "' has cluster outside 1.." + std::to_string(c));
        a.labels.push_back(static_cast<std::size_t>(v) - 1);
    }
    return a;
}

std::string format_trace_csv(const mml::FitTrace& trace) {
    std::string out = "restart,segment,sweep,components,thresholded,log_likelihood,message_length,selected\n";
    for (std::size_t i = 0; i < trace.entries.size(); ++i) {
        const auto& e = trace.entries[i];
        out += std::to_string(e.restart) + "," + std::to_string(e.segment) + "," + std::to_string(e.sweep) + "," +
               std::to_string(e.components) + "," + (e.thresholded ? "1" : "0") + "," +
               text::format_double(e.log_likelihood) + "," + text::format_double(e.message_length) + "," +
               (i == trace.selected ? "1" : "0") + "\n";
    }
    return out;
}

PipelineResult run_pipeline(const PipelineConfig& cfg, const LogSink& sink) {
    cfg.validate();
    const fs::path& input = cfg.mode == InputMode::features ? cfg.features_csv : cfg.manifest;
    for (const auto& p : {input, cfg.survival_csv})
        if (!fs::is_regular_file(p)) throw Error(Errc::io, "input file not found: " + p.string());
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) throw Error(Errc::io, "cannot create output directory " + cfg.out_dir.string() + ": " + ec.message());

    PipelineResult result;
    StageLog log(cfg.out_dir / "pipeline.log", sink, result.log);
    log("phenoclust pipeline, seed " + std::to_string(*cfg.seed));
    log("outcome blinding: survival file located but not opened until stage 5");

    ModelingInputs in{cfg.mode, cfg.features_csv, cfg.manifest, cfg.out_dir, cfg.extraction, cfg.train, cfg.hidden,
                      cfg.mixture};
    in.train.seed = *cfg.seed;
    in.mixture.seed = *cfg.seed;
    ModelingOutput modeled = run_modeling(in, log);
    result.selected_components = modeled.clustering.fit.model.components();
    log("outcome blinding: stages 1-4 complete with no survival data read");

    result.report = stage("stage 5/5 evaluate", [&] {
        log("stage 5/5 evaluate: reading " + cfg.survival_csv.filename().string());
        const auto records = survival::read_survival_csv(cfg.survival_csv);
        report::EvaluationConfig ev = cfg.evaluation;
        ev.seed = *cfg.seed;
        auto rep = report::build_report(modeled.ids, modeled.clustering.assignment.labels,
                                        modeled.clustering.assignment.responsibilities, records, ev);
        text::write_file(cfg.out_dir / "report.json", report::report_json(rep, cfg.parameters_json()));
        text::write_file(cfg.out_dir / "report.txt", report::report_table(rep));
        report::emit_km_artifacts(rep, cfg.out_dir);
        log("  cluster sizes " + report::format_cluster_sizes(rep.sizes));
        if (rep.log_rank) log("  log-rank p " + survival::format_p_value(rep.log_rank->p));
        log("  wrote report.json, report.txt, km.csv, km.svg");
        return rep;
    });
    return result;
}

}  // namespace phenoclust::pipeline
