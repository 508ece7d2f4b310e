// phenoclust command-line front end.
//
// Exit codes: 0 success, 2 invalid input or usage, 3 numeric or convergence failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "phenoclust/cohort.hpp"
#include "phenoclust/error.hpp"
#include "phenoclust/pipeline.hpp"
#include "phenoclust/quantile_map.hpp"
#include "phenoclust/report.hpp"
#include "phenoclust/survival.hpp"
#include "phenoclust/text.hpp"

namespace fs = std::filesystem;
using namespace phenoclust;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

struct Globals {
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string config;
};

void info(const std::string& line) { std::cerr << line << '\n'; }

fs::path out_dir(const Globals& g, const pipeline::PipelineConfig& cfg) {
    fs::path dir = !g.out_dir.empty() ? fs::path(g.out_dir) : !cfg.out_dir.empty() ? cfg.out_dir : fs::path(".");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(Errc::io, "cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

fs::path output_path(const std::string& explicit_path, const fs::path& dir, const char* default_name) {
    return explicit_path.empty() ? dir / default_name : fs::path(explicit_path);
}

std::uint64_t require_seed(const pipeline::PipelineConfig& cfg, const char* command) {
    if (!cfg.seed)
        throw Error(Errc::contract, std::string(command) + " needs an explicit seed (--seed or config \"seed\")");
    return *cfg.seed;
}

template <typename T>
void override_if(const CLI::Option* opt, const T& value, T& target) {
    if (opt->count() > 0) target = value;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"phenoclust: imaging-phenotype clustering with autoencoder latents and MML Gaussian mixtures"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", "phenoclust 1.0.0");

    Globals g;
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "Master seed for every random stage");
    app.add_option("--out-dir", g.out_dir, "Directory for output artifacts");
    app.add_option("--config", g.config, "Versioned JSON pipeline config")->check(CLI::ExistingFile);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort (features, survival, true labels)");
    cohort::SyntheticCohortSpec spec;
    bool synth_null = false, synth_volumes = false;
    synth->add_option("--n", spec.n, "Number of patients")->capture_default_str();
    auto* sizes_opt = synth->add_option("--sizes", spec.sizes, "Cluster sizes")->delimiter(',');
    synth->add_option("--separation", spec.separation, "Cluster separation scale")->capture_default_str();
    synth->add_option("--factor-sd", spec.factor_sd, "Within-cluster factor SD")->capture_default_str();
    synth->add_option("--noise-sd", spec.noise_sd, "Per-feature noise SD")->capture_default_str();
    synth->add_option("--hazards", spec.hazards, "Per-cluster monthly hazards")->delimiter(',');
    synth->add_option("--horizon", spec.horizon, "Administrative censoring (months)")->capture_default_str();
    synth->add_option("--censor-max", spec.censor_max, "Upper end of uniform censoring")->capture_default_str();
    synth->add_option("--features", spec.features, "Feature count")->capture_default_str();
    synth->add_flag("--null", synth_null, "No separation and equal hazards");
    synth->add_flag("--volumes", synth_volumes, "Also write VOL1 phantom volumes and a manifest");

    // extract
    auto* extract = app.add_subcommand("extract", "Extract radiomic features from VOL1 volume/mask pairs");
    std::string manifest, extract_out;
    std::vector<double> spacing;
    double bin_width = 5.0;
    bool no_resample = false;
    extract->add_option("--manifest", manifest, "CSV patient_id,volume,mask")->required()->check(CLI::ExistingFile);
    auto* spacing_opt = extract->add_option("--spacing", spacing, "Target spacing sx,sy,sz (mm)")->delimiter(',')->expected(3);
    auto* bin_opt = extract->add_option("--bin-width", bin_width, "Discretization bin width");
    auto* nores_opt = extract->add_flag("--no-resample", no_resample, "Skip resampling");
    extract->add_option("--out", extract_out, "Feature CSV (default <out-dir>/features.csv)");

    // normalize
    auto* normalize = app.add_subcommand("normalize", "Quantile-normalize a feature CSV to seven codes");
    std::string norm_in, norm_out, norm_map;
    normalize->add_option("--in,--features", norm_in, "Raw feature CSV")->required()->check(CLI::ExistingFile);
    normalize->add_option("--map", norm_map, "Apply an existing quantile map instead of fitting")->check(CLI::ExistingFile);
    normalize->add_option("--out", norm_out, "Normalized CSV (default <out-dir>/normalized.csv)");

    // train-ae
    auto* train_ae = app.add_subcommand("train-ae", "Train the autoencoder on normalized features");
    std::string ae_in, ae_out;
    ae::TrainConfig tc;
    std::vector<std::size_t> hidden;
    train_ae->add_option("--in", ae_in, "Normalized feature CSV")->required()->check(CLI::ExistingFile);
    train_ae->add_option("--out", ae_out, "Checkpoint (default <out-dir>/autoencoder.json)");
    auto* epochs_opt = train_ae->add_option("--epochs", tc.epochs, "Epochs");
    auto* batch_opt = train_ae->add_option("--batch", tc.batch_size, "Mini-batch size");
    auto* lr_opt = train_ae->add_option("--lr", tc.adam.learning_rate, "Adam learning rate");
    auto* hidden_opt = train_ae->add_option("--hidden", hidden, "Encoder hidden widths, e.g. 24,16,8,5")->delimiter(',');

    // encode
    auto* encode = app.add_subcommand("encode", "Map normalized features to 3-D latents");
    std::string enc_ckpt, enc_in, enc_out;
    encode->add_option("--checkpoint", enc_ckpt, "Autoencoder checkpoint")->required()->check(CLI::ExistingFile);
    encode->add_option("--in", enc_in, "Normalized feature CSV")->required()->check(CLI::ExistingFile);
    encode->add_option("--out", enc_out, "Latent CSV (default <out-dir>/latent.csv)");

    // cluster
    auto* cluster = app.add_subcommand("cluster", "Fit an MML Gaussian mixture to latents and assign patients");
    std::string latent_in, model_out, assign_out;
    mml::FitConfig fc;
    bool batch_em = false;
    cluster->add_option("--latent", latent_in, "Latent CSV")->required()->check(CLI::ExistingFile);
    auto* kmax_opt = cluster->add_option("--kmax,--k-max", fc.k_max, "Initial component count");
    auto* kmin_opt = cluster->add_option("--kmin,--k-min", fc.k_min, "Smallest component count visited");
    auto* tol_opt = cluster->add_option("--tol", fc.tol, "Relative message-length tolerance");
    auto* iter_opt = cluster->add_option("--max-iter", fc.max_iter, "Sweeps per segment");
    auto* restarts_opt = cluster->add_option("--restarts", fc.restarts, "Independent initializations");
    auto* batch_em_opt = cluster->add_flag("--batch-em", batch_em, "Batch EM instead of component-wise updates");
    cluster->add_option("--out", model_out, "Model file (default <out-dir>/gmm.json)");
    cluster->add_option("assignments", assign_out, "Assignments CSV (default <out-dir>/assignments.csv)");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Survival evaluation of cluster assignments");
    std::string eval_assign, eval_surv;
    report::EvaluationConfig ev;
    bool adjust = false;
    evaluate->add_option("--assignments", eval_assign, "Assignments CSV")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--survival", eval_surv, "Survival CSV")->required()->check(CLI::ExistingFile);
    auto* adjust_opt = evaluate->add_flag("--adjust", adjust, "Adjust Cox models for age and sex");
    auto* boot_opt = evaluate->add_option("--bootstrap", ev.bootstrap, "Bootstrap resamples for the C-index SE");

    // pipeline
    auto* pipe = app.add_subcommand("pipeline", "Run every stage end to end");
    std::string pipe_features, pipe_manifest, pipe_survival;
    pipe->add_option("--features", pipe_features, "Raw feature CSV (features mode)")->check(CLI::ExistingFile);
    pipe->add_option("--manifest", pipe_manifest, "Volume manifest (volumes mode)")->check(CLI::ExistingFile);
    pipe->add_option("--survival", pipe_survival, "Survival CSV")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        pipeline::PipelineConfig cfg = g.config.empty() ? pipeline::PipelineConfig{} : pipeline::PipelineConfig::load(g.config);
        if (seed_opt->count() > 0) cfg.seed = seed_value;

        if (*synth) {
            const std::uint64_t seed = require_seed(cfg, "synth");
            spec.seed = seed;
            if (sizes_opt->count() > 0 && spec.n == 108)
                spec.n = std::accumulate(spec.sizes.begin(), spec.sizes.end(), std::size_t{0});
            if (synth_null) spec = cohort::null_spec(spec);
            const auto dir = out_dir(g, cfg);
            const auto co = cohort::generate_synthetic_cohort(spec);
            write_feature_csv(dir / "features.csv", co.features);
            survival::write_survival_csv(dir / "survival.csv", co.survival);
            std::string labels = "patient_id,cluster\n";
            for (std::size_t i = 0; i < co.labels.size(); ++i)
                labels += co.features.ids[i] + "," + std::to_string(co.labels[i] + 1) + "\n";
            text::write_file(dir / "labels.csv", labels);
            nlohmann::ordered_json conf = {{"format", "phenoclust-config"}, {"version", 1}, {"seed", seed}};
            if (synth_volumes) {
                cohort::write_phantom_bundles(dir / "volumes", co, spec.separation, seed);
                conf["input"] = {{"mode", "volumes"}, {"manifest", "volumes/manifest.csv"}};
            } else {
                conf["input"] = {{"mode", "features"}, {"features", "features.csv"}};
            }
            conf["survival"] = "survival.csv";
            conf["out_dir"] = "run";
            text::write_file(dir / "config.json", conf.dump(2) + "\n");
            info("wrote " + std::to_string(co.labels.size()) + " patients to " + dir.string() +
                 " (features.csv, survival.csv, labels.csv, config.json" + (synth_volumes ? ", volumes/" : "") + ")");
        } else if (*extract) {
            if (spacing_opt->count() > 0) std::copy(spacing.begin(), spacing.end(), cfg.extraction.target_spacing.begin());
            override_if(bin_opt, bin_width, cfg.extraction.bin_width);
            if (nores_opt->count() > 0) cfg.extraction.resample = !no_resample;
            const auto dir = out_dir(g, cfg);
            const auto m = pipeline::extract_manifest(manifest, cfg.extraction);
            const auto path = output_path(extract_out, dir, "features.csv");
            write_feature_csv(path, m);
            nlohmann::ordered_json prov = {{"resample", cfg.extraction.resample},
                                           {"target_spacing", cfg.extraction.target_spacing},
                                           {"bin_width", cfg.extraction.bin_width},
                                           {"features", m.columns}};
            text::write_file(fs::path(path).replace_extension(".provenance.json"), prov.dump(2) + "\n");
            info("extracted " + std::to_string(m.rows()) + " x " + std::to_string(m.cols()) + " -> " + path.string());
        } else if (*normalize) {
            const auto dir = out_dir(g, cfg);
            const auto raw = read_feature_csv(norm_in);
            normalization::QuantileMap map;
            if (norm_map.empty()) {
                map = normalization::fit_quantiles(raw);
                map.save(dir / "quantile_map.json");
            } else {
                map = normalization::QuantileMap::load(norm_map);
            }
            const auto path = output_path(norm_out, dir, "normalized.csv");
            write_feature_csv(path, normalization::apply_quantile_map(map, raw));
            info("normalized " + std::to_string(raw.rows()) + " patients -> " + path.string());
        } else if (*train_ae) {
            ae::TrainConfig t = cfg.train;
            override_if(epochs_opt, tc.epochs, t.epochs);
            override_if(batch_opt, tc.batch_size, t.batch_size);
            override_if(lr_opt, tc.adam.learning_rate, t.adam.learning_rate);
            std::vector<std::size_t> h = cfg.hidden;
            override_if(hidden_opt, hidden, h);
            t.seed = require_seed(cfg, "train-ae");
            const auto dir = out_dir(g, cfg);
            const auto ckpt = pipeline::train_autoencoder(read_feature_csv(ae_in), t, h);
            const auto path = output_path(ae_out, dir, "autoencoder.json");
            ckpt.save(path);
            info("trained " + std::to_string(t.epochs) + " epochs, loss " + text::format_double(ckpt.loss_history.front()) +
                 " -> " + text::format_double(ckpt.loss_history.back()) + "; checkpoint " + path.string());
        } else if (*encode) {
            const auto dir = out_dir(g, cfg);
            const auto z = pipeline::encode_features(ae::Checkpoint::load(enc_ckpt), read_feature_csv(enc_in));
            const auto path = output_path(enc_out, dir, "latent.csv");
            write_feature_csv(path, z);
            info("encoded " + std::to_string(z.rows()) + " patients -> " + path.string());
        } else if (*cluster) {
            mml::FitConfig f = cfg.mixture;
            override_if(kmax_opt, fc.k_max, f.k_max);
            override_if(kmin_opt, fc.k_min, f.k_min);
            override_if(tol_opt, fc.tol, f.tol);
            override_if(iter_opt, fc.max_iter, f.max_iter);
            override_if(restarts_opt, fc.restarts, f.restarts);
            if (batch_em_opt->count() > 0) f.componentwise = !batch_em;
            f.seed = require_seed(cfg, "cluster");
            const auto dir = out_dir(g, cfg);
            const auto latent = read_feature_csv(latent_in);
            const auto c = pipeline::cluster_latent(latent, f);
            c.fit.model.save(output_path(model_out, dir, "gmm.json"));
            text::write_file(dir / "gmm_trace.csv", pipeline::format_trace_csv(c.fit.trace));
            write_feature_csv(output_path(assign_out, dir, "assignments.csv"),
                              pipeline::assignments_table(latent.ids, c.assignment));
            std::vector<std::size_t> sizes(c.fit.model.components(), 0);
            for (std::size_t l : c.assignment.labels) ++sizes[l];
            info("selected " + std::to_string(c.fit.model.components()) + " components (" +
                 report::format_cluster_sizes(sizes) + "), message length " + text::format_double(c.fit.message_length));
        } else if (*evaluate) {
            report::EvaluationConfig e = cfg.evaluation;
            override_if(boot_opt, ev.bootstrap, e.bootstrap);
            if (adjust_opt->count() > 0) e.adjust = adjust;
            e.seed = require_seed(cfg, "evaluate");
            const auto dir = out_dir(g, cfg);
            const auto a = pipeline::parse_assignments(read_feature_csv(eval_assign));
            const auto rep = report::build_report(a.ids, a.labels, a.posteriors, survival::read_survival_csv(eval_surv), e);
            text::write_file(dir / "report.json", report::report_json(rep));
            const std::string table = report::report_table(rep);
            text::write_file(dir / "report.txt", table);
            if (rep.occupied() > 0) report::emit_km_artifacts(rep, dir);
            std::cout << table;
        } else if (*pipe) {
            if (!pipe_features.empty()) {
                cfg.mode = pipeline::InputMode::features;
                cfg.features_csv = pipe_features;
            }
            if (!pipe_manifest.empty()) {
                cfg.mode = pipeline::InputMode::volumes;
                cfg.manifest = pipe_manifest;
            }
            if (!pipe_survival.empty()) cfg.survival_csv = pipe_survival;
            if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
            const auto result = pipeline::run_pipeline(cfg, info);
            std::cout << report::report_table(result.report);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.is_numeric() ? kExitNumeric : kExitValidation;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error [io]: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumeric;
    }
    return 0;
}
