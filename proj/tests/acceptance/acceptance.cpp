// Acceptance suite: one PASS/FAIL line per criterion, with the measured
// numbers. Usage: phenoclust_acceptance [criterion ...]  (default: all nine)
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "oracles.hpp"
#include "phenoclust/autoencoder.hpp"
#include "phenoclust/cohort.hpp"
#include "phenoclust/error.hpp"
#include "phenoclust/features.hpp"
#include "phenoclust/mixture.hpp"
#include "phenoclust/pipeline.hpp"
#include "phenoclust/quantile_map.hpp"
#include "phenoclust/survival.hpp"
#include "phenoclust/text.hpp"
#include "phenoclust/volume.hpp"

using namespace phenoclust;
namespace fs = std::filesystem;

namespace {

// Thresholds and tolerances.
constexpr int kRecoverySeeds = 20;
constexpr int kRecoveryRequired = 19;
constexpr int kRecoverySamples = 900;
constexpr double kRecoverySpacing = 10.0;  // centre distance in units of sigma
constexpr double kMonotoneSlack = 1e-8;
constexpr int kGradientCases = 20;
constexpr double kGradientRelTol = 1e-4;
constexpr int kTrainingSamples = 200;
constexpr int kConcordanceCases = 50;
constexpr int kCoxCasesRequired = 40;
constexpr double kCoxTol = 1e-6;
constexpr double kTabulationTol = 1e-10;
constexpr int kStudySeeds = 20;
constexpr int kStudyRequired = 18;
constexpr double kStudyAlpha = 0.05;
constexpr double kHrLow = 2.5;
constexpr double kHrHigh = 6.5;
constexpr int kNullSeeds = 50;
constexpr double kNullMaxFraction = 0.15;
constexpr int kNormalizationColumns = 100;
constexpr int kGlcmCases = 20;
constexpr std::size_t kGlcmMaxSide = 6;
constexpr double kGlcmStatTol = 1e-12;
constexpr int kResampleCases = 20;
constexpr double kResampleTol = 1e-9;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (const auto& p : parts) out += (out.empty() ? "" : sep) + p;
    return out;
}

struct ScratchDir {
    fs::path path;
    explicit ScratchDir(const std::string& tag)
        : path(fs::temp_directory_path() / ("phenoclust_acceptance_" + tag + "_" + std::to_string(::getpid()))) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

// ---------------------------------------------------------------- 1

Outcome configuration_fidelity() {
    const auto cfg = pipeline::PipelineConfig::from_json(R"({"format": "phenoclust-config", "version": 1})");
    const auto echo = nlohmann::json::parse(cfg.parameters_json());
    std::vector<std::string> wrong;
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok) wrong.push_back(what);
    };
    const auto& ex = echo.at("extraction");
    expect(ex.at("target_spacing") == nlohmann::json::array({3.0, 3.0, 3.0}), "spacing");
    expect(ex.at("bin_width") == 5.0, "bin width");
    const auto sizes = ae::default_layer_sizes(features::kFeatureCount);
    const std::size_t bottleneck = static_cast<std::size_t>(std::min_element(sizes.begin(), sizes.end()) - sizes.begin());
    expect(sizes[bottleneck] == 3 && ae::kLatentWidth == 3, "latent dim");
    expect(bottleneck == 5 && sizes.size() - 1 - bottleneck == 5, "encoder/decoder depth");
    const auto net = ae::init_mlp(sizes, 0);
    expect(net.layers.size() == 10 && net.encoder_layers() == 5, "network depth");
    const auto& a = echo.at("autoencoder");
    expect(a.at("loss") == "bce", "loss");
    expect(a.at("learning_rate") == 0.001, "learning rate");
    expect(a.at("beta1") == 0.9, "beta1");
    expect(a.at("beta2") == 0.999, "beta2");
    expect(a.at("batch_size") == 64, "batch size");
    expect(a.at("epochs") == 400, "epochs");
    const auto& m = echo.at("mixture");
    expect(m.at("k_max") == 25, "k_max");
    expect(m.at("tol") == 1e-5, "EM tol");
    expect(m.at("max_iter") == 100, "max iter");
    expect(echo.at("evaluation").at("plot_horizon") == 36.0, "plot horizon");
    expect(cohort::kFollowUpHorizon == 36.0 && cohort::SyntheticCohortSpec{}.horizon == 36.0, "censoring horizon");
    expect(mml::FitConfig{}.k_max == 25 && ae::TrainConfig{}.epochs == 400, "library defaults");

    Outcome o;
    o.pass = wrong.empty();
    o.detail = o.pass ? "spacing [3,3,3], bin 5, latent 3, depth 5+5, bce, Adam 0.001/0.9/0.999, batch 64, 400 epochs, "
                        "k_max 25, tol 1e-5, 100 iter, horizon 36"
                      : "mismatched: " + join(wrong, ", ");
    return o;
}

// ---------------------------------------------------------------- 2, 3

struct RecoveryRun {
    std::size_t selected = 0;
    std::vector<mml::TraceEntry> trace;
};

struct RecoveryRuns {
    std::vector<RecoveryRun> three, one;
};

Eigen::MatrixXd recovery_data(bool three_clusters, std::uint64_t seed) {
    std::mt19937_64 rng(1000 + seed);
    std::normal_distribution<double> n01;
    const std::vector<Eigen::Vector3d> centres{
        {0, 0, 0}, {kRecoverySpacing, 0, 0}, {0, kRecoverySpacing, 0}};
    Eigen::MatrixXd x(kRecoverySamples, 3);
    for (int i = 0; i < kRecoverySamples; ++i)
        for (int c = 0; c < 3; ++c) x(i, c) = (three_clusters ? centres[static_cast<std::size_t>(i % 3)](c) : 0.0) + n01(rng);
    return x;
}

const RecoveryRuns& recovery_runs() {
    static std::optional<RecoveryRuns> runs;
    if (!runs) {
        runs.emplace();
        for (int s = 0; s < kRecoverySeeds; ++s)
            for (bool three : {true, false}) {
                mml::FitConfig cfg;
                cfg.seed = static_cast<std::uint64_t>(s);
                const auto fit = mml::fit_mml(recovery_data(three, cfg.seed), cfg);
                (three ? runs->three : runs->one).push_back({fit.model.components(), fit.trace.entries});
            }
    }
    return *runs;
}

Outcome mml_recovery() {
    const auto& runs = recovery_runs();
    auto hits = [](const std::vector<RecoveryRun>& v, std::size_t want) {
        std::map<std::size_t, int> hist;
        int ok = 0;
        for (const auto& r : v) {
            ++hist[r.selected];
            ok += r.selected == want;
        }
        std::string h;
        for (const auto& [c, n] : hist) h += (h.empty() ? "" : " ") + std::to_string(c) + ":" + std::to_string(n);
        return std::pair{ok, h};
    };
    const auto [three, h3] = hits(runs.three, 3);
    const auto [one, h1] = hits(runs.one, 1);
    return {three >= kRecoveryRequired && one >= kRecoveryRequired,
            "3 clusters -> c=3 in " + std::to_string(three) + "/" + std::to_string(kRecoverySeeds) + " (c:count " + h3 +
                "); 1 cluster -> c=1 in " + std::to_string(one) + "/" + std::to_string(kRecoverySeeds) + " (c:count " +
                h1 + "); need " + std::to_string(kRecoveryRequired) + " each"};
}

Outcome message_length_monotone() {
    const auto& runs = recovery_runs();
    int sweeps = 0, increases = 0, annihilating = 0, annihilating_increases = 0;
    double worst = 0.0, worst_fixed = 0.0;
    for (const auto* group : {&runs.three, &runs.one})
        for (const auto& run : *group)
            for (std::size_t i = 1; i < run.trace.size(); ++i) {
                const auto& prev = run.trace[i - 1];
                const auto& cur = run.trace[i];
                if (cur.restart != prev.restart || cur.segment != prev.segment) continue;
                ++sweeps;
                const double rise = cur.message_length - prev.message_length;
                const bool annihilated = cur.components < prev.components;
                annihilating += annihilated;
                if (rise > kMonotoneSlack) {
                    ++increases;
                    annihilating_increases += annihilated;
                    worst = std::max(worst, rise);
                    if (!annihilated) worst_fixed = std::max(worst_fixed, rise);
                }
            }
    return {increases == 0,
            std::to_string(increases) + " of " + std::to_string(sweeps) + " sweeps raised L by > 1e-8 (worst " +
                fmt("%.3g", worst) + "); " + std::to_string(annihilating_increases) + " of " +
                std::to_string(annihilating) + " annihilating sweeps rose, fixed-support worst " +
                fmt("%.3g", worst_fixed)};
}

// ---------------------------------------------------------------- 4

double loss_with_offset(ae::MlpNetwork net, const Eigen::MatrixXd& batch, std::size_t layer, bool bias,
                        Eigen::Index r, Eigen::Index c, double h) {
    if (bias)
        net.layers[layer].bias(r) += h;
    else
        net.layers[layer].weights(r, c) += h;
    return ae::bce_loss(ae::forward(net, batch), batch);
}

Outcome autoencoder_gradients() {
    std::mt19937_64 rng(404);
    std::uniform_int_distribution<std::size_t> width(3, 7), hidden(3, 6), depth(1, 3), rows(2, 8);
    std::uniform_real_distribution<double> unit(0.02, 0.98);
    double worst = 0.0;
    std::size_t checked = 0;
    for (int trial = 0; trial < kGradientCases; ++trial) {
        std::vector<std::size_t> enc{width(rng)};
        const std::size_t d = depth(rng);
        for (std::size_t l = 1; l < d; ++l) enc.push_back(hidden(rng));
        enc.push_back(3);
        std::vector<std::size_t> sizes = enc;
        for (auto it = enc.rbegin() + 1; it != enc.rend(); ++it) sizes.push_back(*it);
        const auto net = ae::init_mlp(sizes, rng());
        Eigen::MatrixXd batch(static_cast<Eigen::Index>(rows(rng)), static_cast<Eigen::Index>(sizes.front()));
        for (Eigen::Index i = 0; i < batch.size(); ++i) batch.data()[i] = unit(rng);
        ae::ForwardCache cache;
        ae::forward(net, batch, &cache);
        const auto g = ae::backward(net, batch, cache);
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            const auto& W = net.layers[l].weights;
            for (Eigen::Index r = 0; r < W.rows(); ++r) {
                for (Eigen::Index c = 0; c < W.cols(); ++c) {
                    const double fd = oracle::central_difference(
                        [&](double h) { return loss_with_offset(net, batch, l, false, r, c, h); });
                    worst = std::max(worst, oracle::relative_error(g.weights[l](r, c), fd));
                    ++checked;
                }
                const double fd =
                    oracle::central_difference([&](double h) { return loss_with_offset(net, batch, l, true, r, 0, h); });
                worst = std::max(worst, oracle::relative_error(g.bias[l](r), fd));
                ++checked;
            }
        }
    }

    cohort::SyntheticCohortSpec spec;
    spec.n = kTrainingSamples;
    spec.sizes = {90, 70, 40};
    spec.seed = 4;
    const auto co = cohort::generate_synthetic_cohort(spec);
    const auto normalized = normalization::apply_quantile_map(normalization::fit_quantiles(co.features), co.features);
    ae::TrainConfig tc;
    tc.seed = 4;
    const auto trained = ae::train(ae::init_mlp(ae::default_layer_sizes(normalized.cols()), 4), normalized.values, tc);
    const double first = trained.loss_history.front(), last = trained.loss_history.back();

    return {worst < kGradientRelTol && last < first,
            std::to_string(kGradientCases) + " nets, " + std::to_string(checked) + " parameters, worst rel err " +
                fmt("%.2e", worst) + "; training on " + std::to_string(kTrainingSamples) + " samples: loss " +
                fmt("%.5f", first) + " -> " + fmt("%.5f", last) + " over " +
                std::to_string(trained.loss_history.size()) + " epochs"};
}

// ---------------------------------------------------------------- 5

survival::Records make_records(const std::vector<double>& t, const std::vector<int>& e) {
    survival::Records r;
    for (std::size_t i = 0; i < t.size(); ++i) r.push_back({"s" + std::to_string(i), t[i], e[i], {}, {}});
    return r;
}

Outcome survival_oracles() {
    std::vector<std::string> problems;

    // Concordance against exhaustive ordered-pair enumeration.
    int c_checked = 0, c_exact = 0;
    {
        std::mt19937_64 rng(2);
        std::uniform_int_distribution<int> t_dist(1, 12), risk_dist(0, 6);
        std::bernoulli_distribution ev(0.6);
        while (c_checked < kConcordanceCases) {
            std::vector<double> t(20), risk(20);
            std::vector<int> e(20);
            for (int i = 0; i < 20; ++i) {
                t[i] = t_dist(rng);
                e[i] = ev(rng);
                risk[i] = risk_dist(rng);
            }
            const auto [comparable, score] = oracle::harrell_ordered_pairs(risk, t, e);
            if (comparable == 0) continue;
            const auto c = survival::concordance_index(risk, make_records(t, e), 0);
            c_exact += static_cast<long>(c.comparable) == comparable && static_cast<long>(c.concordant_halves) == score &&
                       c.c == static_cast<double>(score) / (2.0 * static_cast<double>(comparable));
            ++c_checked;
        }
        if (c_exact != c_checked) problems.push_back("concordance");
    }

    // Cox beta against brute-force partial-likelihood maximization.
    int cox_compared = 0, cox_separated = 0;
    double cox_worst = 0.0;
    {
        std::mt19937_64 rng(17);
        std::normal_distribution<double> n01;
        std::uniform_int_distribution<int> size(3, 6);
        std::bernoulli_distribution ev(0.75);
        for (int trial = 0; trial < 400 && cox_compared < kCoxCasesRequired; ++trial) {
            const int n = size(rng);
            std::vector<double> t(static_cast<std::size_t>(n)), x(static_cast<std::size_t>(n));
            std::vector<int> e(static_cast<std::size_t>(n));
            for (std::size_t i = 0; i < t.size(); ++i) {
                t[i] = std::round(std::abs(n01(rng)) * 4) + 1;
                e[i] = ev(rng);
                x[i] = n01(rng);
            }
            if (std::count(e.begin(), e.end(), 1) == 0) continue;
            const double b = oracle::grid_golden_argmax(
                [&](double v) { return oracle::partial_likelihood_1d(t, e, x, v); }, -25, 25, 2000);
            const bool interior = std::abs(b) < 15.0;
            Eigen::MatrixXd cov = Eigen::Map<const Eigen::VectorXd>(x.data(), n);
            try {
                const auto fit = survival::cox_fit(make_records(t, e), cov);
                if (!interior) problems.push_back("cox fitted a boundary case");
                cox_worst = std::max(cox_worst, std::abs(fit.beta(0) - b));
                ++cox_compared;
            } catch (const Error& err) {
                if (err.code() != Errc::separation || interior) problems.push_back("cox error on interior case");
                ++cox_separated;
            }
        }
        if (cox_compared < kCoxCasesRequired || cox_worst >= kCoxTol) problems.push_back("cox");
    }

    // Kaplan-Meier and log-rank against hand tabulations.
    double tab_worst = 0.0;
    {
        const auto a = survival::kaplan_meier(make_records({1, 2, 3}, {1, 1, 1}));
        const auto b = survival::kaplan_meier(make_records({1, 2, 3}, {1, 0, 1}));
        const auto c = survival::kaplan_meier(make_records({4, 5}, {0, 0}));
        const std::vector<double> want_a{2.0 / 3.0, 1.0 / 3.0, 0.0}, want_b{2.0 / 3.0, 0.0};
        if (a.survival.size() != 3 || b.survival.size() != 2 || !c.times.empty() || c.at(100.0) != 1.0)
            problems.push_back("kaplan-meier shape");
        else {
            for (std::size_t i = 0; i < 3; ++i) tab_worst = std::max(tab_worst, std::abs(a.survival[i] - want_a[i]));
            for (std::size_t i = 0; i < 2; ++i) tab_worst = std::max(tab_worst, std::abs(b.survival[i] - want_b[i]));
        }

        const auto g1 = make_records({1, 3, 5, 7}, {1, 1, 0, 1});
        const auto g2 = make_records({2, 4, 6, 8}, {1, 0, 1, 1});
        double o_minus_e = 0.0, var = 0.0;
        for (double t : {1.0, 2.0, 3.0, 6.0, 7.0, 8.0}) {
            double n1 = 0, n2 = 0, d1 = 0, d2 = 0;
            for (const auto& r : g1) n1 += r.time >= t, d1 += r.time == t && r.event;
            for (const auto& r : g2) n2 += r.time >= t, d2 += r.time == t && r.event;
            const double n = n1 + n2, d = d1 + d2;
            o_minus_e += d1 - d * n1 / n;
            if (n > 1) var += d * (n1 / n) * (n2 / n) * (n - d) / (n - 1);
        }
        const auto lr = survival::log_rank({g1, g2});
        const double chi2 = o_minus_e * o_minus_e / var;
        tab_worst = std::max({tab_worst, std::abs(lr.chi2 - chi2), std::abs(lr.p - oracle::chi2_tail_closed_form(chi2, 1))});
        const auto same = survival::log_rank({g1, g1});
        tab_worst = std::max({tab_worst, std::abs(same.chi2), std::abs(same.p - 1.0)});
        if (survival::log_rank({g1, g2, make_records({9, 10}, {1, 0})}).df != 2) problems.push_back("log-rank df");
        if (tab_worst >= kTabulationTol) problems.push_back("tabulation");
    }

    std::ostringstream d;
    d << "C-index exact " << c_exact << "/" << c_checked << "; Cox " << cox_compared << " fits, worst |dbeta| "
      << fmt("%.2e", cox_worst) << " (" << cox_separated << " boundary cases flagged as separation); KM/log-rank worst "
      << fmt("%.2e", tab_worst);
    if (!problems.empty()) d << "; failed: " << join(problems, ", ");
    return {problems.empty(), d.str()};
}

// ---------------------------------------------------------------- 6

struct StudyRun {
    std::size_t components = 0;
    double p = 1.0;  // 1 when no log-rank test was possible
    std::optional<double> hr;
};

StudyRun run_study(const fs::path& dir, const cohort::SyntheticCohortSpec& spec) {
    const auto co = cohort::generate_synthetic_cohort(spec);
    fs::create_directories(dir);
    write_feature_csv(dir / "features.csv", co.features);
    text::write_file(dir / "survival.csv", survival::format_survival_csv(co.survival));
    pipeline::PipelineConfig cfg;
    cfg.features_csv = dir / "features.csv";
    cfg.survival_csv = dir / "survival.csv";
    cfg.out_dir = dir / "run";
    cfg.seed = spec.seed;
    const auto result = pipeline::run_pipeline(cfg);
    StudyRun out;
    out.components = result.selected_components;
    if (result.report.log_rank) out.p = result.report.log_rank->p;
    if (result.report.max_hr) out.hr = result.report.max_hr->hr;
    return out;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome synthetic_study() {
    ScratchDir scratch("study");
    int hits = 0, three = 0, significant = 0;
    std::vector<double> hrs;
    for (int s = 0; s < kStudySeeds; ++s) {
        cohort::SyntheticCohortSpec spec;
        spec.seed = static_cast<std::uint64_t>(s);
        const auto run = run_study(scratch.path / ("planted" + std::to_string(s)), spec);
        three += run.components == 3;
        significant += run.p < kStudyAlpha;
        hits += run.components == 3 && run.p < kStudyAlpha;
        if (run.hr) hrs.push_back(*run.hr);
    }
    const double hr = hrs.empty() ? NAN : median(hrs);

    int null_significant = 0, null_single = 0;
    for (int s = 0; s < kNullSeeds; ++s) {
        cohort::SyntheticCohortSpec base;
        base.seed = static_cast<std::uint64_t>(s);
        const auto run = run_study(scratch.path / ("null" + std::to_string(s)), cohort::null_spec(base));
        null_significant += run.p < kStudyAlpha;
        null_single += run.components == 1;
    }
    const double null_fraction = static_cast<double>(null_significant) / kNullSeeds;

    const bool pass = hits >= kStudyRequired && hr >= kHrLow && hr <= kHrHigh && null_fraction <= kNullMaxFraction;
    std::ostringstream d;
    d << "c=3 and p<0.05 in " << hits << "/" << kStudySeeds << " (need " << kStudyRequired << "; c=3 in " << three
      << ", p<0.05 in " << significant << "); median max-pair HR " << fmt("%.2f", hr) << " (need 2.5-6.5); null p<0.05 in "
      << null_significant << "/" << kNullSeeds << " = " << fmt("%.2f", null_fraction) << " (need <= 0.15; " << null_single
      << " single-cluster fits)";
    return {pass, d.str()};
}

// ---------------------------------------------------------------- 7

std::vector<std::string> differing_files(const fs::path& a, const fs::path& b, std::size_t& compared) {
    std::set<std::string> names;
    for (const auto& dir : {a, b})
        for (const auto& entry : fs::directory_iterator(dir)) names.insert(entry.path().filename().string());
    std::vector<std::string> diff;
    compared = names.size();
    for (const auto& n : names)
        if (!fs::exists(a / n) || !fs::exists(b / n) || text::read_file(a / n) != text::read_file(b / n)) diff.push_back(n);
    return diff;
}

Outcome determinism() {
    ScratchDir scratch("determinism");
    cohort::SyntheticCohortSpec spec;
    spec.seed = 7;
    const auto co = cohort::generate_synthetic_cohort(spec);
    write_feature_csv(scratch.path / "features.csv", co.features);
    text::write_file(scratch.path / "survival.csv", survival::format_survival_csv(co.survival));

    pipeline::PipelineConfig cfg;
    cfg.features_csv = scratch.path / "features.csv";
    cfg.survival_csv = scratch.path / "survival.csv";
    cfg.seed = 7;
    std::size_t compared = 0, compared_volumes = 0;
    for (const char* out : {"a", "b"}) {
        cfg.out_dir = scratch.path / out;
        pipeline::run_pipeline(cfg);
    }
    const auto diff = differing_files(scratch.path / "a", scratch.path / "b", compared);

    cohort::SyntheticCohortSpec small;
    small.n = 18;
    small.sizes = {8, 6, 4};
    small.seed = 7;
    const auto sc = cohort::generate_synthetic_cohort(small);
    pipeline::PipelineConfig vcfg;
    vcfg.mode = pipeline::InputMode::volumes;
    vcfg.manifest = cohort::write_phantom_bundles(scratch.path / "volumes", sc, small.separation, 7);
    vcfg.survival_csv = scratch.path / "small_survival.csv";
    text::write_file(vcfg.survival_csv, survival::format_survival_csv(sc.survival));
    vcfg.seed = 7;
    vcfg.train.epochs = 50;
    for (const char* out : {"va", "vb"}) {
        vcfg.out_dir = scratch.path / out;
        pipeline::run_pipeline(vcfg);
    }
    const auto vdiff = differing_files(scratch.path / "va", scratch.path / "vb", compared_volumes);

    std::vector<std::string> all = diff;
    all.insert(all.end(), vdiff.begin(), vdiff.end());
    return {all.empty(), std::to_string(compared) + " artifacts (features mode) and " +
                             std::to_string(compared_volumes) + " (volumes mode) compared byte for byte" +
                             (all.empty() ? ", all identical" : "; differing: " + join(all, ", "))};
}

// ---------------------------------------------------------------- 8

Outcome normalization_contract() {
    std::mt19937_64 rng(2024);
    std::lognormal_distribution<double> heavy(0.0, 1.5);
    std::uniform_int_distribution<int> size(2, 150);
    std::bernoulli_distribution tie(0.2);
    int bad_codes = 0, non_monotone = 0;
    for (int trial = 0; trial < kNormalizationColumns; ++trial) {
        FeatureMatrix m;
        m.columns = {"f"};
        const int n = size(rng);
        m.values.resize(n, 1);
        for (int i = 0; i < n; ++i) {
            m.ids.push_back("p" + std::to_string(i));
            m.values(i, 0) = tie(rng) ? 1.0 : heavy(rng);
        }
        const auto codes = normalization::apply_quantile_map(normalization::fit_quantiles(m), m);
        std::vector<std::pair<double, double>> pairs;
        for (int i = 0; i < n; ++i) {
            const double c = codes.values(i, 0);
            bad_codes += std::find(normalization::kCodes.begin(), normalization::kCodes.end(), c) ==
                         normalization::kCodes.end();
            pairs.emplace_back(m.values(i, 0), c);
        }
        std::sort(pairs.begin(), pairs.end());
        for (std::size_t i = 1; i < pairs.size(); ++i) non_monotone += pairs[i - 1].second > pairs[i].second;
    }
    const auto co = cohort::generate_synthetic_cohort({});
    const auto full = normalization::apply_quantile_map(normalization::fit_quantiles(co.features), co.features);
    for (Eigen::Index i = 0; i < full.values.size(); ++i)
        bad_codes += std::find(normalization::kCodes.begin(), normalization::kCodes.end(), full.values.data()[i]) ==
                     normalization::kCodes.end();
    return {bad_codes == 0 && non_monotone == 0,
            std::to_string(kNormalizationColumns) + " random columns plus a 108x28 cohort: " + std::to_string(bad_codes) +
                " values outside the 7 codes, " + std::to_string(non_monotone) + " monotonicity violations"};
}

// ---------------------------------------------------------------- 9

Outcome extractor_oracles() {
    using features::Mask;
    using features::Volume;
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<std::size_t> side(2, kGlcmMaxSide);
    std::uniform_int_distribution<int> levels(1, 6);
    std::bernoulli_distribution coin(0.75);
    int glcm_exact = 0;
    double stat_worst = 0.0;
    for (int trial = 0; trial < kGlcmCases;) {
        Volume b({side(rng), side(rng), side(rng)}, {1, 1, 1});
        Mask m(b.dims);
        std::uniform_int_distribution<int> bin(1, levels(rng));
        for (std::size_t i = 0; i < b.data.size(); ++i) {
            m.data[i] = coin(rng);
            if (m.data[i]) b.data[i] = bin(rng);
        }
        std::size_t ng = 0;
        const auto ref = oracle::glcm_pair_counts(b, m, features::glcm_directions(), ng);
        bool any = false;
        for (const auto& c : ref) any = any || std::any_of(c.begin(), c.end(), [](double v) { return v > 0; });
        if (!any) continue;
        ++trial;
        const auto impl = features::glcm_counts(b, m);
        glcm_exact += impl.levels == ng && impl.counts == ref;

        // Direction-averaged statistics from the oracle counts.
        std::array<double, features::kGlcmCount> mean{};
        int used = 0;
        for (const auto& c : ref) {
            if (std::all_of(c.begin(), c.end(), [](double v) { return v == 0; })) continue;
            const auto s = oracle::glcm_stats_from_counts(c, ng);
            for (std::size_t k = 0; k < s.size(); ++k) mean[k] += s[k];
            ++used;
        }
        const auto fv = features::glcm_features(b, m);
        for (std::size_t k = 0; k < mean.size(); ++k) {
            const double want = mean[k] / used;
            stat_worst = std::max(stat_worst, std::abs(fv.values[k] - want) / std::max(1.0, std::abs(want)));
        }
    }

    std::uniform_real_distribution<double> coef(-5.0, 5.0), sp(0.4, 4.0);
    double resample_worst = 0.0;
    for (int trial = 0; trial < kResampleCases; ++trial) {
        Volume v({6, 5, 7}, {sp(rng), sp(rng), sp(rng)});
        const double c0 = coef(rng), cx = coef(rng), cy = coef(rng), cz = coef(rng);
        for (std::size_t k = 0; k < v.dims[2]; ++k)
            for (std::size_t j = 0; j < v.dims[1]; ++j)
                for (std::size_t i = 0; i < v.dims[0]; ++i)
                    v.at(i, j, k) = c0 + cx * (i + 0.5) * v.spacing[0] + cy * (j + 0.5) * v.spacing[1] +
                                    cz * (k + 0.5) * v.spacing[2];
        const features::Spacing target = {sp(rng), sp(rng), sp(rng)};
        const Volume out = features::resample_trilinear(v, target);
        for (std::size_t k = 0; k < out.dims[2]; ++k)
            for (std::size_t j = 0; j < out.dims[1]; ++j)
                for (std::size_t i = 0; i < out.dims[0]; ++i) {
                    std::array<double, 3> p = {(i + 0.5) * target[0], (j + 0.5) * target[1], (k + 0.5) * target[2]};
                    for (std::size_t a = 0; a < 3; ++a)
                        p[a] = std::clamp(p[a], 0.5 * v.spacing[a], (v.dims[a] - 0.5) * v.spacing[a]);
                    resample_worst =
                        std::max(resample_worst, std::abs(out.at(i, j, k) - (c0 + cx * p[0] + cy * p[1] + cz * p[2])));
                }
    }
    return {glcm_exact == kGlcmCases && stat_worst < kGlcmStatTol && resample_worst < kResampleTol,
            "GLCM counts exact in " + std::to_string(glcm_exact) + "/" + std::to_string(kGlcmCases) +
                " volumes up to 6^3, statistics worst rel diff " + fmt("%.1e", stat_worst) + "; trilinear affine worst " +
                fmt("%.1e", resample_worst) + " over " + std::to_string(kResampleCases) + " fields"};
}

struct Criterion {
    int number;
    const char* name;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria{
        {1, "configuration fidelity", configuration_fidelity},
        {2, "MML cluster-count recovery", mml_recovery},
        {3, "message-length monotonicity", message_length_monotone},
        {4, "autoencoder gradients and training", autoencoder_gradients},
        {5, "survival oracle equivalence", survival_oracles},
        {6, "end-to-end synthetic study", synthetic_study},
        {7, "determinism", determinism},
        {8, "normalization contract", normalization_contract},
        {9, "feature extractor oracles", extractor_oracles},
    };
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) {
        const int n = std::atoi(argv[i]);
        if (n < 1 || n > static_cast<int>(criteria.size())) {
            std::fprintf(stderr, "usage: %s [criterion 1-9 ...]\n", argv[0]);
            return 2;
        }
        wanted.insert(n);
    }
    int failed = 0;
    for (const auto& c : criteria) {
        if (!wanted.empty() && !wanted.count(c.number)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s  %d. %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", c.number, c.name, o.detail.c_str(), secs);
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed ? 1 : 0;
}
