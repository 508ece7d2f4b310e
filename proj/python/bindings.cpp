#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

#include "phenoclust/autoencoder.hpp"
#include "phenoclust/cohort.hpp"
#include "phenoclust/error.hpp"
#include "phenoclust/features.hpp"
#include "phenoclust/mixture.hpp"
#include "phenoclust/pipeline.hpp"
#include "phenoclust/quantile_map.hpp"
#include "phenoclust/survival.hpp"

namespace py = pybind11;
using namespace py::literals;
using namespace phenoclust;

namespace {

using FortranVolume = py::array_t<double, py::array::f_style | py::array::forcecast>;
using FortranMask = py::array_t<std::uint8_t, py::array::f_style | py::array::forcecast>;

std::vector<std::string> default_ids(std::size_t n, const std::string& prefix) {
    std::vector<std::string> ids;
    ids.reserve(n);
    for (std::size_t i = 0; i < n; ++i) ids.push_back(prefix + std::to_string(i + 1));
    return ids;
}

FeatureMatrix as_matrix(const Eigen::MatrixXd& values, std::optional<std::vector<std::string>> columns,
                        const std::string& prefix) {
    FeatureMatrix m;
    m.values = values;
    m.ids = default_ids(m.rows(), "p");
    m.columns = columns ? std::move(*columns) : default_ids(m.cols(), prefix);
    m.validate();
    return m;
}

survival::Records as_records(const std::vector<double>& time, const std::vector<int>& event) {
    if (time.size() != event.size())
        throw Error(Errc::shape, "time and event lengths differ");
    survival::Records r;
    r.reserve(time.size());
    for (std::size_t i = 0; i < time.size(); ++i) r.push_back({"p" + std::to_string(i + 1), time[i], event[i], {}, {}});
    return r;
}

features::Dims dims_of(const py::buffer_info& info) {
    if (info.ndim != 3) throw Error(Errc::invalid_volume, "expected a 3D array");
    return {static_cast<std::size_t>(info.shape[0]), static_cast<std::size_t>(info.shape[1]),
            static_cast<std::size_t>(info.shape[2])};
}

py::dict km_dict(const survival::KmCurve& km) {
    return py::dict("times"_a = km.times, "survival"_a = km.survival, "at_risk"_a = km.at_risk,
                    "events"_a = km.events);
}

}  // namespace

PYBIND11_MODULE(_phenoclust, m) {
    m.doc() = "Radiomic phenotyping: quantile coding, autoencoder, MML mixture and survival statistics.";

    static py::exception<Error> numeric(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            if (e.is_numeric())
                py::set_error(numeric, e.what());
            else
                py::set_error(PyExc_ValueError, e.what());
        }
    });

    m.def("feature_names", &features::feature_names, "Column order of extracted feature vectors.");

    m.def(
        "extract_features",
        [](const FortranVolume& volume, const FortranMask& mask, std::array<double, 3> spacing, bool resample) {
            const auto vinfo = volume.request();
            const auto minfo = mask.request();
            const auto vd = dims_of(vinfo);
            if (dims_of(minfo) != vd) throw Error(Errc::shape, "mask shape differs from volume");
            const auto* vp = static_cast<const double*>(vinfo.ptr);
            const auto* mp = static_cast<const std::uint8_t*>(minfo.ptr);
            const std::size_t n = vd[0] * vd[1] * vd[2];
            features::Volume v(vd, spacing, std::vector<double>(vp, vp + n));
            features::Mask mk(vd, std::vector<std::uint8_t>(mp, mp + n));
            features::ExtractionConfig cfg;
            cfg.resample = resample;
            const auto fv = features::extract_feature_vector(v, mk, cfg);
            py::dict out;
            for (std::size_t i = 0; i < fv.size(); ++i) out[py::str(fv.names[i])] = fv.values[i];
            return out;
        },
        "volume"_a, "mask"_a, "spacing"_a = std::array<double, 3>{1.0, 1.0, 1.0}, "resample"_a = true,
        "Feature dict for one scan. Arrays are indexed [x, y, z]; spacing is mm per voxel.");

    py::class_<normalization::QuantileMap>(m, "QuantileMap")
        .def_property_readonly("columns",
                               [](const normalization::QuantileMap& q) {
                                   std::vector<std::string> names;
                                   for (const auto& c : q.columns) names.push_back(c.name);
                                   return names;
                               })
        .def_readonly("n_samples", &normalization::QuantileMap::n_samples)
        .def(
            "apply",
            [](const normalization::QuantileMap& q, const Eigen::MatrixXd& values) {
                std::vector<std::string> names;
                for (const auto& c : q.columns) names.push_back(c.name);
                return normalization::apply_quantile_map(q, as_matrix(values, names, "f")).values;
            },
            "values"_a)
        .def("to_json", &normalization::QuantileMap::to_json)
        .def_static("from_json", &normalization::QuantileMap::from_json, "doc"_a);

    m.def(
        "fit_quantiles",
        [](const Eigen::MatrixXd& values, std::optional<std::vector<std::string>> columns) {
            return normalization::fit_quantiles(as_matrix(values, std::move(columns), "f"));
        },
        "values"_a, "columns"_a = py::none());

    m.def("default_layer_sizes", &ae::default_layer_sizes, "input_width"_a);

    py::class_<ae::Checkpoint>(m, "Autoencoder")
        .def_property_readonly("sizes", [](const ae::Checkpoint& c) { return c.net.sizes; })
        .def_readonly("loss_history", &ae::Checkpoint::loss_history)
        .def("encode", [](const ae::Checkpoint& c, const Eigen::MatrixXd& x) { return ae::encode(c.net, x); }, "data"_a)
        .def("decode", [](const ae::Checkpoint& c, const Eigen::MatrixXd& z) { return ae::decode(c.net, z); },
             "latent"_a)
        .def("to_json", &ae::Checkpoint::to_json)
        .def_static("from_json", &ae::Checkpoint::from_json, "doc"_a);

    m.def(
        "train_autoencoder",
        [](const Eigen::MatrixXd& data, std::size_t epochs, std::uint64_t seed, std::size_t batch_size,
           double learning_rate, std::vector<std::size_t> hidden) {
            ae::TrainConfig cfg;
            cfg.epochs = epochs;
            cfg.seed = seed;
            cfg.batch_size = batch_size;
            cfg.adam.learning_rate = learning_rate;
            py::gil_scoped_release release;
            return pipeline::train_autoencoder(as_matrix(data, std::nullopt, "f"), cfg, hidden);
        },
        "data"_a, "epochs"_a = 400, "seed"_a = 0, "batch_size"_a = 64, "learning_rate"_a = 0.001,
        "hidden"_a = std::vector<std::size_t>{});

    py::class_<mml::FitResult>(m, "Mixture")
        .def_property_readonly("weights", [](const mml::FitResult& f) { return f.model.weights; })
        .def_property_readonly("means", [](const mml::FitResult& f) { return f.model.means; })
        .def_property_readonly("covariances", [](const mml::FitResult& f) { return f.model.covariances; })
        .def_property_readonly("components", [](const mml::FitResult& f) { return f.model.components(); })
        .def_readonly("message_length", &mml::FitResult::message_length)
        .def_readonly("log_likelihood", &mml::FitResult::log_likelihood)
        .def_property_readonly("trace",
                               [](const mml::FitResult& f) {
                                   py::list rows;
                                   for (const auto& e : f.trace.entries)
                                       rows.append(py::dict("restart"_a = e.restart, "segment"_a = e.segment,
                                                            "sweep"_a = e.sweep, "components"_a = e.components,
                                                            "thresholded"_a = e.thresholded,
                                                            "log_likelihood"_a = e.log_likelihood,
                                                            "message_length"_a = e.message_length));
                                   return rows;
                               })
        .def(
            "predict",
            [](const mml::FitResult& f, const Eigen::MatrixXd& data) {
                auto a = mml::predict(f.model, data);
                return py::make_tuple(a.labels, a.responsibilities);
            },
            "data"_a, "Hard labels (0-based) and the responsibility matrix.")
        .def("to_json", [](const mml::FitResult& f) { return f.model.to_json(); });

    m.def(
        "fit_mixture",
        [](const Eigen::MatrixXd& data, std::size_t k_max, std::size_t k_min, std::uint64_t seed, double tol,
           std::size_t restarts) {
            mml::FitConfig cfg;
            cfg.k_max = k_max;
            cfg.k_min = k_min;
            cfg.seed = seed;
            cfg.tol = tol;
            cfg.restarts = restarts;
            py::gil_scoped_release release;
            return mml::fit_mml(data, cfg);
        },
        "data"_a, "k_max"_a = 25, "k_min"_a = 1, "seed"_a = 0, "tol"_a = 1e-5, "restarts"_a = 1);

    m.def(
        "kaplan_meier",
        [](const std::vector<double>& time, const std::vector<int>& event) {
            return km_dict(survival::kaplan_meier(as_records(time, event)));
        },
        "time"_a, "event"_a);

    m.def(
        "log_rank",
        [](const std::vector<double>& time, const std::vector<int>& event, const std::vector<std::size_t>& groups) {
            const auto records = as_records(time, event);
            if (groups.size() != records.size()) throw Error(Errc::shape, "groups length differs");
            std::vector<survival::Records> split;
            for (std::size_t i = 0; i < groups.size(); ++i) {
                if (groups[i] >= split.size()) split.resize(groups[i] + 1);
                split[groups[i]].push_back(records[i]);
            }
            std::erase_if(split, [](const survival::Records& g) { return g.empty(); });
            const auto lr = survival::log_rank(split);
            return py::dict("chi2"_a = lr.chi2, "df"_a = lr.df, "p"_a = lr.p, "observed"_a = lr.observed,
                            "expected"_a = lr.expected);
        },
        "time"_a, "event"_a, "groups"_a);

    m.def(
        "cox_fit",
        [](const std::vector<double>& time, const std::vector<int>& event, const Eigen::MatrixXd& x) {
            const auto c = survival::cox_fit(as_records(time, event), x);
            return py::dict("beta"_a = c.beta, "se"_a = c.se, "hazard_ratio"_a = c.hazard_ratio,
                            "ci_lower"_a = c.ci_lower, "ci_upper"_a = c.ci_upper, "p"_a = c.p,
                            "log_partial_likelihood"_a = c.log_partial_likelihood, "iterations"_a = c.iterations);
        },
        "time"_a, "event"_a, "x"_a);

    m.def(
        "concordance_index",
        [](const std::vector<double>& risk, const std::vector<double>& time, const std::vector<int>& event,
           std::size_t resamples, std::uint64_t seed) {
            const auto c = survival::concordance_index(risk, as_records(time, event), resamples, seed);
            return py::dict("c"_a = c.c, "se"_a = c.se, "comparable"_a = c.comparable,
                            "concordant"_a = 0.5 * static_cast<double>(c.concordant_halves));
        },
        "risk"_a, "time"_a, "event"_a, "resamples"_a = 0, "seed"_a = 0);

    m.def(
        "synthetic_cohort",
        [](std::uint64_t seed, bool null) {
            cohort::SyntheticCohortSpec spec;
            spec.seed = seed;
            const auto co = cohort::generate_synthetic_cohort(null ? cohort::null_spec(spec) : spec);
            std::vector<double> time;
            std::vector<int> event;
            for (const auto& r : co.survival) {
                time.push_back(r.time);
                event.push_back(r.event);
            }
            return py::dict("ids"_a = co.features.ids, "columns"_a = co.features.columns,
                            "features"_a = co.features.values, "time"_a = time, "event"_a = event,
                            "labels"_a = co.labels);
        },
        "seed"_a = 0, "null"_a = false);

    m.def(
        "run_pipeline",
        [](const std::filesystem::path& config, std::optional<std::filesystem::path> out_dir,
           std::function<void(const std::string&)> log) {
            auto cfg = pipeline::PipelineConfig::load(config);
            if (out_dir) cfg.out_dir = *out_dir;
            pipeline::LogSink sink;
            if (log)
                sink = [&log](const std::string& line) {
                    py::gil_scoped_acquire acquire;
                    log(line);
                };
            py::gil_scoped_release release;
            const auto result = pipeline::run_pipeline(cfg, sink);
            py::gil_scoped_acquire acquire;
            return py::dict("components"_a = result.selected_components, "sizes"_a = result.report.sizes,
                            "labels"_a = result.report.labels, "log"_a = result.log,
                            "out_dir"_a = cfg.out_dir);
        },
        "config"_a, "out_dir"_a = py::none(), "log"_a = py::none(),
        "Runs every stage from a phenoclust-config JSON file and writes the artifacts.");
}
