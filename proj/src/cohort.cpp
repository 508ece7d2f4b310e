#include "phenoclust/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>

#include "phenoclust/error.hpp"
#include "phenoclust/features.hpp"
#include "phenoclust/text.hpp"

namespace phenoclust::cohort {

namespace {

std::string patient_id(std::size_t i, std::size_t n) {
    const int width = std::max(3, static_cast<int>(std::to_string(n).size()));
    char buf[32];
    std::snprintf(buf, sizeof buf, "P%0*zu", width, i + 1);
    return buf;
}

double round_to(double x, double unit) { return std::round(x / unit) * unit; }

// Cluster centres in the 3-D factor space. Up to three clusters sit on the
// scaled unit axes, so every pair is exactly `separation` apart.
std::vector<Eigen::Vector3d> centres(std::size_t k, double separation, std::mt19937_64& rng) {
    std::vector<Eigen::Vector3d> out;
    std::normal_distribution<double> n01;
    for (std::size_t c = 0; c < k; ++c) {
        Eigen::Vector3d m = Eigen::Vector3d::Zero();
        if (c < 3) {
            m(static_cast<Eigen::Index>(c)) = 1.0;
        } else {
            m << n01(rng), n01(rng), n01(rng);
            m.normalize();
        }
        out.push_back(separation / std::sqrt(2.0) * m);
    }
    return out;
}

}  // namespace

void SyntheticCohortSpec::validate() const {
    if (sizes.empty()) throw Error(Errc::contract, "cohort needs at least one cluster");
    if (std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}) != n)
        throw Error(Errc::contract, "cluster sizes must sum to n = " + std::to_string(n));
    if (hazards.size() != sizes.size())
        throw Error(Errc::contract, "need one hazard per cluster (" + std::to_string(sizes.size()) + ")");
    for (double h : hazards)
        if (!(h > 0.0) || !std::isfinite(h)) throw Error(Errc::contract, "hazards must be positive and finite");
    if (!(separation >= 0.0) || !std::isfinite(separation)) throw Error(Errc::contract, "separation must be >= 0");
    if (!(factor_sd >= 0.0) || !(noise_sd >= 0.0)) throw Error(Errc::contract, "noise scales must be >= 0");
    if (!(horizon > 0.0)) throw Error(Errc::contract, "follow-up horizon must be positive");
    if (!(censor_max > 0.0)) throw Error(Errc::contract, "censor_max must be positive");
    if (features < 1) throw Error(Errc::contract, "cohort needs at least one feature");
}

SyntheticCohortSpec null_spec(const SyntheticCohortSpec& base) {
    SyntheticCohortSpec s = base;
    s.separation = 0.0;
    std::fill(s.hazards.begin(), s.hazards.end(), base.hazards.front());
    return s;
}

SyntheticCohort generate_synthetic_cohort(const SyntheticCohortSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> n01;
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    std::vector<std::size_t> labels;
    for (std::size_t c = 0; c < spec.sizes.size(); ++c) labels.insert(labels.end(), spec.sizes[c], c);
    std::shuffle(labels.begin(), labels.end(), rng);

    const auto p = static_cast<Eigen::Index>(spec.features);
    const auto means = centres(spec.sizes.size(), spec.separation, rng);
    Eigen::MatrixXd loadings(p, 3);
    Eigen::VectorXd offset(p), scale(p);
    for (Eigen::Index f = 0; f < p; ++f) {
        for (Eigen::Index j = 0; j < 3; ++j) loadings(f, j) = n01(rng) / std::sqrt(3.0);
        offset(f) = 10.0 + 90.0 * unif(rng);
        scale(f) = 1.0 + 9.0 * unif(rng);
    }

    SyntheticCohort out;
    out.labels = labels;
    out.features.columns = p == static_cast<Eigen::Index>(features::kFeatureCount)
                               ? features::feature_names()
                               : std::vector<std::string>{};
    for (Eigen::Index f = static_cast<Eigen::Index>(out.features.columns.size()); f < p; ++f)
        out.features.columns.push_back("f" + std::to_string(f + 1));
    out.features.values.resize(static_cast<Eigen::Index>(spec.n), p);

    for (std::size_t i = 0; i < spec.n; ++i) {
        const std::size_t c = labels[i];
        const Eigen::Vector3d z = means[c] + spec.factor_sd * Eigen::Vector3d(n01(rng), n01(rng), n01(rng));
        const auto row = static_cast<Eigen::Index>(i);
        for (Eigen::Index f = 0; f < p; ++f)
            out.features.values(row, f) = offset(f) + scale(f) * (loadings.row(f).dot(z) + spec.noise_sd * n01(rng));

        const std::string id = patient_id(i, spec.n);
        out.features.ids.push_back(id);
        const double event_time = -std::log1p(-unif(rng)) / spec.hazards[c];
        const double censor_time = spec.censor_max * unif(rng);
        const double observed = std::min({event_time, censor_time, spec.horizon});
        survival::SurvivalRecord r;
        r.id = id;
        r.event = event_time <= std::min(censor_time, spec.horizon) ? 1 : 0;
        r.time = std::max(0.01, round_to(observed, 0.01));
        r.age = std::clamp(std::round(62.0 + 10.0 * n01(rng)), 25.0, 90.0);
        r.sex = unif(rng) < 0.5 ? 0.0 : 1.0;
        out.survival.push_back(std::move(r));
    }
    out.features.validate();
    return out;
}

Phantom generate_phantom(std::size_t cluster, double separation, std::mt19937_64& rng) {
    using features::Dims;
    using features::Spacing;
    const Dims dims{24, 24, 10};
    const Spacing spacing{1.5, 1.5, 4.0};
    std::normal_distribution<double> n01;
    std::uniform_real_distribution<double> jitter(0.92, 1.08);

    const double s = separation / 8.0;
    const double r = 9.0;
    std::array<double, 3> axes{r, r, r};
    double heterogeneity = 10.0;
    if (cluster % 3 == 1) {
        for (auto& a : axes) a *= 1.0 + 0.35 * s;
    } else if (cluster % 3 == 2) {
        axes = {r * (1.0 - 0.25 * s), r * (1.0 - 0.25 * s), r * (1.0 + 0.7 * s)};
        heterogeneity *= 1.0 + 2.0 * s;
    }
    for (auto& a : axes) a = std::max(2.0, a * jitter(rng));

    Phantom ph{features::Volume(dims, spacing), features::Mask(dims)};
    const double tilt = 20.0 * n01(rng);
    for (std::size_t k = 0; k < dims[2]; ++k)
        for (std::size_t j = 0; j < dims[1]; ++j)
            for (std::size_t i = 0; i < dims[0]; ++i) {
                const double x = (static_cast<double>(i) + 0.5) * spacing[0] - 18.0;
                const double y = (static_cast<double>(j) + 0.5) * spacing[1] - 18.0;
                const double z = (static_cast<double>(k) + 0.5) * spacing[2] - 20.0;
                const double q = x * x / (axes[0] * axes[0]) + y * y / (axes[1] * axes[1]) + z * z / (axes[2] * axes[2]);
                const bool inside = q <= 1.0;
                const std::size_t idx = ph.volume.index(i, j, k);
                ph.mask.data[idx] = inside ? 1 : 0;
                ph.volume.data[idx] = inside ? 200.0 + tilt * x / axes[0] + heterogeneity * n01(rng)
                                             : 100.0 + 5.0 * n01(rng);
            }
    return ph;
}

std::filesystem::path write_phantom_bundles(const std::filesystem::path& dir, const SyntheticCohort& cohort,
                                            double separation, std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    std::mt19937_64 rng(seed);
    std::string manifest = "patient_id,volume,mask\n";
    for (std::size_t i = 0; i < cohort.labels.size(); ++i) {
        const auto& id = cohort.features.ids[i];
        const Phantom ph = generate_phantom(cohort.labels[i], separation, rng);
        const std::string vol = id + "_image.vol1";
        const std::string mask = id + "_mask.vol1";
        features::write_vol1(dir / vol, ph.volume);
        features::write_mask(dir / mask, ph.mask, ph.volume.spacing);
        manifest += id + "," + vol + "," + mask + "\n";
    }
    const auto path = dir / "manifest.csv";
    text::write_file(path, manifest);
    return path;
}

}  // namespace phenoclust::cohort
