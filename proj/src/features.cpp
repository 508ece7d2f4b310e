#include "phenoclust/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/Dense>

#include "phenoclust/error.hpp"
#include "phenoclust/stats.hpp"
#include "phenoclust/text.hpp"

namespace phenoclust::features {

const char* category_name(Category c) {
    switch (c) {
        case Category::intensity: return "intensity";
        case Category::shape: return "shape";
        case Category::texture: return "texture";
    }
    return "?";
}

void FeatureVector::append(std::string name, double value, Category category) {
    if (std::find(names.begin(), names.end(), name) != names.end())
        throw Error(Errc::schema, "duplicate feature name " + name);
    names.push_back(std::move(name));
    values.push_back(value);
    categories.push_back(category);
}

void FeatureVector::append(const FeatureVector& other) {
    for (std::size_t i = 0; i < other.size(); ++i) append(other.names[i], other.values[i], other.categories[i]);
}

double FeatureVector::get(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw Error(Errc::schema, "no feature named " + name);
    return values[static_cast<std::size_t>(it - names.begin())];
}

namespace {

const std::array<const char*, kFirstOrderCount> kFirstOrderNames = {
    "firstorder_mean",     "firstorder_median",   "firstorder_minimum",  "firstorder_maximum",
    "firstorder_range",    "firstorder_variance", "firstorder_skewness", "firstorder_kurtosis",
    "firstorder_energy",   "firstorder_entropy",  "firstorder_p10",      "firstorder_p90",
    "firstorder_iqr",      "firstorder_mad",
};

const std::array<const char*, kShapeCount> kShapeNames = {
    "shape_volume",     "shape_surface_area", "shape_surface_volume_ratio",
    "shape_elongation", "shape_flatness",     "shape_max_diameter",
};

const std::array<const char*, kGlcmCount> kGlcmNames = {
    "glcm_contrast", "glcm_dissimilarity", "glcm_homogeneity",    "glcm_asm",
    "glcm_entropy",  "glcm_correlation",   "glcm_cluster_shade",  "glcm_cluster_prominence",
};

std::vector<double> masked_values(const Volume& v, const Mask& m) {
    std::vector<double> out;
    for (std::size_t idx = 0; idx < v.data.size(); ++idx)
        if (m.data[idx]) out.push_back(v.data[idx]);
    return out;
}

}  // namespace

const std::vector<std::string>& feature_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (auto s : kFirstOrderNames) n.emplace_back(s);
        for (auto s : kShapeNames) n.emplace_back(s);
        for (auto s : kGlcmNames) n.emplace_back(s);
        return n;
    }();
    return names;
}

FeatureVector first_order_features(const Volume& v, const Mask& m, double bin_width) {
    v.validate();
    m.validate_against(v);
    std::vector<double> x = masked_values(v, m);
    if (x.empty()) throw Error(Errc::empty_mask, "first-order features need at least one masked voxel");
    std::sort(x.begin(), x.end());
    const auto n = static_cast<double>(x.size());

    double sum = 0.0, energy = 0.0;
    for (double xi : x) {
        sum += xi;
        energy += xi * xi;
    }
    const double mean = sum / n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0, mad = 0.0;
    for (double xi : x) {
        const double d = xi - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
        mad += std::abs(d);
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    mad /= n;
    // Zero-variance regions report 0 skewness/kurtosis rather than NaN.
    const double skewness = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
    const double kurtosis = m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : 0.0;

    const Volume binned = discretize(v, m, bin_width);
    std::map<double, std::size_t> histogram;
    for (std::size_t idx = 0; idx < binned.data.size(); ++idx)
        if (m.data[idx]) ++histogram[binned.data[idx]];
    double entropy = 0.0;
    for (const auto& [bin, count] : histogram) {
        const double p = static_cast<double>(count) / n;
        entropy -= p * std::log2(p);
    }

    const double p25 = percentile_sorted(x, 0.25);
    const double p75 = percentile_sorted(x, 0.75);
    const std::array<double, kFirstOrderCount> values = {
        mean,     percentile_sorted(x, 0.5), x.front(), x.back(), x.back() - x.front(),
        m2,       skewness,                  kurtosis,  energy,   entropy,
        percentile_sorted(x, 0.10), percentile_sorted(x, 0.90), p75 - p25, mad,
    };
    FeatureVector fv;
    for (std::size_t i = 0; i < kFirstOrderCount; ++i) fv.append(kFirstOrderNames[i], values[i], Category::intensity);
    return fv;
}

FeatureVector shape_features(const Mask& m, const Spacing& spacing) {
    m.validate();
    for (double s : spacing)
        if (!(s > 0.0)) throw Error(Errc::invalid_volume, "spacing must be positive");

    const std::array<double, 3> face_area = {spacing[1] * spacing[2], spacing[0] * spacing[2],
                                             spacing[0] * spacing[1]};
    std::vector<Eigen::Vector3d> centers;
    std::vector<Eigen::Vector3d> boundary;
    double surface = 0.0;

    const auto inside = [&](long i, long j, long k) {
        return i >= 0 && j >= 0 && k >= 0 && i < static_cast<long>(m.dims[0]) && j < static_cast<long>(m.dims[1]) &&
               k < static_cast<long>(m.dims[2]) && m.at(i, j, k);
    };
    for (std::size_t k = 0; k < m.dims[2]; ++k)
        for (std::size_t j = 0; j < m.dims[1]; ++j)
            for (std::size_t i = 0; i < m.dims[0]; ++i) {
                if (!m.at(i, j, k)) continue;
                const Eigen::Vector3d c((i + 0.5) * spacing[0], (j + 0.5) * spacing[1], (k + 0.5) * spacing[2]);
                centers.push_back(c);
                const long li = static_cast<long>(i), lj = static_cast<long>(j), lk = static_cast<long>(k);
                const int exposed_x = !inside(li - 1, lj, lk) + !inside(li + 1, lj, lk);
                const int exposed_y = !inside(li, lj - 1, lk) + !inside(li, lj + 1, lk);
                const int exposed_z = !inside(li, lj, lk - 1) + !inside(li, lj, lk + 1);
                surface += exposed_x * face_area[0] + exposed_y * face_area[1] + exposed_z * face_area[2];
                if (exposed_x + exposed_y + exposed_z > 0) boundary.push_back(c);
            }
    if (centers.empty()) throw Error(Errc::empty_mask, "shape features need at least one foreground voxel");

    const double count = static_cast<double>(centers.size());
    const double volume = count * spacing[0] * spacing[1] * spacing[2];

    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& c : centers) mean += c;
    mean /= count;
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& c : centers) cov += (c - mean) * (c - mean).transpose();
    cov /= count;
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov, Eigen::EigenvaluesOnly);
    // Ascending order from Eigen; clamp round-off negatives.
    const double l1 = std::max(0.0, eig.eigenvalues()(2));
    const double l2 = std::max(0.0, eig.eigenvalues()(1));
    const double l3 = std::max(0.0, eig.eigenvalues()(0));
    double elongation = 1.0, flatness = 1.0;
    if (l1 > 0.0) {
        elongation = std::sqrt(l2 / l1);
        flatness = std::sqrt(l3 / l1);
    }

    // The farthest pair of voxel centers always lies on the boundary.
    double diameter2 = 0.0;
    for (std::size_t a = 0; a < boundary.size(); ++a)
        for (std::size_t b = a + 1; b < boundary.size(); ++b)
            diameter2 = std::max(diameter2, (boundary[a] - boundary[b]).squaredNorm());

    const std::array<double, kShapeCount> values = {
        volume, surface, surface / volume, elongation, flatness, std::sqrt(diameter2),
    };
    FeatureVector fv;
    for (std::size_t i = 0; i < kShapeCount; ++i) fv.append(kShapeNames[i], values[i], Category::shape);
    return fv;
}

const std::array<std::array<int, 3>, 13>& glcm_directions() {
    static const std::array<std::array<int, 3>, 13> dirs = {{
        {1, 0, 0}, {0, 1, 0}, {0, 0, 1},
        {1, 1, 0}, {1, -1, 0}, {1, 0, 1}, {1, 0, -1}, {0, 1, 1}, {0, 1, -1},
        {1, 1, 1}, {1, 1, -1}, {1, -1, 1}, {1, -1, -1},
    }};
    return dirs;
}

GlcmCounts glcm_counts(const Volume& binned, const Mask& m) {
    binned.validate();
    m.validate_against(binned);
    std::size_t levels = 0;
    for (std::size_t idx = 0; idx < binned.data.size(); ++idx) {
        if (!m.data[idx]) continue;
        const double b = binned.data[idx];
        if (b < 1.0 || b != std::floor(b))
            throw Error(Errc::malformed_input, "GLCM input must hold positive integer bins inside the mask");
        levels = std::max(levels, static_cast<std::size_t>(b));
    }
    if (levels == 0) throw Error(Errc::empty_mask, "GLCM mask is empty");

    GlcmCounts out;
    out.levels = levels;
    const auto& dims = binned.dims;
    for (const auto& dir : glcm_directions()) {
        std::vector<double> counts(levels * levels, 0.0);
        for (std::size_t k = 0; k < dims[2]; ++k)
            for (std::size_t j = 0; j < dims[1]; ++j)
                for (std::size_t i = 0; i < dims[0]; ++i) {
                    if (!m.at(i, j, k)) continue;
                    const long ni = static_cast<long>(i) + dir[0];
                    const long nj = static_cast<long>(j) + dir[1];
                    const long nk = static_cast<long>(k) + dir[2];
                    if (ni < 0 || nj < 0 || nk < 0 || ni >= static_cast<long>(dims[0]) ||
                        nj >= static_cast<long>(dims[1]) || nk >= static_cast<long>(dims[2]))
                        continue;
                    if (!m.at(ni, nj, nk)) continue;
                    const auto a = static_cast<std::size_t>(binned.at(i, j, k)) - 1;
                    const auto b = static_cast<std::size_t>(binned.at(ni, nj, nk)) - 1;
                    counts[a * levels + b] += 1.0;
                    counts[b * levels + a] += 1.0;
                }
        out.counts.push_back(std::move(counts));
    }
    return out;
}

std::array<double, kGlcmCount> glcm_statistics(const std::vector<double>& p, std::size_t levels) {
    if (p.size() != levels * levels) throw Error(Errc::shape, "GLCM probability matrix has wrong size");
    // Symmetric matrix: both marginals share mean and variance.
    double mu = 0.0;
    for (std::size_t a = 0; a < levels; ++a)
        for (std::size_t b = 0; b < levels; ++b) mu += static_cast<double>(a + 1) * p[a * levels + b];
    double var = 0.0;
    for (std::size_t a = 0; a < levels; ++a)
        for (std::size_t b = 0; b < levels; ++b) {
            const double d = static_cast<double>(a + 1) - mu;
            var += d * d * p[a * levels + b];
        }

    double contrast = 0.0, dissimilarity = 0.0, homogeneity = 0.0, asm_ = 0.0, entropy = 0.0;
    double cross = 0.0, shade = 0.0, prominence = 0.0;
    for (std::size_t a = 0; a < levels; ++a)
        for (std::size_t b = 0; b < levels; ++b) {
            const double pij = p[a * levels + b];
            if (pij == 0.0) continue;
            const double i = static_cast<double>(a + 1);
            const double j = static_cast<double>(b + 1);
            const double diff = i - j;
            contrast += diff * diff * pij;
            dissimilarity += std::abs(diff) * pij;
            homogeneity += pij / (1.0 + diff * diff);
            asm_ += pij * pij;
            entropy -= pij * std::log2(pij);
            cross += (i - mu) * (j - mu) * pij;
            const double s = i + j - 2.0 * mu;
            shade += s * s * s * pij;
            prominence += s * s * s * s * pij;
        }
    // A single occupied gray level has no marginal spread; report perfect correlation.
    const double correlation = var > 1e-12 ? cross / var : 1.0;
    return {contrast, dissimilarity, homogeneity, asm_, entropy, correlation, shade, prominence};
}

FeatureVector glcm_features(const Volume& binned, const Mask& m) {
    if (m.foreground_count() < 2) throw Error(Errc::insufficient_pairs, "GLCM needs at least 2 masked voxels");
    const GlcmCounts glcm = glcm_counts(binned, m);
    std::array<double, kGlcmCount> mean{};
    std::size_t used = 0;
    for (const auto& counts : glcm.counts) {
        double total = 0.0;
        for (double c : counts) total += c;
        if (total == 0.0) continue;
        std::vector<double> p(counts.size());
        for (std::size_t i = 0; i < counts.size(); ++i) p[i] = counts[i] / total;
        const auto stats = glcm_statistics(p, glcm.levels);
        for (std::size_t s = 0; s < kGlcmCount; ++s) mean[s] += stats[s];
        ++used;
    }
    if (used == 0) throw Error(Errc::insufficient_pairs, "no co-occurring masked voxel pair in any direction");
    FeatureVector fv;
    for (std::size_t s = 0; s < kGlcmCount; ++s)
        fv.append(kGlcmNames[s], mean[s] / static_cast<double>(used), Category::texture);
    return fv;
}

FeatureVector extract_feature_vector(const Volume& v, const Mask& m, const ExtractionConfig& cfg) {
    auto staged = [](const char* stage, auto&& fn) {
        try {
            return fn();
        } catch (const Error& e) {
            throw with_stage(stage, e);
        }
    };
    staged("validate", [&] {
        v.validate();
        m.validate_against(v);
        return 0;
    });

    Volume image = v;
    Mask mask = m;
    if (cfg.resample) {
        image = staged("resample", [&] { return resample_trilinear(v, cfg.target_spacing); });
        mask = staged("resample", [&] { return resample_nearest(m, v.spacing, cfg.target_spacing); });
    }
    if (mask.foreground_count() == 0)
        throw with_stage("resample", Error(Errc::empty_mask, "mask is empty after resampling"));

    const Volume normalized = staged("normalize", [&] { return znormalize_and_cap(image, mask); });
    const Volume binned = staged("discretize", [&] { return discretize(normalized, mask, cfg.bin_width); });

    FeatureVector fv = staged("first-order", [&] { return first_order_features(normalized, mask, cfg.bin_width); });
    fv.append(staged("shape", [&] { return shape_features(mask, image.spacing); }));
    fv.append(staged("texture", [&] { return glcm_features(binned, mask); }));

    fv.provenance["resample"] = cfg.resample ? "trilinear" : "none";
    fv.provenance["mask_resample"] = cfg.resample ? "nearest" : "none";
    fv.provenance["target_spacing"] = text::format_double(cfg.target_spacing[0]) + " " +
                                      text::format_double(cfg.target_spacing[1]) + " " +
                                      text::format_double(cfg.target_spacing[2]);
    fv.provenance["zscore_cap"] = "3";
    fv.provenance["intensity_range"] = "0 100";
    fv.provenance["bin_width"] = text::format_double(cfg.bin_width);
    fv.provenance["glcm_distance"] = "1";
    fv.provenance["glcm_directions"] = "13";
    return fv;
}

}  // namespace phenoclust::features
