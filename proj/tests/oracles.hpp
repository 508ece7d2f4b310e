#pragma once

// Independent reference computations used only by tests. None of these call
// into the library's numerical code paths they are meant to check.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "phenoclust/volume.hpp"

namespace oracle {

/// Eigenvalues of a symmetric 3x3 matrix by cyclic Jacobi rotations, descending.
inline std::array<double, 3> jacobi_eigenvalues(std::array<std::array<double, 3>, 3> a) {
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < 3; ++p)
            for (int q = p + 1; q < 3; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-30) break;
        for (int p = 0; p < 3; ++p)
            for (int q = p + 1; q < 3; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < 3; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (int k = 0; k < 3; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
    }
    std::array<double, 3> ev = {a[0][0], a[1][1], a[2][2]};
    std::sort(ev.begin(), ev.end(), [](double x, double y) { return x > y; });
    return ev;
}

/// Co-occurrence counts by enumerating every unordered pair of masked voxels
/// and keeping those whose displacement is a unit step in one of the 13
/// canonical directions (or its negation). Returns Ng x Ng symmetric counts
/// per direction, in the canonical direction order given by `dirs`.
inline std::vector<std::vector<double>> glcm_pair_counts(const phenoclust::features::Volume& binned,
                                                         const phenoclust::features::Mask& m,
                                                         const std::array<std::array<int, 3>, 13>& dirs,
                                                         std::size_t& levels) {
    struct Vox {
        long x, y, z;
        std::size_t bin;
    };
    std::vector<Vox> voxels;
    levels = 0;
    for (std::size_t k = 0; k < m.dims[2]; ++k)
        for (std::size_t j = 0; j < m.dims[1]; ++j)
            for (std::size_t i = 0; i < m.dims[0]; ++i)
                if (m.at(i, j, k)) {
                    const auto b = static_cast<std::size_t>(binned.at(i, j, k));
                    voxels.push_back({static_cast<long>(i), static_cast<long>(j), static_cast<long>(k), b});
                    levels = std::max(levels, b);
                }
    std::vector<std::vector<double>> counts(dirs.size(), std::vector<double>(levels * levels, 0.0));
    for (std::size_t a = 0; a < voxels.size(); ++a)
        for (std::size_t b = a + 1; b < voxels.size(); ++b) {
            const long dx = voxels[b].x - voxels[a].x;
            const long dy = voxels[b].y - voxels[a].y;
            const long dz = voxels[b].z - voxels[a].z;
            for (std::size_t d = 0; d < dirs.size(); ++d) {
                const bool forward = dx == dirs[d][0] && dy == dirs[d][1] && dz == dirs[d][2];
                const bool backward = dx == -dirs[d][0] && dy == -dirs[d][1] && dz == -dirs[d][2];
                if (!forward && !backward) continue;
                const std::size_t u = voxels[a].bin - 1, v = voxels[b].bin - 1;
                counts[d][u * levels + v] += 1.0;
                counts[d][v * levels + u] += 1.0;
            }
        }
    return counts;
}

/// Texture statistics from counts via explicit marginal distributions
/// (px, py, their means and standard deviations), not assuming symmetry.
inline std::array<double, 8> glcm_stats_from_counts(const std::vector<double>& counts, std::size_t levels) {
    double total = 0.0;
    for (double c : counts) total += c;
    std::vector<double> px(levels, 0.0), py(levels, 0.0);
    for (std::size_t a = 0; a < levels; ++a)
        for (std::size_t b = 0; b < levels; ++b) {
            px[a] += counts[a * levels + b] / total;
            py[b] += counts[a * levels + b] / total;
        }
    double mx = 0, my = 0;
    for (std::size_t a = 0; a < levels; ++a) {
        mx += (a + 1.0) * px[a];
        my += (a + 1.0) * py[a];
    }
    double sx = 0, sy = 0;
    for (std::size_t a = 0; a < levels; ++a) {
        sx += (a + 1.0 - mx) * (a + 1.0 - mx) * px[a];
        sy += (a + 1.0 - my) * (a + 1.0 - my) * py[a];
    }
    std::array<double, 8> s{};
    double exy = 0;
    for (std::size_t a = 0; a < levels; ++a)
        for (std::size_t b = 0; b < levels; ++b) {
            const double p = counts[a * levels + b] / total;
            if (p <= 0) continue;
            const double i = a + 1.0, j = b + 1.0;
            s[0] += (i - j) * (i - j) * p;
            s[1] += std::abs(i - j) * p;
            s[2] += p / (1 + (i - j) * (i - j));
            s[3] += p * p;
            s[4] += -p * std::log(p) / std::log(2.0);
            exy += i * j * p;
            s[6] += std::pow(i + j - mx - my, 3) * p;
            s[7] += std::pow(i + j - mx - my, 4) * p;
        }
    s[5] = (sx * sy > 1e-24) ? (exy - mx * my) / std::sqrt(sx * sy) : 1.0;
    return s;
}

/// Multivariate normal density straight from the textbook formula, using an
/// explicit inverse and determinant rather than a factorization.
inline double gaussian_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov) {
    const double d = static_cast<double>(x.size());
    const Eigen::VectorXd r = x - mu;
    const double q = r.dot(cov.inverse() * r);
    return std::exp(-0.5 * q) / std::sqrt(std::pow(2.0 * M_PI, d) * cov.determinant());
}

/// Posterior responsibilities and log-likelihood without any log-sum-exp
/// shifting; only usable when densities do not underflow.
inline double naive_mixture(const std::vector<double>& weights, const std::vector<Eigen::VectorXd>& means,
                            const std::vector<Eigen::MatrixXd>& covs, const Eigen::MatrixXd& data,
                            Eigen::MatrixXd& resp) {
    const auto k = static_cast<Eigen::Index>(weights.size());
    resp.resize(data.rows(), k);
    double ll = 0.0;
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        double total = 0.0;
        for (Eigen::Index m = 0; m < k; ++m) {
            const auto mi = static_cast<std::size_t>(m);
            resp(i, m) = weights[mi] * gaussian_density(data.row(i).transpose(), means[mi], covs[mi]);
            total += resp(i, m);
        }
        resp.row(i) /= total;
        ll += std::log(total);
    }
    return ll;
}

/// Chi-square upper tail in closed form for df = 1..5.
inline double chi2_tail_closed_form(double x, int df) {
    const double h = x / 2.0;
    const double odd = std::erfc(std::sqrt(h));
    const double g = std::sqrt(2.0 * x / M_PI) * std::exp(-h);
    switch (df) {
        case 1: return odd;
        case 2: return std::exp(-h);
        case 3: return odd + g;
        case 4: return std::exp(-h) * (1.0 + h);
        case 5: return odd + g * (1.0 + x / 3.0);
        default: return NAN;
    }
}

/// Explicit Breslow partial likelihood for one covariate: every event i
/// contributes x_i b - log sum over {j : t_j >= t_i} of exp(x_j b).
inline double partial_likelihood_1d(const std::vector<double>& t, const std::vector<int>& event,
                                    const std::vector<double>& x, double b) {
    double ll = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!event[i]) continue;
        double denom = 0.0;
        for (std::size_t j = 0; j < t.size(); ++j)
            if (t[j] >= t[i]) denom += std::exp(x[j] * b);
        ll += x[i] * b - std::log(denom);
    }
    return ll;
}

/// Maximizer of a unimodal 1-D function by a coarse grid on [lo, hi]
/// followed by golden-section refinement around the best grid point.
template <typename F>
double grid_golden_argmax(F&& f, double lo, double hi, int grid = 400) {
    double best = lo, best_v = f(lo);
    const double step = (hi - lo) / grid;
    for (int i = 1; i <= grid; ++i) {
        const double b = lo + i * step;
        const double v = f(b);
        if (v > best_v) {
            best_v = v;
            best = b;
        }
    }
    double a = std::max(lo, best - step), c = std::min(hi, best + step);
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = c - r * (c - a), x2 = a + r * (c - a);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 200 && c - a > 1e-12; ++it) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (c - a);
            f2 = f(x2);
        } else {
            c = x2;
            x2 = x1;
            f2 = f1;
            x1 = c - r * (c - a);
            f1 = f(x1);
        }
    }
    return 0.5 * (a + c);
}

/// Harrell's C by enumerating ordered pairs (i, j) where i is known to fail
/// first: an event strictly before j's time, or the only event at a shared
/// time. Returns {comparable, 2 * concordant + ties}.
inline std::pair<long, long> harrell_ordered_pairs(const std::vector<double>& risk, const std::vector<double>& t,
                                                   const std::vector<int>& event) {
    long comparable = 0, score = 0;
    for (std::size_t i = 0; i < t.size(); ++i)
        for (std::size_t j = 0; j < t.size(); ++j) {
            if (i == j || !event[i]) continue;
            const bool first = t[i] < t[j] || (t[i] == t[j] && !event[j]);
            if (!first) continue;
            ++comparable;
            score += risk[i] > risk[j] ? 2 : (risk[i] == risk[j] ? 1 : 0);
        }
    return {comparable, score};
}

/// Central finite difference; `objective_at_offset(h)` evaluates the objective
/// with one coordinate shifted by h.
template <typename Objective>
double central_difference(Objective&& objective_at_offset, double h = 1e-5) {
    return (objective_at_offset(h) - objective_at_offset(-h)) / (2.0 * h);
}

/// Relative error with an absolute floor so near-zero entries do not blow up.
inline double relative_error(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle
