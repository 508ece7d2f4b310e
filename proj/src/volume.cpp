#include "phenoclust/volume.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "phenoclust/error.hpp"
#include "phenoclust/text.hpp"

namespace phenoclust::features {

Volume::Volume(Dims d, Spacing s) : dims(d), spacing(s), data(d[0] * d[1] * d[2], 0.0) {}

Volume::Volume(Dims d, Spacing s, std::vector<double> values)
    : dims(d), spacing(s), data(std::move(values)) {
    validate();
}

void Volume::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] == 0) throw Error(Errc::invalid_volume, "zero-length axis");
        if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
            throw Error(Errc::invalid_volume, "spacing must be positive and finite");
    }
    if (data.size() != voxel_count())
        throw Error(Errc::invalid_volume, "data length " + std::to_string(data.size()) +
                                              " does not match dims product " +
                                              std::to_string(voxel_count()));
    for (double x : data)
        if (!std::isfinite(x)) throw Error(Errc::invalid_volume, "non-finite voxel value");
}

Mask::Mask(Dims d) : dims(d), data(d[0] * d[1] * d[2], 0) {}

Mask::Mask(Dims d, std::vector<std::uint8_t> values) : dims(d), data(std::move(values)) {
    validate();
}

std::size_t Mask::foreground_count() const {
    return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](auto b) { return b != 0; }));
}

void Mask::validate() const {
    for (auto d : dims)
        if (d == 0) throw Error(Errc::invalid_volume, "mask has a zero-length axis");
    if (data.size() != voxel_count()) throw Error(Errc::invalid_volume, "mask data length mismatch");
    for (auto b : data)
        if (b > 1) throw Error(Errc::invalid_volume, "mask values must be 0 or 1");
}

void Mask::validate_against(const Volume& v) const {
    validate();
    if (dims != v.dims) throw Error(Errc::invalid_volume, "mask dims do not match volume dims");
}

Dims resampled_dims(const Dims& dims, const Spacing& source, const Spacing& target) {
    Dims out{};
    for (int a = 0; a < 3; ++a) {
        if (!(target[a] > 0.0)) throw Error(Errc::invalid_volume, "target spacing must be positive");
        const double extent = static_cast<double>(dims[a]) * source[a] / target[a];
        // Guard against ceil(3.0000000000000004) == 4 from the division.
        const double n = std::ceil(extent * (1.0 - 1e-12));
        out[a] = std::max<std::size_t>(1, static_cast<std::size_t>(n));
    }
    return out;
}

namespace {

struct AxisSample {
    std::size_t lo;
    std::size_t hi;
    double frac;
};

std::vector<AxisSample> axis_samples(std::size_t in_dim, std::size_t out_dim, double ratio) {
    std::vector<AxisSample> samples(out_dim);
    const double last = static_cast<double>(in_dim - 1);
    for (std::size_t o = 0; o < out_dim; ++o) {
        double pos = (static_cast<double>(o) + 0.5) * ratio - 0.5;
        pos = std::clamp(pos, 0.0, last);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const double frac = pos - static_cast<double>(lo);
        if (lo + 1 >= in_dim || frac == 0.0)
            samples[o] = {lo, lo, 0.0};
        else
            samples[o] = {lo, lo + 1, frac};
    }
    return samples;
}

inline double lerp_exact(double a, double b, double f) { return f == 0.0 ? a : a + f * (b - a); }

}  // namespace

Volume resample_trilinear(const Volume& v, const Spacing& target) {
    v.validate();
    const Dims out_dims = resampled_dims(v.dims, v.spacing, target);
    std::array<std::vector<AxisSample>, 3> axes;
    for (int a = 0; a < 3; ++a) axes[a] = axis_samples(v.dims[a], out_dims[a], target[a] / v.spacing[a]);

    Volume out(out_dims, target);
    for (std::size_t k = 0; k < out_dims[2]; ++k) {
        const auto& sz = axes[2][k];
        for (std::size_t j = 0; j < out_dims[1]; ++j) {
            const auto& sy = axes[1][j];
            for (std::size_t i = 0; i < out_dims[0]; ++i) {
                const auto& sx = axes[0][i];
                auto along_x = [&](std::size_t jj, std::size_t kk) {
                    return lerp_exact(v.at(sx.lo, jj, kk), v.at(sx.hi, jj, kk), sx.frac);
                };
                auto along_y = [&](std::size_t kk) {
                    return lerp_exact(along_x(sy.lo, kk), along_x(sy.hi, kk), sy.frac);
                };
                out.at(i, j, k) = lerp_exact(along_y(sz.lo), along_y(sz.hi), sz.frac);
            }
        }
    }
    return out;
}

Mask resample_nearest(const Mask& m, const Spacing& source, const Spacing& target) {
    m.validate();
    const Dims out_dims = resampled_dims(m.dims, source, target);
    std::array<std::vector<std::size_t>, 3> nearest;
    for (int a = 0; a < 3; ++a) {
        const double ratio = target[a] / source[a];
        nearest[a].resize(out_dims[a]);
        for (std::size_t o = 0; o < out_dims[a]; ++o) {
            const double pos = (static_cast<double>(o) + 0.5) * ratio;
            nearest[a][o] = std::min(m.dims[a] - 1, static_cast<std::size_t>(std::floor(pos)));
        }
    }
    Mask out(out_dims);
    for (std::size_t k = 0; k < out_dims[2]; ++k)
        for (std::size_t j = 0; j < out_dims[1]; ++j)
            for (std::size_t i = 0; i < out_dims[0]; ++i)
                out.data[out.index(i, j, k)] = m.data[m.index(nearest[0][i], nearest[1][j], nearest[2][k])];
    return out;
}

Volume znormalize_and_cap(const Volume& v, const Mask& m) {
    v.validate();
    m.validate_against(v);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t idx = 0; idx < v.data.size(); ++idx)
        if (m.data[idx]) {
            sum += v.data[idx];
            ++n;
        }
    if (n < 2) throw Error(Errc::constant_region, "z-normalization needs at least 2 masked voxels");
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t idx = 0; idx < v.data.size(); ++idx)
        if (m.data[idx]) ss += (v.data[idx] - mean) * (v.data[idx] - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n));
    if (!(sd > 0.0)) throw Error(Errc::constant_region, "masked intensities have zero variance");

    Volume out(v.dims, v.spacing);
    for (std::size_t idx = 0; idx < v.data.size(); ++idx) {
        if (!m.data[idx]) continue;
        const double z = std::clamp((v.data[idx] - mean) / sd, -3.0, 3.0);
        out.data[idx] = (z + 3.0) / 6.0 * 100.0;
    }
    return out;
}

Volume discretize(const Volume& v, const Mask& m, double bin_width) {
    v.validate();
    m.validate_against(v);
    if (!(bin_width > 0.0)) throw Error(Errc::malformed_input, "bin width must be positive");
    double lo = INFINITY;
    for (std::size_t idx = 0; idx < v.data.size(); ++idx)
        if (m.data[idx]) lo = std::min(lo, v.data[idx]);
    if (!std::isfinite(lo)) throw Error(Errc::empty_mask, "discretization mask is empty");

    Volume out(v.dims, v.spacing);
    for (std::size_t idx = 0; idx < v.data.size(); ++idx)
        if (m.data[idx]) out.data[idx] = std::floor((v.data[idx] - lo) / bin_width) + 1.0;
    return out;
}

namespace {

struct Vol1Contents {
    Dims dims{};
    Spacing spacing{};
    std::vector<double> values;
};

Vol1Contents parse_vol1(const std::filesystem::path& path) {
    std::istringstream in(text::read_file(path));
    const std::string where = path.string();
    std::string token;
    auto expect = [&](const char* word) {
        if (!(in >> token) || token != word)
            throw Error(Errc::malformed_input, where + ": expected '" + word + "'");
    };
    auto number = [&]() {
        double x = 0.0;
        if (!(in >> token) || !text::parse_double(token, x))
            throw Error(Errc::malformed_input, where + ": bad number '" + token + "'");
        return x;
    };

    Vol1Contents c;
    expect("VOL1");
    expect("dims");
    for (auto& d : c.dims) {
        const double x = number();
        if (x < 1 || x != std::floor(x)) throw Error(Errc::invalid_volume, where + ": dims must be positive integers");
        d = static_cast<std::size_t>(x);
    }
    expect("spacing");
    for (auto& s : c.spacing) s = number();
    expect("data");
    const std::size_t n = c.dims[0] * c.dims[1] * c.dims[2];
    c.values.reserve(n);
    for (std::size_t i = 0; i < n; ++i) c.values.push_back(number());
    if (in >> token) throw Error(Errc::malformed_input, where + ": trailing data after " + std::to_string(n) + " values");
    return c;
}

std::string vol1_header(const Dims& dims, const Spacing& spacing) {
    std::string s = "VOL1\ndims";
    for (auto d : dims) s += " " + std::to_string(d);
    s += "\nspacing";
    for (auto x : spacing) s += " " + text::format_double(x);
    s += "\ndata\n";
    return s;
}

template <typename Values>
std::string vol1_body(const Dims& dims, const Values& values) {
    std::string s;
    s.reserve(values.size() * 8);
    for (std::size_t idx = 0; idx < values.size(); ++idx) {
        s += text::format_double(static_cast<double>(values[idx]));
        s += (idx + 1) % dims[0] == 0 ? '\n' : ' ';
    }
    return s;
}

}  // namespace

Volume read_vol1(const std::filesystem::path& path) {
    auto c = parse_vol1(path);
    return Volume(c.dims, c.spacing, std::move(c.values));
}

void write_vol1(const std::filesystem::path& path, const Volume& v) {
    v.validate();
    text::write_file(path, vol1_header(v.dims, v.spacing) + vol1_body(v.dims, v.data));
}

Mask read_mask(const std::filesystem::path& path) {
    auto c = parse_vol1(path);
    std::vector<std::uint8_t> bits(c.values.size());
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (c.values[i] != 0.0 && c.values[i] != 1.0)
            throw Error(Errc::invalid_volume, path.string() + ": mask values must be 0 or 1");
        bits[i] = static_cast<std::uint8_t>(c.values[i]);
    }
    return Mask(c.dims, std::move(bits));
}

void write_mask(const std::filesystem::path& path, const Mask& m, const Spacing& spacing) {
    m.validate();
    text::write_file(path, vol1_header(m.dims, spacing) + vol1_body(m.dims, m.data));
}

}  // namespace phenoclust::features
