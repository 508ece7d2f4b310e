#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace phenoclust::features {

using Dims = std::array<std::size_t, 3>;
using Spacing = std::array<double, 3>;

/// Dense 3D scalar grid, x-fastest storage. Spacing is mm per voxel.
struct Volume {
    Dims dims{0, 0, 0};
    Spacing spacing{1.0, 1.0, 1.0};
    std::vector<double> data;

    Volume() = default;
    Volume(Dims d, Spacing s);
    Volume(Dims d, Spacing s, std::vector<double> values);

    std::size_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }
    std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
        return i + dims[0] * (j + dims[1] * k);
    }
    double& at(std::size_t i, std::size_t j, std::size_t k) { return data[index(i, j, k)]; }
    double at(std::size_t i, std::size_t j, std::size_t k) const { return data[index(i, j, k)]; }

    /// Throws invalid_volume on zero dims, bad spacing, size mismatch or non-finite data.
    void validate() const;
};

/// Binary volume-of-interest. Shares the grid of its paired Volume.
struct Mask {
    Dims dims{0, 0, 0};
    std::vector<std::uint8_t> data;

    Mask() = default;
    explicit Mask(Dims d);
    Mask(Dims d, std::vector<std::uint8_t> values);

    std::size_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }
    std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
        return i + dims[0] * (j + dims[1] * k);
    }
    bool at(std::size_t i, std::size_t j, std::size_t k) const { return data[index(i, j, k)] != 0; }
    std::size_t foreground_count() const;

    void validate() const;
    void validate_against(const Volume& v) const;
};

/// Trilinear resampling onto a grid with `target` spacing. Output voxel
/// centers are mapped into the input's physical frame (voxel i spans
/// [i s, (i+1) s)); samples beyond the outermost input centers clamp to the edge.
Volume resample_trilinear(const Volume& v, const Spacing& target);

/// Nearest-neighbour counterpart of resample_trilinear for masks.
Mask resample_nearest(const Mask& m, const Spacing& source, const Spacing& target);

/// Output grid size for resampling: ceil(dims * spacing / target), at least 1.
Dims resampled_dims(const Dims& dims, const Spacing& source, const Spacing& target);

/// Masked z-score, capped at +-3 and mapped affinely onto [0, 100].
/// Voxels outside the mask become 0.
Volume znormalize_and_cap(const Volume& v, const Mask& m);

/// Fixed-bin-width discretization: floor((x - min_masked) / bin_width) + 1
/// inside the mask, 0 outside.
Volume discretize(const Volume& v, const Mask& m, double bin_width);

/// VOL1 text bundle: `VOL1`, `dims dx dy dz`, `spacing sx sy sz`, `data`,
/// followed by the values in x-fastest order.
Volume read_vol1(const std::filesystem::path& path);
void write_vol1(const std::filesystem::path& path, const Volume& v);
Mask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const Mask& m, const Spacing& spacing);

}  // namespace phenoclust::features
