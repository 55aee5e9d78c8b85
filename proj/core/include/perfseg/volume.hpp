#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace perfseg {

/// Dense W x H x Z x M voxel tensor with physical spacing.
/// Layout is x-fastest, then y, z, m: index = x + W*(y + H*(z + Z*m)).
/// Channels M hold either time frames (frame_interval_s > 0) or stacked
/// modalities (frame_interval_s == 0).
struct Volume4D {
    int width = 0;
    int height = 0;
    int depth = 0;
    int channels = 1;
    std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
    double frame_interval_s = 0.0;
    std::vector<float> data;
    std::string id;  // provenance only, not serialized

    std::size_t index(int x, int y, int z, int m) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(width) *
                   (static_cast<std::size_t>(y) +
                    static_cast<std::size_t>(height) *
                        (static_cast<std::size_t>(z) +
                         static_cast<std::size_t>(depth) * static_cast<std::size_t>(m)));
    }
    float at(int x, int y, int z, int m) const { return data[index(x, y, z, m)]; }
    float& at(int x, int y, int z, int m) { return data[index(x, y, z, m)]; }

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(width) * height * depth;
    }
    std::size_t element_count() const { return voxel_count() * channels; }

    /// Throws std::invalid_argument if any invariant is broken
    /// (positive dims/spacing, data length, finite values).
    void validate() const;
};

/// W x H x Z supervoxel labeling. Label 0 marks voxels outside the mask;
/// nonzero labels form the contiguous set {1..K}.
struct LabelVolume {
    int width = 0;
    int height = 0;
    int depth = 0;
    std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
    std::vector<std::uint32_t> labels;

    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(width) *
                   (static_cast<std::size_t>(y) +
                    static_cast<std::size_t>(height) * static_cast<std::size_t>(z));
    }
    std::uint32_t at(int x, int y, int z) const { return labels[index(x, y, z)]; }
    std::uint32_t& at(int x, int y, int z) { return labels[index(x, y, z)]; }

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(width) * height * depth;
    }
    std::uint32_t max_label() const;
    void validate() const;
};

/// Binary voxel mask; depth == 1 for 2D slice masks. Values are 0/1.
struct BinaryMask {
    int width = 0;
    int height = 0;
    int depth = 1;
    std::vector<std::uint8_t> data;

    static BinaryMask zeros(int w, int h, int z = 1);

    std::size_t index(int x, int y, int z = 0) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(width) *
                   (static_cast<std::size_t>(y) +
                    static_cast<std::size_t>(height) * static_cast<std::size_t>(z));
    }
    bool at(int x, int y, int z = 0) const { return data[index(x, y, z)] != 0; }
    void set(int x, int y, int z, bool v) { data[index(x, y, z)] = v ? 1 : 0; }
    void set(int x, int y, bool v) { set(x, y, 0, v); }

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(width) * height * depth;
    }
    std::size_t count() const;
    bool empty() const { return count() == 0; }
    bool same_dims(const BinaryMask& o) const {
        return width == o.width && height == o.height && depth == o.depth;
    }
    void validate() const;
};

/// One 2D(+channel) slice extracted from a Volume4D at a fixed depth.
/// Layout is x-fastest, then y, then m.
struct SliceTW {
    int width = 0;
    int height = 0;
    int channels = 1;
    int source_z = 0;
    std::string source_id;
    std::vector<float> data;

    std::size_t index(int x, int y, int m) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(width) *
                   (static_cast<std::size_t>(y) +
                    static_cast<std::size_t>(height) * static_cast<std::size_t>(m));
    }
    float at(int x, int y, int m) const { return data[index(x, y, m)]; }
    float& at(int x, int y, int m) { return data[index(x, y, m)]; }
};

/// Copies depth z of v into a standalone slice; values are bit-identical.
SliceTW extract_slice(const Volume4D& v, int z);

/// Physical volume of the set voxels in milliliters.
double mask_volume_ml(const BinaryMask& mask, const std::array<double, 3>& spacing_mm);

}  // namespace perfseg
