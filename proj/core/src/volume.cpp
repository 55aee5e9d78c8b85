#include "perfseg/volume.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace perfseg {

void Volume4D::validate() const {
    if (width < 1 || height < 1 || depth < 1 || channels < 1)
        throw std::invalid_argument("Volume4D: all dims must be >= 1");
    if (spacing_mm[0] <= 0 || spacing_mm[1] <= 0 || spacing_mm[2] <= 0)
        throw std::invalid_argument("Volume4D: spacing must be positive");
    if (data.size() != element_count())
        throw std::invalid_argument("Volume4D: data length does not match dims");
    for (float v : data)
        if (!std::isfinite(v))
            throw std::invalid_argument("Volume4D: non-finite value in data");
}

std::uint32_t LabelVolume::max_label() const {
    std::uint32_t m = 0;
    for (std::uint32_t l : labels) m = std::max(m, l);
    return m;
}

void LabelVolume::validate() const {
    if (width < 1 || height < 1 || depth < 1)
        throw std::invalid_argument("LabelVolume: all dims must be >= 1");
    if (spacing_mm[0] <= 0 || spacing_mm[1] <= 0 || spacing_mm[2] <= 0)
        throw std::invalid_argument("LabelVolume: spacing must be positive");
    if (labels.size() != voxel_count())
        throw std::invalid_argument("LabelVolume: label count does not match dims");
    // Nonzero labels must form the contiguous set {1..K}.
    std::uint32_t k = max_label();
    if (k > 0) {
        std::vector<std::uint8_t> seen(k + 1, 0);
        for (std::uint32_t l : labels) seen[l] = 1;
        for (std::uint32_t l = 1; l <= k; ++l)
            if (!seen[l])
                throw std::invalid_argument("LabelVolume: labels are not dense 1..K");
    }
}

BinaryMask BinaryMask::zeros(int w, int h, int z) {
    BinaryMask m;
    m.width = w;
    m.height = h;
    m.depth = z;
    m.data.assign(static_cast<std::size_t>(w) * h * z, 0);
    return m;
}

std::size_t BinaryMask::count() const {
    std::size_t n = 0;
    for (std::uint8_t v : data) n += (v != 0);
    return n;
}

void BinaryMask::validate() const {
    if (width < 1 || height < 1 || depth < 1)
        throw std::invalid_argument("BinaryMask: all dims must be >= 1");
    if (data.size() != voxel_count())
        throw std::invalid_argument("BinaryMask: data length does not match dims");
    for (std::uint8_t v : data)
        if (v > 1) throw std::invalid_argument("BinaryMask: values must be 0 or 1");
}

SliceTW extract_slice(const Volume4D& v, int z) {
    if (z < 0 || z >= v.depth)
        throw std::out_of_range("extract_slice: z index out of range");
    SliceTW s;
    s.width = v.width;
    s.height = v.height;
    s.channels = v.channels;
    s.source_z = z;
    s.source_id = v.id;
    s.data.resize(static_cast<std::size_t>(v.width) * v.height * v.channels);
    const std::size_t plane = static_cast<std::size_t>(v.width) * v.height;
    for (int m = 0; m < v.channels; ++m) {
        const float* src = v.data.data() + v.index(0, 0, z, m);
        std::copy(src, src + plane, s.data.data() + plane * m);
    }
    return s;
}

double mask_volume_ml(const BinaryMask& mask, const std::array<double, 3>& spacing_mm) {
    if (spacing_mm[0] <= 0 || spacing_mm[1] <= 0 || spacing_mm[2] <= 0)
        throw std::invalid_argument("mask_volume_ml: spacing must be positive");
    const double voxel_mm3 = spacing_mm[0] * spacing_mm[1] * spacing_mm[2];
    return static_cast<double>(mask.count()) * voxel_mm3 / 1000.0;
}

}  // namespace perfseg
