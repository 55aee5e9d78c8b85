#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "perfseg/rng.hpp"
#include "perfseg/supervox.hpp"
#include "perfseg/volume.hpp"

namespace perfseg {

struct TransformParams {
    double rotation_deg = 15.0;    // drawn uniform in [-r, +r]
    double translation_px = 10.0;  // per axis, uniform in [-t, +t]
    std::array<double, 2> scale_range{0.9, 1.1};
    std::array<double, 2> gamma_range{0.8, 1.25};  // intensity jitter, image only
    double apply_probability = 0.5;

    void validate() const;
};

struct EpisodeParams {
    int min_slices = 2;
    int min_pixels_per_slice = 25;
    TransformParams transform;

    void validate() const;
};

enum class TransformedSide { none, support, query };
const char* to_string(TransformedSide side);
TransformedSide transformed_side_from_string(const std::string& s);

/// Record of one sampled transform; identity when no transform was applied.
struct TransformRecord {
    double rotation_deg = 0.0;
    double scale = 1.0;
    double tx = 0.0, ty = 0.0;
    double gamma = 1.0;
};

/// One self-supervised training unit: a support slice/pseudolabel pair and a
/// query slice/pseudolabel pair cut from the same volume around one
/// supervoxel.
struct Episode {
    SliceTW support_image;
    BinaryMask support_label;
    SliceTW query_image;
    BinaryMask query_label;
    std::uint32_t supervoxel_id = 0;
    std::string volume_id;
    int support_z = 0;
    int query_z = 0;
    TransformedSide transformed_side = TransformedSide::none;
    TransformRecord transform;
    std::uint64_t seed = 0;
};

/// Labels whose footprint has >= min_pixels_per_slice pixels on each of
/// >= min_slices distinct slices.
std::vector<std::uint32_t> eligible_supervoxels(const SegmentStats& stats, int min_slices,
                                                int min_pixels_per_slice);

/// Deterministic joint warp of an image/label slice pair: affine
/// (rotate, scale, translate about the slice center), image sampled
/// bilinearly, label nearest-neighbor; out-of-bounds fills with 0. Intensity
/// gamma applies to the image only, per channel over its own value range.
std::pair<SliceTW, BinaryMask> warp_pair(const SliceTW& img, const BinaryMask& lbl,
                                         const TransformRecord& rec);

/// Samples a transform from tp and applies it; resamples (bounded retries)
/// if the warped label comes out empty, then throws.
std::pair<SliceTW, BinaryMask> apply_transform(const SliceTW& img, const BinaryMask& lbl,
                                               const TransformParams& tp, Rng& rng,
                                               TransformRecord* record = nullptr);

/// Builds one episode: uniform choice of an eligible supervoxel, uniform
/// choice of two distinct slices from its eligible span, pseudolabels from
/// the supervoxel footprint, and (with probability apply_probability) a
/// random transform of one side. Deterministic given rng_seed.
Episode build_episode(const Volume4D& input, const LabelVolume& labels,
                      const SegmentStats& stats, const EpisodeParams& params,
                      std::uint64_t rng_seed);
Episode build_episode(const Volume4D& input, const LabelVolume& labels,
                      const EpisodeParams& params, std::uint64_t rng_seed);

}  // namespace perfseg
