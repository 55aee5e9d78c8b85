#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "perfseg/volume.hpp"

namespace perfseg {

struct SupervoxelParams {
    double rho = 500.0;            // merge-scale parameter tau(C) = rho / |C|
    int min_size = 100;            // voxels
    int connectivity = 6;          // 6 or 26
    bool normalize_channels = true;
    bool spacing_weighted = false;  // divide edge weights by physical edge length

    void validate() const;
};

struct SegmentInfo {
    std::uint32_t label = 0;
    std::int64_t voxel_count = 0;
    int xmin = 0, xmax = 0, ymin = 0, ymax = 0, zmin = 0, zmax = 0;
    std::array<double, 3> centroid{0, 0, 0};
    std::map<int, std::int64_t> slice_pixels;  // z -> footprint pixels; keys = slice span
};

struct SegmentStats {
    std::vector<SegmentInfo> segments;  // index l-1 holds label l
    std::int64_t masked_voxels = 0;

    const SegmentInfo& info(std::uint32_t label) const { return segments.at(label - 1); }
};

/// Graph-based segmentation of the masked voxels of a 4D tensor, with each
/// voxel represented by its M-dimensional channel vector.
///
/// Procedure: (1) optionally z-score channels within the mask; (2) build the
/// grid graph over masked voxels, edge weight = Euclidean distance between
/// voxel vectors (divided by physical edge length when spacing_weighted);
/// (3) sort edges ascending by (weight, min index, max index); (4) union-find
/// pass merging C1, C2 over weight w iff
///     w <= min(Int(C1) + rho/|C1|, Int(C2) + rho/|C2|),
/// where Int(C) is the largest weight that merged inside C (0 initially) and
/// Int(union) = w; (5) second pass over the same edge order merging any
/// component below min_size into its neighbor; (6) dense relabel to 1..K in
/// first-voxel-encounter order. Out-of-mask voxels get label 0.
LabelVolume felzenszwalb_4d(const Volume4D& vol, const SupervoxelParams& params,
                            const BinaryMask& mask);

SegmentStats segment_stats(const LabelVolume& labels);

/// CSV: label,count,zmin,zmax,xmin,ymin,xmax,ymax
void write_stats_csv(const SegmentStats& stats, const std::string& path);

struct AchievableDice {
    double dice = 0.0;
    std::vector<std::uint32_t> selected;
};

/// Best Dice over all unions of supervoxels against gt: supervoxels sorted
/// by purity |sv n gt| / |sv| descending, best prefix taken. The prefix
/// optimum equals the exhaustive subset optimum. Empty gt yields {0, {}}.
AchievableDice achievable_dice(const LabelVolume& labels, const BinaryMask& gt);

}  // namespace perfseg
