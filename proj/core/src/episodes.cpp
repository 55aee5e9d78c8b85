#include "perfseg/episodes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace perfseg {

void TransformParams::validate() const {
    if (rotation_deg < 0 || translation_px < 0)
        throw std::invalid_argument("TransformParams: ranges must be non-negative");
    if (!(scale_range[0] > 0) || scale_range[1] < scale_range[0])
        throw std::invalid_argument("TransformParams: bad scale range");
    if (!(gamma_range[0] > 0) || gamma_range[1] < gamma_range[0])
        throw std::invalid_argument("TransformParams: bad gamma range");
    if (apply_probability < 0 || apply_probability > 1)
        throw std::invalid_argument("TransformParams: apply_probability must be in [0,1]");
}

void EpisodeParams::validate() const {
    if (min_slices < 2)
        throw std::invalid_argument("EpisodeParams: min_slices must be >= 2");
    if (min_pixels_per_slice < 1)
        throw std::invalid_argument("EpisodeParams: min_pixels_per_slice must be >= 1");
    transform.validate();
}

const char* to_string(TransformedSide side) {
    switch (side) {
        case TransformedSide::none: return "none";
        case TransformedSide::support: return "support";
        case TransformedSide::query: return "query";
    }
    return "none";
}

TransformedSide transformed_side_from_string(const std::string& s) {
    if (s == "none") return TransformedSide::none;
    if (s == "support") return TransformedSide::support;
    if (s == "query") return TransformedSide::query;
    throw std::invalid_argument("unknown transformed_side: " + s);
}

std::vector<std::uint32_t> eligible_supervoxels(const SegmentStats& stats, int min_slices,
                                                int min_pixels_per_slice) {
    std::vector<std::uint32_t> out;
    for (const SegmentInfo& s : stats.segments) {
        int slices = 0;
        for (const auto& [z, px] : s.slice_pixels)
            if (px >= min_pixels_per_slice) ++slices;
        if (slices >= min_slices) out.push_back(s.label);
    }
    return out;
}

std::pair<SliceTW, BinaryMask> warp_pair(const SliceTW& img, const BinaryMask& lbl,
                                         const TransformRecord& rec) {
    if (lbl.width != img.width || lbl.height != img.height || lbl.depth != 1)
        throw std::invalid_argument("warp_pair: image/label dims mismatch");

    const int W = img.width, H = img.height, M = img.channels;
    const double cx = (W - 1) / 2.0, cy = (H - 1) / 2.0;
    const double theta = rec.rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);

    // forward: p_out = scale * R * (p_in - c) + c + t; sample via the inverse
    auto source_of = [&](int xo, int yo, double& xi, double& yi) {
        const double dx = (xo - cx - rec.tx) / rec.scale;
        const double dy = (yo - cy - rec.ty) / rec.scale;
        xi = c * dx + s * dy + cx;
        yi = -s * dx + c * dy + cy;
    };

    SliceTW out_img = img;
    BinaryMask out_lbl = BinaryMask::zeros(W, H);
    const std::size_t plane = static_cast<std::size_t>(W) * H;

    for (int yo = 0; yo < H; ++yo)
        for (int xo = 0; xo < W; ++xo) {
            double xi, yi;
            source_of(xo, yo, xi, yi);

            const int xn = static_cast<int>(std::lround(xi));
            const int yn = static_cast<int>(std::lround(yi));
            if (xn >= 0 && xn < W && yn >= 0 && yn < H)
                out_lbl.set(xo, yo, lbl.at(xn, yn));

            const int x0 = static_cast<int>(std::floor(xi));
            const int y0 = static_cast<int>(std::floor(yi));
            const double fx = xi - x0, fy = yi - y0;
            for (int m = 0; m < M; ++m) {
                auto sample = [&](int x, int y) -> double {
                    if (x < 0 || x >= W || y < 0 || y >= H) return 0.0;
                    return img.data[plane * m + static_cast<std::size_t>(y) * W + x];
                };
                const double v = (1 - fx) * (1 - fy) * sample(x0, y0) +
                                 fx * (1 - fy) * sample(x0 + 1, y0) +
                                 (1 - fx) * fy * sample(x0, y0 + 1) +
                                 fx * fy * sample(x0 + 1, y0 + 1);
                out_img.data[plane * m + static_cast<std::size_t>(yo) * W + xo] =
                    static_cast<float>(v);
            }
        }

    if (rec.gamma != 1.0) {
        for (int m = 0; m < M; ++m) {
            float* ch = out_img.data.data() + plane * m;
            float lo = std::numeric_limits<float>::max();
            float hi = std::numeric_limits<float>::lowest();
            for (std::size_t i = 0; i < plane; ++i) {
                lo = std::min(lo, ch[i]);
                hi = std::max(hi, ch[i]);
            }
            if (!(hi > lo)) continue;
            const double range = static_cast<double>(hi) - lo;
            for (std::size_t i = 0; i < plane; ++i) {
                const double u = (static_cast<double>(ch[i]) - lo) / range;
                ch[i] = static_cast<float>(lo + range * std::pow(u, rec.gamma));
            }
        }
    }
    return {std::move(out_img), std::move(out_lbl)};
}

std::pair<SliceTW, BinaryMask> apply_transform(const SliceTW& img, const BinaryMask& lbl,
                                               const TransformParams& tp, Rng& rng,
                                               TransformRecord* record) {
    tp.validate();
    constexpr int kMaxAttempts = 10;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        TransformRecord rec;
        rec.rotation_deg = rng.uniform(-tp.rotation_deg, tp.rotation_deg);
        rec.tx = rng.uniform(-tp.translation_px, tp.translation_px);
        rec.ty = rng.uniform(-tp.translation_px, tp.translation_px);
        rec.scale = rng.uniform(tp.scale_range[0], tp.scale_range[1]);
        rec.gamma = rng.uniform(tp.gamma_range[0], tp.gamma_range[1]);
        auto warped = warp_pair(img, lbl, rec);
        if (warped.second.count() >= 1) {
            if (record) *record = rec;
            return warped;
        }
    }
    throw std::runtime_error("apply_transform: label emptied after retries");
}

Episode build_episode(const Volume4D& input, const LabelVolume& labels,
                      const SegmentStats& stats, const EpisodeParams& params,
                      std::uint64_t rng_seed) {
    params.validate();
    if (labels.width != input.width || labels.height != input.height ||
        labels.depth != input.depth)
        throw std::invalid_argument("build_episode: label dims do not match volume");

    const auto eligible =
        eligible_supervoxels(stats, params.min_slices, params.min_pixels_per_slice);
    if (eligible.empty())
        throw std::runtime_error("build_episode: no eligible supervoxel in volume");

    Rng rng(rng_seed);
    const std::uint32_t sv =
        eligible[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(eligible.size()) - 1))];

    // Sampling pool: slices where the footprint meets the pixel floor, so
    // both pseudolabels are non-degenerate.
    std::vector<int> pool;
    for (const auto& [z, px] : stats.info(sv).slice_pixels)
        if (px >= params.min_pixels_per_slice) pool.push_back(z);

    const std::size_t si = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1));
    std::size_t qi = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 2));
    if (qi >= si) ++qi;
    const int support_z = pool[si];
    const int query_z = pool[qi];

    auto footprint = [&](int z) {
        BinaryMask m = BinaryMask::zeros(labels.width, labels.height);
        for (int y = 0; y < labels.height; ++y)
            for (int x = 0; x < labels.width; ++x)
                if (labels.at(x, y, z) == sv) m.set(x, y, true);
        return m;
    };

    Episode ep;
    ep.supervoxel_id = sv;
    ep.volume_id = input.id;
    ep.support_z = support_z;
    ep.query_z = query_z;
    ep.seed = rng_seed;
    ep.support_image = extract_slice(input, support_z);
    ep.support_label = footprint(support_z);
    ep.query_image = extract_slice(input, query_z);
    ep.query_label = footprint(query_z);

    if (rng.bernoulli(params.transform.apply_probability)) {
        const bool on_support = rng.bernoulli(0.5);
        ep.transformed_side = on_support ? TransformedSide::support : TransformedSide::query;
        auto& img = on_support ? ep.support_image : ep.query_image;
        auto& lbl = on_support ? ep.support_label : ep.query_label;
        auto warped = apply_transform(img, lbl, params.transform, rng, &ep.transform);
        img = std::move(warped.first);
        lbl = std::move(warped.second);
    }
    return ep;
}

Episode build_episode(const Volume4D& input, const LabelVolume& labels,
                      const EpisodeParams& params, std::uint64_t rng_seed) {
    return build_episode(input, labels, segment_stats(labels), params, rng_seed);
}

}  // namespace perfseg
