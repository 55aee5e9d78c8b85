#include "perfseg/preproc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace perfseg {

namespace {

void require_mask_match(const Volume4D& v, const BinaryMask& mask) {
    if (mask.width != v.width || mask.height != v.height || mask.depth != v.depth)
        throw std::invalid_argument("mask dims do not match volume");
}

}  // namespace

Volume4D hu_rescale(const Volume4D& v, double slope, double intercept) {
    if (!std::isfinite(slope) || !std::isfinite(intercept))
        throw std::invalid_argument("hu_rescale: slope/intercept must be finite");
    Volume4D out = v;
    for (float& x : out.data)
        x = static_cast<float>(static_cast<double>(x) * slope + intercept);
    return out;
}

Volume4D gamma_correct(const Volume4D& v, double gamma, double lo, double hi) {
    if (!(gamma > 0.0)) throw std::invalid_argument("gamma_correct: gamma must be > 0");
    if (!(hi > lo)) throw std::invalid_argument("gamma_correct: hi must be > lo");
    Volume4D out = v;
    const double range = hi - lo;
    for (float& x : out.data) {
        double u = (static_cast<double>(x) - lo) / range;
        u = std::clamp(u, 0.0, 1.0);
        x = static_cast<float>(lo + range * std::pow(u, gamma));
    }
    return out;
}

Volume4D hist_equalize(const Volume4D& v, const BinaryMask& mask, int bins) {
    if (bins < 2) throw std::invalid_argument("hist_equalize: bins must be >= 2");
    require_mask_match(v, mask);
    if (mask.empty()) throw std::invalid_argument("hist_equalize: empty mask");

    Volume4D out = v;
    const std::size_t voxels = v.voxel_count();
    for (int m = 0; m < v.channels; ++m) {
        const float* src = v.data.data() + voxels * m;

        float lo = std::numeric_limits<float>::max();
        float hi = std::numeric_limits<float>::lowest();
        std::size_t total = 0;
        for (std::size_t i = 0; i < voxels; ++i) {
            if (!mask.data[i]) continue;
            lo = std::min(lo, src[i]);
            hi = std::max(hi, src[i]);
            ++total;
        }
        if (!(hi > lo)) continue;  // constant channel

        const double scale = static_cast<double>(bins) / (static_cast<double>(hi) - lo);
        auto bin_of = [&](float x) {
            int b = static_cast<int>((static_cast<double>(x) - lo) * scale);
            return std::clamp(b, 0, bins - 1);
        };

        std::vector<std::size_t> hist(bins, 0);
        for (std::size_t i = 0; i < voxels; ++i)
            if (mask.data[i]) ++hist[bin_of(src[i])];

        std::vector<double> cdf(bins, 0.0);
        std::size_t cum = 0;
        for (int b = 0; b < bins; ++b) {
            cum += hist[b];
            cdf[b] = static_cast<double>(cum) / static_cast<double>(total);
        }
        double cdf_min = 0.0;
        for (int b = 0; b < bins; ++b)
            if (hist[b] > 0) {
                cdf_min = cdf[b];
                break;
            }
        if (cdf_min >= 1.0) continue;  // all mass in one bin

        float* dst = out.data.data() + voxels * m;
        for (std::size_t i = 0; i < voxels; ++i) {
            if (!mask.data[i]) continue;
            dst[i] = static_cast<float>((cdf[bin_of(src[i])] - cdf_min) / (1.0 - cdf_min));
        }
    }
    return out;
}

Volume4D zscore_channels(const Volume4D& v, const BinaryMask& mask) {
    require_mask_match(v, mask);
    std::size_t total = mask.count();
    if (total == 0) throw std::invalid_argument("zscore_channels: empty mask");

    Volume4D out = v;
    const std::size_t voxels = v.voxel_count();
    for (int m = 0; m < v.channels; ++m) {
        const float* src = v.data.data() + voxels * m;
        double sum = 0.0;
        for (std::size_t i = 0; i < voxels; ++i)
            if (mask.data[i]) sum += src[i];
        const double mean = sum / static_cast<double>(total);
        double ss = 0.0;
        for (std::size_t i = 0; i < voxels; ++i)
            if (mask.data[i]) {
                const double d = src[i] - mean;
                ss += d * d;
            }
        const double stddev = std::sqrt(ss / static_cast<double>(total));
        // Below this the channel is constant up to float rounding.
        const bool constant = stddev <= 1e-12 * std::max(1.0, std::abs(mean));

        float* dst = out.data.data() + voxels * m;
        for (std::size_t i = 0; i < voxels; ++i) {
            if (!mask.data[i]) {
                dst[i] = 0.0f;
            } else {
                dst[i] = constant ? 0.0f : static_cast<float>((src[i] - mean) / stddev);
            }
        }
    }
    return out;
}

}  // namespace perfseg
