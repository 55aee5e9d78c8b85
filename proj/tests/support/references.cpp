#include "references.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <stdexcept>

namespace perfseg::testref {

namespace {

struct RefEdge {
    double w;
    std::size_t a, b;
};

bool adjacent(int x0, int y0, int z0, int x1, int y1, int z1, int connectivity) {
    const int dx = std::abs(x0 - x1), dy = std::abs(y0 - y1), dz = std::abs(z0 - z1);
    if (dx == 0 && dy == 0 && dz == 0) return false;
    if (connectivity == 6) return dx + dy + dz == 1;
    return dx <= 1 && dy <= 1 && dz <= 1;
}

// Own z-scoring pass: population moments over masked voxels in ascending
// linear order, constant channels map to 0.
std::vector<float> zscored_copy(const Volume4D& vol, const BinaryMask& mask) {
    const std::size_t voxels = vol.voxel_count();
    std::vector<float> out(vol.data.begin(), vol.data.end());
    std::size_t total = 0;
    for (std::size_t i = 0; i < voxels; ++i) total += (mask.data[i] != 0);
    for (int m = 0; m < vol.channels; ++m) {
        double sum = 0.0;
        for (std::size_t i = 0; i < voxels; ++i)
            if (mask.data[i]) sum += vol.data[voxels * m + i];
        const double mean = sum / static_cast<double>(total);
        double ss = 0.0;
        for (std::size_t i = 0; i < voxels; ++i)
            if (mask.data[i]) {
                const double d = vol.data[voxels * m + i] - mean;
                ss += d * d;
            }
        const double stddev = std::sqrt(ss / static_cast<double>(total));
        const bool constant = stddev <= 1e-12 * std::max(1.0, std::abs(mean));
        for (std::size_t i = 0; i < voxels; ++i) {
            if (!mask.data[i])
                out[voxels * m + i] = 0.0f;
            else
                out[voxels * m + i] =
                    constant ? 0.0f
                             : static_cast<float>((vol.data[voxels * m + i] - mean) / stddev);
        }
    }
    return out;
}

}  // namespace

LabelVolume reference_felzenszwalb(const Volume4D& vol, const SupervoxelParams& params,
                                   const BinaryMask& mask) {
    const int W = vol.width, H = vol.height, Z = vol.depth, M = vol.channels;
    const std::size_t voxels = vol.voxel_count();

    // step 1: optional channel normalization
    std::vector<float> values = params.normalize_channels
                                    ? zscored_copy(vol, mask)
                                    : std::vector<float>(vol.data.begin(), vol.data.end());

    auto coords = [&](std::size_t i, int& x, int& y, int& z) {
        x = static_cast<int>(i % W);
        y = static_cast<int>(i / W % H);
        z = static_cast<int>(i / (static_cast<std::size_t>(W) * H));
    };

    // step 2: every masked adjacent pair, by brute-force pair scan
    std::vector<RefEdge> edges;
    for (std::size_t a = 0; a < voxels; ++a) {
        if (!mask.data[a]) continue;
        int xa, ya, za;
        coords(a, xa, ya, za);
        for (std::size_t b = a + 1; b < voxels; ++b) {
            if (!mask.data[b]) continue;
            int xb, yb, zb;
            coords(b, xb, yb, zb);
            if (!adjacent(xa, ya, za, xb, yb, zb, params.connectivity)) continue;
            double ss = 0.0;
            for (int m = 0; m < M; ++m) {
                const double d = static_cast<double>(values[voxels * m + a]) -
                                 static_cast<double>(values[voxels * m + b]);
                ss += d * d;
            }
            double w = std::sqrt(ss);
            if (params.spacing_weighted) {
                const double ex = (xa - xb) * vol.spacing_mm[0];
                const double ey = (ya - yb) * vol.spacing_mm[1];
                const double ez = (za - zb) * vol.spacing_mm[2];
                w /= std::sqrt(ex * ex + ey * ey + ez * ez);
            }
            edges.push_back({w, a, b});
        }
    }

    // step 3: total order (weight, min index, max index)
    std::sort(edges.begin(), edges.end(), [](const RefEdge& l, const RefEdge& r) {
        if (l.w != r.w) return l.w < r.w;
        if (l.a != r.a) return l.a < r.a;
        return l.b < r.b;
    });

    // Components as a plain id array; merging rewrites the whole array.
    std::vector<std::size_t> comp(voxels, 0);
    std::map<std::size_t, std::int64_t> size;
    std::map<std::size_t, double> internal;
    for (std::size_t i = 0; i < voxels; ++i) {
        comp[i] = i;
        if (mask.data[i]) {
            size[i] = 1;
            internal[i] = 0.0;
        }
    }
    auto merge = [&](std::size_t ca, std::size_t cb, double w) {
        const std::size_t keep = std::min(ca, cb), drop = std::max(ca, cb);
        for (std::size_t i = 0; i < voxels; ++i)
            if (comp[i] == drop) comp[i] = keep;
        size[keep] += size[drop];
        size.erase(drop);
        internal[keep] = w;
        internal.erase(drop);
    };

    // step 4: merge pass with the tau(C) = rho/|C| predicate
    for (const RefEdge& e : edges) {
        const std::size_t ca = comp[e.a], cb = comp[e.b];
        if (ca == cb) continue;
        const double ta = internal[ca] + params.rho / static_cast<double>(size[ca]);
        const double tb = internal[cb] + params.rho / static_cast<double>(size[cb]);
        if (e.w <= std::min(ta, tb)) merge(ca, cb, e.w);
    }

    // step 5: absorb undersized components over the same edge order
    for (const RefEdge& e : edges) {
        const std::size_t ca = comp[e.a], cb = comp[e.b];
        if (ca == cb) continue;
        if (size[ca] < params.min_size || size[cb] < params.min_size) merge(ca, cb, e.w);
    }

    // step 6: dense relabel in first-voxel-encounter order
    LabelVolume out;
    out.width = W;
    out.height = H;
    out.depth = Z;
    out.spacing_mm = vol.spacing_mm;
    out.labels.assign(voxels, 0);
    std::map<std::size_t, std::uint32_t> dense;
    std::uint32_t next = 0;
    for (std::size_t i = 0; i < voxels; ++i) {
        if (!mask.data[i]) continue;
        auto it = dense.find(comp[i]);
        if (it == dense.end()) it = dense.emplace(comp[i], ++next).first;
        out.labels[i] = it->second;
    }
    return out;
}

Volume4D reference_pms(const Volume4D& ctp, const BinaryMask& mask) {
    const int T = ctp.channels;
    const std::size_t voxels = ctp.voxel_count();
    const double dt = ctp.frame_interval_s;

    std::size_t total = 0;
    for (std::size_t i = 0; i < voxels; ++i) total += (mask.data[i] != 0);

    std::vector<double> ref(T, 0.0);
    for (int t = 0; t < T; ++t) {
        double sum = 0.0;
        for (std::size_t i = 0; i < voxels; ++i)
            if (mask.data[i]) sum += ctp.data[voxels * t + i];
        ref[t] = sum / static_cast<double>(total);
    }
    int ref_peak = 0;
    for (int t = 1; t < T; ++t)
        if (ref[t] > ref[ref_peak]) ref_peak = t;

    Volume4D out;
    out.width = ctp.width;
    out.height = ctp.height;
    out.depth = ctp.depth;
    out.channels = 5;
    out.spacing_mm = ctp.spacing_mm;
    out.frame_interval_s = 0.0;
    out.data.assign(voxels * 5, 0.0f);

    for (std::size_t i = 0; i < voxels; ++i) {
        if (!mask.data[i]) continue;
        std::vector<double> c(T), e(T);
        for (int t = 0; t < T; ++t) c[t] = ctp.data[voxels * t + i];
        const double b = (c[0] + c[1]) / 2.0;
        for (int t = 0; t < T; ++t) e[t] = c[t] - b;

        double auc = 0.0;
        for (int t = 0; t + 1 < T; ++t)
            auc += (std::max(e[t], 0.0) + std::max(e[t + 1], 0.0)) / 2.0 * dt;

        double slope = (e[1] - e[0]) / dt;
        for (int t = 0; t + 1 < T; ++t) slope = std::max(slope, (e[t + 1] - e[t]) / dt);

        int peak = 0;
        for (int t = 1; t < T; ++t)
            if (c[t] > c[peak]) peak = t;

        double mip = c[0];
        for (int t = 1; t < T; ++t)
            if (c[t] > mip) mip = c[t];

        out.data[voxels * 0 + i] = static_cast<float>(auc);
        out.data[voxels * 1 + i] = static_cast<float>(slope);
        out.data[voxels * 2 + i] = static_cast<float>(dt * peak);
        out.data[voxels * 3 + i] = static_cast<float>(dt * peak - dt * ref_peak);
        out.data[voxels * 4 + i] = static_cast<float>(mip);
    }
    return out;
}

double exhaustive_achievable_dice(const LabelVolume& labels, const BinaryMask& gt) {
    const std::uint32_t k = labels.max_label();
    if (k > 20) throw std::invalid_argument("exhaustive_achievable_dice: too many labels");
    const std::size_t gt_count = gt.count();
    if (gt_count == 0) return 0.0;

    std::vector<std::int64_t> size(k + 1, 0), inter(k + 1, 0);
    for (std::size_t i = 0; i < labels.labels.size(); ++i) {
        const std::uint32_t l = labels.labels[i];
        if (l == 0) continue;
        ++size[l];
        if (gt.data[i]) ++inter[l];
    }

    double best = 0.0;
    for (std::uint64_t subset = 0; subset < (1ULL << k); ++subset) {
        std::int64_t s = 0, a = 0;
        for (std::uint32_t l = 1; l <= k; ++l)
            if (subset & (1ULL << (l - 1))) {
                s += size[l];
                a += inter[l];
            }
        const double d = 2.0 * static_cast<double>(a) /
                         static_cast<double>(s + static_cast<std::int64_t>(gt_count));
        best = std::max(best, d);
    }
    return best;
}

Confusion count_confusion(const BinaryMask& pred, const BinaryMask& gt) {
    Confusion c;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool p = pred.data[i] != 0, g = gt.data[i] != 0;
        if (p && g) ++c.tp;
        if (p && !g) ++c.fp;
        if (!p && g) ++c.fn;
        if (!p && !g) ++c.tn;
    }
    return c;
}

double reference_dice(const BinaryMask& pred, const BinaryMask& gt) {
    const Confusion c = count_confusion(pred, gt);
    if (2 * c.tp + c.fp + c.fn == 0) return 1.0;
    return 2.0 * static_cast<double>(c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
}

double reference_mcc(const BinaryMask& pred, const BinaryMask& gt) {
    const Confusion c = count_confusion(pred, gt);
    const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
    const double fn = static_cast<double>(c.fn), tn = static_cast<double>(c.tn);
    const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    if (denom == 0.0) return 0.0;
    return (tp * tn - fp * fn) / std::sqrt(denom);
}

bool label_connected(const LabelVolume& labels, std::uint32_t label, int connectivity) {
    const int W = labels.width, H = labels.height, Z = labels.depth;
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.labels.size(); ++i)
        if (labels.labels[i] == label) members.push_back(i);
    if (members.empty()) return false;

    std::vector<std::uint8_t> visited(labels.labels.size(), 0);
    std::vector<std::size_t> stack{members[0]};
    visited[members[0]] = 1;
    std::size_t reached = 0;
    while (!stack.empty()) {
        const std::size_t i = stack.back();
        stack.pop_back();
        ++reached;
        const int x = static_cast<int>(i % W);
        const int y = static_cast<int>(i / W % H);
        const int z = static_cast<int>(i / (static_cast<std::size_t>(W) * H));
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0 && dz == 0) continue;
                    if (connectivity == 6 && std::abs(dx) + std::abs(dy) + std::abs(dz) != 1)
                        continue;
                    const int nx = x + dx, ny = y + dy, nz = z + dz;
                    if (nx < 0 || nx >= W || ny < 0 || ny >= H || nz < 0 || nz >= Z) continue;
                    const std::size_t ni = labels.index(nx, ny, nz);
                    if (visited[ni] || labels.labels[ni] != label) continue;
                    visited[ni] = 1;
                    stack.push_back(ni);
                }
    }
    return reached == members.size();
}

}  // namespace perfseg::testref
