#include "perfseg/supervox.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "perfseg/io.hpp"
#include "perfseg/preproc.hpp"

namespace perfseg {

void SupervoxelParams::validate() const {
    if (!(rho > 0)) throw std::invalid_argument("SupervoxelParams: rho must be > 0");
    if (min_size < 1) throw std::invalid_argument("SupervoxelParams: min_size must be >= 1");
    if (connectivity != 6 && connectivity != 26)
        throw std::invalid_argument("SupervoxelParams: connectivity must be 6 or 26");
}

namespace {

struct Edge {
    double w;
    std::uint32_t a, b;  // linear voxel indices, a < b
};

class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n), size_(n, 1), internal_(n, 0.0) {
        std::iota(parent_.begin(), parent_.end(), 0u);
    }
    std::uint32_t find(std::uint32_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];  // path halving
            x = parent_[x];
        }
        return x;
    }
    // Returns the surviving root. Roots are chosen by size; ties keep the
    // lower index. The choice does not affect the final labeling.
    std::uint32_t unite(std::uint32_t ra, std::uint32_t rb, double w) {
        if (size_[ra] < size_[rb] || (size_[ra] == size_[rb] && rb < ra)) std::swap(ra, rb);
        parent_[rb] = ra;
        size_[ra] += size_[rb];
        internal_[ra] = w;
        return ra;
    }
    std::int64_t size(std::uint32_t root) const { return size_[root]; }
    double internal(std::uint32_t root) const { return internal_[root]; }

private:
    std::vector<std::uint32_t> parent_;
    std::vector<std::int64_t> size_;
    std::vector<double> internal_;
};

// Positive-direction neighbor offsets so each undirected edge appears once.
std::vector<std::array<int, 3>> neighbor_offsets(int connectivity) {
    if (connectivity == 6) return {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    std::vector<std::array<int, 3>> offs;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (dz > 0 || (dz == 0 && dy > 0) || (dz == 0 && dy == 0 && dx > 0))
                    offs.push_back({dx, dy, dz});
            }
    return offs;
}

}  // namespace

LabelVolume felzenszwalb_4d(const Volume4D& vol, const SupervoxelParams& params,
                            const BinaryMask& mask) {
    params.validate();
    vol.validate();
    if (mask.width != vol.width || mask.height != vol.height || mask.depth != vol.depth)
        throw std::invalid_argument("felzenszwalb_4d: mask dims do not match volume");
    if (mask.empty()) throw std::invalid_argument("felzenszwalb_4d: empty mask");

    const int W = vol.width, H = vol.height, Z = vol.depth, M = vol.channels;
    const std::size_t voxels = vol.voxel_count();

    const Volume4D* src = &vol;
    Volume4D normalized;
    if (params.normalize_channels) {
        normalized = zscore_channels(vol, mask);
        src = &normalized;
    }
    const float* data = src->data.data();

    const auto offsets = neighbor_offsets(params.connectivity);
    std::vector<Edge> edges;
    edges.reserve(voxels * offsets.size() / 2);
    for (int z = 0; z < Z; ++z)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const std::size_t ia = mask.index(x, y, z);
                if (!mask.data[ia]) continue;
                for (const auto& o : offsets) {
                    const int nx = x + o[0], ny = y + o[1], nz = z + o[2];
                    if (nx < 0 || nx >= W || ny < 0 || ny >= H || nz < 0 || nz >= Z) continue;
                    const std::size_t ib = mask.index(nx, ny, nz);
                    if (!mask.data[ib]) continue;
                    double ss = 0.0;
                    for (int m = 0; m < M; ++m) {
                        const double d = static_cast<double>(data[voxels * m + ia]) -
                                         static_cast<double>(data[voxels * m + ib]);
                        ss += d * d;
                    }
                    double w = std::sqrt(ss);
                    if (params.spacing_weighted) {
                        const double ex = o[0] * vol.spacing_mm[0];
                        const double ey = o[1] * vol.spacing_mm[1];
                        const double ez = o[2] * vol.spacing_mm[2];
                        w /= std::sqrt(ex * ex + ey * ey + ez * ez);
                    }
                    const std::uint32_t a = static_cast<std::uint32_t>(std::min(ia, ib));
                    const std::uint32_t b = static_cast<std::uint32_t>(std::max(ia, ib));
                    edges.push_back({w, a, b});
                }
            }

    std::sort(edges.begin(), edges.end(), [](const Edge& l, const Edge& r) {
        if (l.w != r.w) return l.w < r.w;
        if (l.a != r.a) return l.a < r.a;
        return l.b < r.b;
    });

    UnionFind uf(voxels);

    for (const Edge& e : edges) {
        const std::uint32_t ra = uf.find(e.a);
        const std::uint32_t rb = uf.find(e.b);
        if (ra == rb) continue;
        const double tau_a = uf.internal(ra) + params.rho / static_cast<double>(uf.size(ra));
        const double tau_b = uf.internal(rb) + params.rho / static_cast<double>(uf.size(rb));
        if (e.w <= std::min(tau_a, tau_b)) uf.unite(ra, rb, e.w);
    }

    for (const Edge& e : edges) {
        const std::uint32_t ra = uf.find(e.a);
        const std::uint32_t rb = uf.find(e.b);
        if (ra == rb) continue;
        if (uf.size(ra) < params.min_size || uf.size(rb) < params.min_size)
            uf.unite(ra, rb, e.w);
    }

    LabelVolume out;
    out.width = W;
    out.height = H;
    out.depth = Z;
    out.spacing_mm = vol.spacing_mm;
    out.labels.assign(voxels, 0);
    std::vector<std::uint32_t> root_label(voxels, 0);
    std::uint32_t next = 0;
    for (std::size_t i = 0; i < voxels; ++i) {
        if (!mask.data[i]) continue;
        const std::uint32_t r = uf.find(static_cast<std::uint32_t>(i));
        if (root_label[r] == 0) root_label[r] = ++next;
        out.labels[i] = root_label[r];
    }
    return out;
}

SegmentStats segment_stats(const LabelVolume& labels) {
    labels.validate();
    SegmentStats stats;
    const std::uint32_t k = labels.max_label();
    stats.segments.resize(k);
    for (std::uint32_t l = 1; l <= k; ++l) stats.segments[l - 1].label = l;

    for (int z = 0; z < labels.depth; ++z)
        for (int y = 0; y < labels.height; ++y)
            for (int x = 0; x < labels.width; ++x) {
                const std::uint32_t l = labels.at(x, y, z);
                if (l == 0) continue;
                SegmentInfo& s = stats.segments[l - 1];
                if (s.voxel_count == 0) {
                    s.xmin = s.xmax = x;
                    s.ymin = s.ymax = y;
                    s.zmin = s.zmax = z;
                } else {
                    s.xmin = std::min(s.xmin, x);
                    s.xmax = std::max(s.xmax, x);
                    s.ymin = std::min(s.ymin, y);
                    s.ymax = std::max(s.ymax, y);
                    s.zmin = std::min(s.zmin, z);
                    s.zmax = std::max(s.zmax, z);
                }
                ++s.voxel_count;
                ++s.slice_pixels[z];
                s.centroid[0] += x;
                s.centroid[1] += y;
                s.centroid[2] += z;
                ++stats.masked_voxels;
            }
    for (SegmentInfo& s : stats.segments) {
        if (s.voxel_count > 0)
            for (double& c : s.centroid) c /= static_cast<double>(s.voxel_count);
    }
    return stats;
}

void write_stats_csv(const SegmentStats& stats, const std::string& path) {
    ensure_parent_dir(path);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open stats csv for writing: " + path);
    out << "label,count,zmin,zmax,xmin,ymin,xmax,ymax\n";
    for (const SegmentInfo& s : stats.segments) {
        out << s.label << ',' << s.voxel_count << ',' << s.zmin << ',' << s.zmax << ','
            << s.xmin << ',' << s.ymin << ',' << s.xmax << ',' << s.ymax << '\n';
    }
}

AchievableDice achievable_dice(const LabelVolume& labels, const BinaryMask& gt) {
    if (gt.width != labels.width || gt.height != labels.height || gt.depth != labels.depth)
        throw std::invalid_argument("achievable_dice: dims mismatch");

    const std::size_t gt_count = gt.count();
    if (gt_count == 0) return {0.0, {}};

    const std::uint32_t k = labels.max_label();
    std::vector<std::int64_t> size(k + 1, 0), inter(k + 1, 0);
    for (std::size_t i = 0; i < labels.labels.size(); ++i) {
        const std::uint32_t l = labels.labels[i];
        if (l == 0) continue;
        ++size[l];
        if (gt.data[i]) ++inter[l];
    }

    std::vector<std::uint32_t> order;
    order.reserve(k);
    for (std::uint32_t l = 1; l <= k; ++l)
        if (size[l] > 0) order.push_back(l);
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        // purity desc, label asc; cross-multiplied to stay exact
        const std::int64_t lhs = inter[a] * size[b];
        const std::int64_t rhs = inter[b] * size[a];
        if (lhs != rhs) return lhs > rhs;
        return a < b;
    });

    AchievableDice best;  // empty selection scores 0
    std::int64_t acc_size = 0, acc_inter = 0;
    for (std::size_t n = 0; n < order.size(); ++n) {
        acc_size += size[order[n]];
        acc_inter += inter[order[n]];
        const double d = 2.0 * static_cast<double>(acc_inter) /
                         static_cast<double>(acc_size + static_cast<std::int64_t>(gt_count));
        if (d > best.dice) {
            best.dice = d;
            best.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n) + 1);
        }
    }
    std::sort(best.selected.begin(), best.selected.end());
    return best;
}

}  // namespace perfseg
