#include "perfseg/perfusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "perfseg/rng.hpp"

namespace perfseg {

Volume4D compute_pms(const Volume4D& ctp, const BinaryMask& mask) {
    ctp.validate();
    const int T = ctp.channels;
    if (T < 4) throw std::invalid_argument("compute_pms: need at least 4 frames");
    if (!(ctp.frame_interval_s > 0))
        throw std::invalid_argument("compute_pms: frame_interval_s must be > 0");
    if (mask.width != ctp.width || mask.height != ctp.height || mask.depth != ctp.depth)
        throw std::invalid_argument("compute_pms: mask dims do not match volume");
    const std::size_t voxels = ctp.voxel_count();
    std::size_t masked = mask.count();
    if (masked == 0) throw std::invalid_argument("compute_pms: empty mask");

    const double dt = ctp.frame_interval_s;

    // Reference curve: per-frame mean over masked voxels.
    std::vector<double> ref(T, 0.0);
    for (int t = 0; t < T; ++t) {
        const float* frame = ctp.data.data() + voxels * t;
        double sum = 0.0;
        for (std::size_t i = 0; i < voxels; ++i)
            if (mask.data[i]) sum += frame[i];
        ref[t] = sum / static_cast<double>(masked);
    }
    int ref_argmax = 0;
    for (int t = 1; t < T; ++t)
        if (ref[t] > ref[ref_argmax]) ref_argmax = t;
    const double ttp_ref = dt * ref_argmax;

    Volume4D out;
    out.width = ctp.width;
    out.height = ctp.height;
    out.depth = ctp.depth;
    out.channels = kPmChannelCount;
    out.spacing_mm = ctp.spacing_mm;
    out.frame_interval_s = 0.0;  // channels are modalities, not time
    out.id = ctp.id.empty() ? std::string{} : ctp.id + "_pms";
    out.data.assign(voxels * kPmChannelCount, 0.0f);

    std::vector<double> curve(T);
    std::vector<double> enh(T);
    for (std::size_t i = 0; i < voxels; ++i) {
        if (!mask.data[i]) continue;
        for (int t = 0; t < T; ++t) curve[t] = ctp.data[voxels * t + i];

        const double baseline = (curve[0] + curve[1]) / 2.0;
        for (int t = 0; t < T; ++t) enh[t] = curve[t] - baseline;

        double cbv = 0.0;
        double cbf = (enh[1] - enh[0]) / dt;
        double mip = curve[0];
        int argmax = 0;
        for (int t = 0; t < T; ++t) {
            if (t + 1 < T) {
                cbv += (std::max(enh[t], 0.0) + std::max(enh[t + 1], 0.0)) / 2.0 * dt;
                cbf = std::max(cbf, (enh[t + 1] - enh[t]) / dt);
            }
            if (curve[t] > mip) mip = curve[t];
            if (curve[t] > curve[argmax]) argmax = t;
        }
        const double ttp = dt * argmax;

        out.data[voxels * kPmCbv + i] = static_cast<float>(cbv);
        out.data[voxels * kPmCbf + i] = static_cast<float>(cbf);
        out.data[voxels * kPmTtp + i] = static_cast<float>(ttp);
        out.data[voxels * kPmTmax + i] = static_cast<float>(ttp - ttp_ref);
        out.data[voxels * kPmMip + i] = static_cast<float>(mip);
    }
    return out;
}

double gamma_variate(double t, double onset_s, double amplitude, double shape, double scale_s) {
    const double dt = t - onset_s;
    if (dt <= 0.0) return 0.0;
    const double peak_t = shape * scale_s;
    return amplitude * std::pow(dt / peak_t, shape) * std::exp(shape - dt / scale_s);
}

void PhantomSpec::validate() const {
    if (width < 4 || height < 4 || depth < 1)
        throw std::invalid_argument("PhantomSpec: dims too small");
    if (spacing_mm[0] <= 0 || spacing_mm[1] <= 0 || spacing_mm[2] <= 0)
        throw std::invalid_argument("PhantomSpec: spacing must be positive");
    if (frames < 4) throw std::invalid_argument("PhantomSpec: frames must be >= 4");
    if (!(frame_interval_s > 0))
        throw std::invalid_argument("PhantomSpec: frame_interval_s must be > 0");
    if (lesion_count < 0) throw std::invalid_argument("PhantomSpec: lesion_count < 0");
    if (!(lesion_radius_mm[0] > 0) || lesion_radius_mm[1] < lesion_radius_mm[0])
        throw std::invalid_argument("PhantomSpec: bad lesion radius range");
    if (!(lesion_amplitude_factor > 0 && lesion_amplitude_factor < 1))
        throw std::invalid_argument("PhantomSpec: lesion_amplitude_factor must be in (0,1)");
    if (lesion_fade_fraction < 0 || lesion_fade_fraction >= 1)
        throw std::invalid_argument("PhantomSpec: lesion_fade_fraction must be in [0,1)");
    if (noise_sigma < 0) throw std::invalid_argument("PhantomSpec: noise_sigma < 0");
}

namespace {

// Smooth random field in [-amplitude, amplitude]: uniform values on a coarse
// grid, trilinearly interpolated onto the full grid.
class SmoothField {
public:
    SmoothField(int w, int h, int z, int cells, double amplitude, Rng& rng)
        : w_(w), h_(h), z_(z), cx_(cells), cy_(cells), cz_(std::max(2, cells / 2)) {
        grid_.resize(static_cast<std::size_t>(cx_) * cy_ * cz_);
        for (double& g : grid_) g = rng.uniform(-amplitude, amplitude);
    }

    double at(int x, int y, int z) const {
        const double fx = (w_ > 1) ? static_cast<double>(x) / (w_ - 1) * (cx_ - 1) : 0.0;
        const double fy = (h_ > 1) ? static_cast<double>(y) / (h_ - 1) * (cy_ - 1) : 0.0;
        const double fz = (z_ > 1) ? static_cast<double>(z) / (z_ - 1) * (cz_ - 1) : 0.0;
        const int x0 = std::min(static_cast<int>(fx), cx_ - 2);
        const int y0 = std::min(static_cast<int>(fy), cy_ - 2);
        const int z0 = std::min(static_cast<int>(fz), cz_ - 2);
        const double tx = fx - x0, ty = fy - y0, tz = fz - z0;
        auto g = [&](int i, int j, int k) {
            return grid_[static_cast<std::size_t>(i) + cx_ * (j + static_cast<std::size_t>(cy_) * k)];
        };
        const double c00 = g(x0, y0, z0) * (1 - tx) + g(x0 + 1, y0, z0) * tx;
        const double c10 = g(x0, y0 + 1, z0) * (1 - tx) + g(x0 + 1, y0 + 1, z0) * tx;
        const double c01 = g(x0, y0, z0 + 1) * (1 - tx) + g(x0 + 1, y0, z0 + 1) * tx;
        const double c11 = g(x0, y0 + 1, z0 + 1) * (1 - tx) + g(x0 + 1, y0 + 1, z0 + 1) * tx;
        const double c0 = c00 * (1 - ty) + c10 * ty;
        const double c1 = c01 * (1 - ty) + c11 * ty;
        return c0 * (1 - tz) + c1 * tz;
    }

private:
    int w_, h_, z_;
    int cx_, cy_, cz_;
    std::vector<double> grid_;
};

// Fixed tissue-model constants; the user-facing knobs live in PhantomSpec.
// Baseline radiodensity varies across tissue on two scales (a broad drift
// plus fine texture) and sits in every time frame; bolus parameters vary
// only mildly. Parametric maps cancel the baseline (AUC of enhancement,
// argmax times), raw frames carry it everywhere.
constexpr double kBaselineHu = 40.0;
constexpr double kBolusAmplitude = 50.0;
constexpr double kBolusOnsetS = 2.0;
constexpr double kBolusShape = 2.0;
constexpr double kBolusScaleS = 1.5;
constexpr double kAmplitudeJitter = 0.15;  // relative
constexpr double kOnsetJitterS = 0.1;
constexpr double kBaselineDriftHu = 8.0;    // coarse field
constexpr double kBaselineTextureHu = 9.0;  // fine field, ~4-voxel cells
constexpr int kBaselineTextureCells = 14;
constexpr int kLesionMaxAttempts = 200;

}  // namespace

Phantom make_phantom(const PhantomSpec& spec) {
    spec.validate();
    const int W = spec.width, H = spec.height, Z = spec.depth, T = spec.frames;
    const std::size_t voxels = static_cast<std::size_t>(W) * H * Z;

    Phantom ph;
    ph.brain_mask = BinaryMask::zeros(W, H, Z);
    ph.lesion_mask = BinaryMask::zeros(W, H, Z);
    std::vector<float> lesion_effect(static_cast<std::size_t>(W) * H * Z, 0.0f);

    // Ellipsoidal brain mask filling most of the grid.
    const double cx = (W - 1) / 2.0, cy = (H - 1) / 2.0, cz = (Z - 1) / 2.0;
    const double ax = 0.44 * W * spec.spacing_mm[0];
    const double ay = 0.44 * H * spec.spacing_mm[1];
    const double az = 0.47 * Z * spec.spacing_mm[2];
    std::vector<std::size_t> masked_idx;
    for (int z = 0; z < Z; ++z)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const double dx = (x - cx) * spec.spacing_mm[0] / ax;
                const double dy = (y - cy) * spec.spacing_mm[1] / ay;
                const double dz = (z - cz) * spec.spacing_mm[2] / az;
                if (dx * dx + dy * dy + dz * dz <= 1.0) {
                    ph.brain_mask.set(x, y, z, true);
                    masked_idx.push_back(ph.brain_mask.index(x, y, z));
                }
            }
    if (masked_idx.empty()) throw std::runtime_error("make_phantom: empty brain mask");

    Rng rng(spec.seed);
    const SmoothField amp_field(W, H, Z, 4, kAmplitudeJitter, rng);
    const SmoothField onset_field(W, H, Z, 4, kOnsetJitterS, rng);
    const SmoothField base_drift(W, H, Z, 4, kBaselineDriftHu, rng);
    const SmoothField base_texture(W, H, Z, kBaselineTextureCells, kBaselineTextureHu, rng);

    // Lesions: axis-aligned ellipsoids fully inside the brain mask.
    for (int li = 0; li < spec.lesion_count; ++li) {
        bool placed = false;
        for (int attempt = 0; attempt < kLesionMaxAttempts && !placed; ++attempt) {
            const std::size_t center =
                masked_idx[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(masked_idx.size()) - 1))];
            const int lz = static_cast<int>(center / (static_cast<std::size_t>(W) * H));
            const int ly = static_cast<int>(center / W % H);
            const int lx = static_cast<int>(center % W);
            const double rx = rng.uniform(spec.lesion_radius_mm[0], spec.lesion_radius_mm[1]);
            const double ry = rng.uniform(spec.lesion_radius_mm[0], spec.lesion_radius_mm[1]);
            const double rz = rng.uniform(spec.lesion_radius_mm[0], spec.lesion_radius_mm[1]);

            const int ex = static_cast<int>(std::ceil(rx / spec.spacing_mm[0]));
            const int ey = static_cast<int>(std::ceil(ry / spec.spacing_mm[1]));
            const int ez = static_cast<int>(std::ceil(rz / spec.spacing_mm[2]));

            std::vector<std::pair<std::size_t, float>> voxelset;
            bool fits = true;
            for (int z = lz - ez; z <= lz + ez && fits; ++z)
                for (int y = ly - ey; y <= ly + ey && fits; ++y)
                    for (int x = lx - ex; x <= lx + ex && fits; ++x) {
                        const double dx = (x - lx) * spec.spacing_mm[0] / rx;
                        const double dy = (y - ly) * spec.spacing_mm[1] / ry;
                        const double dz = (z - lz) * spec.spacing_mm[2] / rz;
                        const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
                        if (r > 1.0) continue;
                        if (x < 0 || x >= W || y < 0 || y >= H || z < 0 || z >= Z ||
                            !ph.brain_mask.at(x, y, z)) {
                            fits = false;
                        } else {
                            const double eff =
                                spec.lesion_fade_fraction > 0.0
                                    ? std::min((1.0 - r) / spec.lesion_fade_fraction, 1.0)
                                    : 1.0;
                            voxelset.emplace_back(ph.brain_mask.index(x, y, z),
                                                  static_cast<float>(eff));
                        }
                    }
            if (!fits || voxelset.empty()) continue;
            for (const auto& [idx, eff] : voxelset) {
                ph.lesion_mask.data[idx] = 1;
                lesion_effect[idx] = std::max(lesion_effect[idx], eff);
            }
            placed = true;
        }
        if (!placed)
            throw std::runtime_error("make_phantom: lesion " + std::to_string(li) +
                                     " does not fit inside the brain mask after " +
                                     std::to_string(kLesionMaxAttempts) + " attempts");
    }

    ph.ctp.width = W;
    ph.ctp.height = H;
    ph.ctp.depth = Z;
    ph.ctp.channels = T;
    ph.ctp.spacing_mm = spec.spacing_mm;
    ph.ctp.frame_interval_s = spec.frame_interval_s;
    ph.ctp.data.assign(voxels * T, 0.0f);

    for (int z = 0; z < Z; ++z)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const std::size_t i = ph.brain_mask.index(x, y, z);
                if (!ph.brain_mask.data[i]) continue;
                const double eff = lesion_effect[i];
                const double base =
                    kBaselineHu + base_drift.at(x, y, z) + base_texture.at(x, y, z);
                double amp = kBolusAmplitude * (1.0 + amp_field.at(x, y, z));
                double onset = kBolusOnsetS + onset_field.at(x, y, z);
                if (eff > 0.0) {
                    amp *= 1.0 - (1.0 - spec.lesion_amplitude_factor) * eff;
                    onset += spec.lesion_delay_s * eff;
                }
                for (int t = 0; t < T; ++t) {
                    const double tt = t * spec.frame_interval_s;
                    ph.ctp.data[voxels * t + i] = static_cast<float>(
                        base + gamma_variate(tt, onset, amp, kBolusShape, kBolusScaleS));
                }
            }

    if (spec.noise_sigma > 0) {
        for (int t = 0; t < T; ++t)
            for (std::size_t i = 0; i < voxels; ++i)
                if (ph.brain_mask.data[i])
                    ph.ctp.data[voxels * t + i] +=
                        static_cast<float>(rng.normal(0.0, spec.noise_sigma));
    }
    return ph;
}

}  // namespace perfseg
