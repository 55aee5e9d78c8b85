#pragma once

#include <array>
#include <cstdint>

#include "perfseg/volume.hpp"

namespace perfseg {

/// Channel order of compute_pms output.
enum PmChannel : int { kPmCbv = 0, kPmCbf = 1, kPmTtp = 2, kPmTmax = 3, kPmMip = 4 };
inline constexpr int kPmChannelCount = 5;

/// Simplified parametric maps from a 4D time series. Per masked voxel with
/// curve c(t), baseline b = mean of the first two frames, e(t) = c(t) - b:
///   CBV  = trapezoidal AUC of max(e, 0) over time
///   CBF  = max forward difference of e per second
///   TTP  = frame_interval_s * argmax(c), first maximizer on ties
///   TMax = TTP(voxel) - TTP(mask-mean curve)
///   MIP  = max over t of c
/// Out-of-mask voxels are 0 in every channel. These are surrogate
/// definitions for phantom experiments, not clinical deconvolution maps.
Volume4D compute_pms(const Volume4D& ctp, const BinaryMask& mask);

/// Gamma-variate bolus curve, normalized so the peak value is `amplitude`
/// at t = onset_s + shape * scale_s; zero for t <= onset_s.
double gamma_variate(double t, double onset_s, double amplitude, double shape, double scale_s);

struct PhantomSpec {
    std::uint64_t seed = 0;
    int width = 64, height = 64, depth = 16;
    std::array<double, 3> spacing_mm{1.0, 1.0, 5.0};
    int frames = 16;
    double frame_interval_s = 1.0;
    int lesion_count = 1;
    std::array<double, 2> lesion_radius_mm{6.0, 12.0};
    double lesion_delay_s = 2.0;             // extra bolus delay inside the lesion
    double lesion_amplitude_factor = 0.5;    // flow reduction, in (0,1)
    // Partial-volume penumbra: the lesion effect ramps from full strength to
    // zero over this outer fraction of the ellipsoid radius. 0 = sharp edge.
    double lesion_fade_fraction = 0.0;
    double noise_sigma = 1.0;

    void validate() const;
};

struct Phantom {
    Volume4D ctp;
    BinaryMask brain_mask;
    BinaryMask lesion_mask;
};

/// Synthetic CTP study: ellipsoidal brain mask, gamma-variate tissue curves
/// with spatially smooth amplitude/onset/baseline jitter, lesion ellipsoids
/// with delayed and damped curves, additive Gaussian noise. Deterministic
/// given spec.seed.
Phantom make_phantom(const PhantomSpec& spec);

}  // namespace perfseg
