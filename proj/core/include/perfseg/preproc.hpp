#pragma once

#include "perfseg/volume.hpp"

namespace perfseg {

/// out = v * slope + intercept, elementwise.
Volume4D hu_rescale(const Volume4D& v, double slope, double intercept);

/// Values are clamped to [lo, hi], normalized, raised to gamma, and
/// mapped back: out = lo + (hi - lo) * clamp((x - lo) / (hi - lo), 0, 1)^gamma.
Volume4D gamma_correct(const Volume4D& v, double gamma, double lo, double hi);

/// Per-channel histogram equalization restricted to the mask. Masked values
/// are remapped by the normalized CDF, (cdf(x) - cdf_min) / (1 - cdf_min),
/// into [0, 1]; voxels outside the mask are left unchanged. Constant
/// channels pass through untouched.
Volume4D hist_equalize(const Volume4D& v, const BinaryMask& mask, int bins = 256);

/// Standardizes each channel to mean 0 / std 1 over the masked voxels
/// (population std). Constant channels map to 0 within the mask; voxels
/// outside the mask are set to 0.
Volume4D zscore_channels(const Volume4D& v, const BinaryMask& mask);

}  // namespace perfseg
