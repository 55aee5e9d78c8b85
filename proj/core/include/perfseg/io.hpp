#pragma once

#include <stdexcept>
#include <string>

#include "perfseg/volume.hpp"

namespace perfseg {

/// Filesystem-level failure (missing file, size mismatch, unwritable path).
/// Malformed content raises std::invalid_argument / std::runtime_error instead.
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Volumes are stored as a `<base>.vh.json` sidecar header plus a flat
/// `<base>.raw` binary. Header keys: dims (4 ints), spacing_mm (3 floats),
/// frame_interval_s (float), dtype ("f32le" | "u32le"), order ("x-fastest").
/// All functions accept the base path with or without the .vh.json / .raw
/// suffix. Round trips are byte-exact.

void save_volume(const Volume4D& v, const std::string& base_path);
Volume4D load_volume(const std::string& base_path);

void save_labels(const LabelVolume& lv, const std::string& base_path);
LabelVolume load_labels(const std::string& base_path);

/// Masks are stored as u32le volumes of 0/1 with dims [W,H,Z,1].
void save_mask(const BinaryMask& m, const std::array<double, 3>& spacing_mm,
               const std::string& base_path);
struct MaskFile {
    BinaryMask mask;
    std::array<double, 3> spacing_mm;
};
MaskFile load_mask(const std::string& base_path);

/// Slices round-trip through single-depth volumes (dims [W,H,1,M]).
void save_slice(const SliceTW& s, const std::array<double, 3>& spacing_mm,
                double frame_interval_s, const std::string& base_path);
SliceTW load_slice(const std::string& base_path);

/// Strips a trailing ".vh.json" or ".raw" if present.
std::string strip_volume_suffix(const std::string& path);

/// Creates the parent directory of path if it does not exist yet.
void ensure_parent_dir(const std::string& path);

}  // namespace perfseg
