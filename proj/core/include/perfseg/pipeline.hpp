#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "perfseg/episodes.hpp"
#include "perfseg/metrics.hpp"
#include "perfseg/perfusion.hpp"
#include "perfseg/proto.hpp"
#include "perfseg/supervox.hpp"

namespace perfseg {

/// The three experimental arms. Each arm fixes which volume feeds the
/// supervoxel generator and which feeds the model:
///   proposed:     supervoxels from PMs, model input raw CTP
///   ctp-baseline: supervoxels from CTP, model input raw CTP
///   pms-baseline: supervoxels from PMs, model input PMs
enum class Arm { proposed, ctp_baseline, pms_baseline };

const char* to_string(Arm arm);
Arm arm_from_string(const std::string& s);

enum class VolumeKind { ctp, pms };
VolumeKind supervoxel_source(Arm arm);
VolumeKind model_input(Arm arm);

struct TrainingParams {
    int steps = 200;
    double step_size = 0.05;
};

struct PipelineConfig {
    Arm arm = Arm::proposed;
    std::uint64_t seed = 0;
    SupervoxelParams supervoxel;
    EpisodeParams episodes;
    int episodes_per_volume = 32;
    EncoderConfig encoder;
    ThresholdParams threshold;
    TrainingParams training;
    bool zscore_model_input = true;

    void validate() const;

    /// JSON round trip; parsing fills unspecified fields with defaults, so
    /// emit(parse(x)) is a fixed point.
    static PipelineConfig from_json_text(const std::string& text);
    static PipelineConfig from_json_file(const std::string& path);
    std::string to_json_text() const;
    void to_json_file(const std::string& path) const;
};

/// One experimental subject: raw study plus brain and lesion masks.
/// Phantoms play this role at desk scale.
Phantom load_subject_dir(const std::string& dir);
void save_subject_dir(const Phantom& subject, const std::string& dir,
                      const std::string& id = "");

/// Volume feeding the supervoxel generator for this arm (raw; channel
/// normalization happens inside felzenszwalb_4d).
Volume4D supervoxel_input_volume(const Phantom& subject, const PipelineConfig& cfg);

/// Volume feeding the encoder for this arm, z-scored within the brain mask
/// when cfg.zscore_model_input is set.
Volume4D model_input_volume(const Phantom& subject, const PipelineConfig& cfg);

LabelVolume pipeline_supervoxels(const Phantom& subject, const PipelineConfig& cfg);

/// Episodes k = 0..count-1 with seeds derive_seed(base_seed, k).
std::vector<Episode> make_episodes(const Volume4D& model_in, const LabelVolume& labels,
                                   const PipelineConfig& cfg, int count,
                                   std::uint64_t base_seed);

/// Self-supervised training on one subject: supervoxels, episodes, gradient
/// descent on the threshold (and projection when configured).
TrainResult train_on_subject(const Phantom& subject, const PipelineConfig& cfg);

/// Middle slice index, the default support slice.
int middle_slice(const Volume4D& v);

/// Segments a query subject from one labeled support slice. support_z < 0
/// selects the middle slice. The query's brain mask clips the prediction.
BinaryMask infer_subject(const Phantom& support, int support_z, const Phantom& query,
                         const PipelineConfig& cfg, const EncoderConfig& enc,
                         const ThresholdParams& tp);

struct SweepRow {
    double rho = 0.0;
    double mean_ds = 0.0, std_ds = 0.0;
    double mean_dv = 0.0, std_dv = 0.0;
    double mean_svx_count = 0.0;
};

/// Sensitivity sweep: for each rho, supervoxels are regenerated for every
/// subject, the threshold is retrained on the support subject (the first
/// whose lesion intersects its middle slice), the remaining subjects are
/// segmented, and Dice / delta-V are aggregated. Rows come back sorted by
/// rho ascending. Deterministic given cfg.seed.
std::vector<SweepRow> rho_sweep(const std::vector<Phantom>& subjects,
                                const std::vector<double>& rhos, const PipelineConfig& cfg);

/// CSV: rho,mean_ds,std_ds,mean_dv,std_dv,mean_svx_count
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);

}  // namespace perfseg
