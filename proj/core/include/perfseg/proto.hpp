#pragma once

#include <optional>
#include <string>
#include <vector>

#include "perfseg/episodes.hpp"
#include "perfseg/volume.hpp"

namespace perfseg {

/// Per-pixel feature map, interleaved: data[(y*W + x)*dim + k].
struct FeatureMap {
    int width = 0;
    int height = 0;
    int dim = 0;
    std::vector<double> data;

    const double* px(int x, int y) const {
        return data.data() + (static_cast<std::size_t>(y) * width + x) * dim;
    }
    double* px(int x, int y) {
        return data.data() + (static_cast<std::size_t>(y) * width + x) * dim;
    }
};

/// Trainable linear map applied to the recipe features: out = W * phi + b.
struct Projection {
    int out_dim = 0;
    int in_dim = 0;
    std::vector<double> weights;  // row-major out_dim x in_dim
    std::vector<double> bias;     // out_dim

    static Projection identity(int dim);
    void validate() const;
};

/// Handcrafted per-pixel feature recipe: raw channels, per-channel local
/// means (clipped windows), per-channel local std, optionally followed by a
/// trainable linear projection.
struct EncoderConfig {
    bool use_raw = true;
    std::vector<int> mean_windows{3, 7};
    std::vector<int> std_windows{3};
    std::optional<Projection> projection;

    int recipe_dim(int channels) const;
    int output_dim(int channels) const;
    void validate(int channels) const;
};

struct Prototype {
    std::vector<double> values;
};

struct ThresholdParams {
    double threshold = -0.4;  // learned decision boundary in score space
    double kappa = 0.5;       // sigmoid steepness

    void validate() const;
};

struct ScoreMap {
    int width = 0;
    int height = 0;
    std::vector<double> values;  // row-major, y*W + x
};

struct SoftMask {
    int width = 0;
    int height = 0;
    std::vector<double> values;  // in (0,1)
};

FeatureMap encode(const SliceTW& x, const EncoderConfig& cfg);

/// Masked average pooling: mean feature vector over foreground pixels.
Prototype map_prototype(const FeatureMap& features, const BinaryMask& fg);

/// S(x) = -cos(F(x), p); pixels where either norm is < 1e-12 score 0.
ScoreMap anomaly_scores(const FeatureMap& features, const Prototype& p);

/// y(x) = sigmoid(-kappa * (S(x) - T)). The hard mask (> 0.5) equals S < T.
SoftMask soft_mask(const ScoreMap& scores, const ThresholdParams& tp);
BinaryMask hard_mask(const SoftMask& soft);

/// Class-balanced binary cross-entropy with predictions clamped to
/// [1e-7, 1 - 1e-7]; falls back to unweighted CE when the label is
/// single-class.
double episode_loss(const SoftMask& pred, const BinaryMask& label);

/// Full differentiable path support -> prototype -> scores -> soft mask ->
/// loss, as one value. This is what the finite-difference checks probe.
double episode_forward(const Episode& ep, const EncoderConfig& cfg, const ThresholdParams& tp);

struct LossGradients {
    double loss = 0.0;  // forward value at the evaluation point
    double d_threshold = 0.0;
    std::vector<double> d_weights;  // empty when cfg has no projection
    std::vector<double> d_bias;
};

/// Analytic gradients of episode_forward wrt T and, when a projection is
/// present, wrt its weights and bias.
LossGradients loss_gradients(const Episode& ep, const EncoderConfig& cfg,
                             const ThresholdParams& tp);

struct TrainResult {
    EncoderConfig config;
    ThresholdParams threshold;
    std::vector<double> loss_trace;  // one entry per step, loss before the update
};

/// Plain gradient descent over the episode list (cycled in order).
/// Deterministic; throws on NaN loss with the failing step index.
TrainResult train(const std::vector<Episode>& episodes, EncoderConfig cfg,
                  ThresholdParams tp, int steps, double step_size);

/// Segments every slice of the query volume against one support slice/mask
/// pair. When brain_mask is given, predictions outside it are cleared.
BinaryMask infer_volume(const SliceTW& support_image, const BinaryMask& support_label,
                        const Volume4D& query, const EncoderConfig& cfg,
                        const ThresholdParams& tp, const BinaryMask* brain_mask = nullptr);

/// Learned-parameter document: recipe descriptor, projection, T, kappa.
void save_model(const EncoderConfig& cfg, const ThresholdParams& tp, const std::string& path);
void load_model(const std::string& path, EncoderConfig& cfg, ThresholdParams& tp);

}  // namespace perfseg
