#include "perfseg/proto.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "perfseg/io.hpp"

namespace perfseg {

namespace {

constexpr double kNormFloor = 1e-12;
constexpr double kClampEps = 1e-7;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Projection Projection::identity(int dim) {
    Projection p;
    p.out_dim = dim;
    p.in_dim = dim;
    p.weights.assign(static_cast<std::size_t>(dim) * dim, 0.0);
    for (int i = 0; i < dim; ++i) p.weights[static_cast<std::size_t>(i) * dim + i] = 1.0;
    p.bias.assign(dim, 0.0);
    return p;
}

void Projection::validate() const {
    if (out_dim < 1 || in_dim < 1)
        throw std::invalid_argument("Projection: dims must be >= 1");
    if (weights.size() != static_cast<std::size_t>(out_dim) * in_dim)
        throw std::invalid_argument("Projection: weight size mismatch");
    if (bias.size() != static_cast<std::size_t>(out_dim))
        throw std::invalid_argument("Projection: bias size mismatch");
}

int EncoderConfig::recipe_dim(int channels) const {
    int blocks = use_raw ? 1 : 0;
    blocks += static_cast<int>(mean_windows.size());
    blocks += static_cast<int>(std_windows.size());
    return blocks * channels;
}

int EncoderConfig::output_dim(int channels) const {
    return projection ? projection->out_dim : recipe_dim(channels);
}

void EncoderConfig::validate(int channels) const {
    if (recipe_dim(channels) < 1)
        throw std::invalid_argument("EncoderConfig: empty feature recipe");
    for (int w : mean_windows)
        if (w < 1 || w % 2 == 0)
            throw std::invalid_argument("EncoderConfig: window sizes must be odd and >= 1");
    for (int w : std_windows)
        if (w < 1 || w % 2 == 0)
            throw std::invalid_argument("EncoderConfig: window sizes must be odd and >= 1");
    if (projection) {
        projection->validate();
        if (projection->in_dim != recipe_dim(channels))
            throw std::invalid_argument("EncoderConfig: projection in_dim != recipe dim");
    }
}

void ThresholdParams::validate() const {
    if (!(kappa > 0)) throw std::invalid_argument("ThresholdParams: kappa must be > 0");
}

namespace {

// Summed-area tables over one channel; windows are clipped at the borders
// and divided by the actual pixel count.
class WindowSums {
public:
    WindowSums(const float* ch, int w, int h) : w_(w), h_(h) {
        sum_.assign(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
        sq_.assign(sum_.size(), 0.0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double v = ch[static_cast<std::size_t>(y) * w + x];
                const std::size_t i = idx(x + 1, y + 1);
                sum_[i] = v + sum_[idx(x, y + 1)] + sum_[idx(x + 1, y)] - sum_[idx(x, y)];
                sq_[i] = v * v + sq_[idx(x, y + 1)] + sq_[idx(x + 1, y)] - sq_[idx(x, y)];
            }
    }

    void window(int x, int y, int half, double& mean, double& var) const {
        const int x0 = std::max(0, x - half), x1 = std::min(w_ - 1, x + half);
        const int y0 = std::max(0, y - half), y1 = std::min(h_ - 1, y + half);
        const double n = static_cast<double>(x1 - x0 + 1) * (y1 - y0 + 1);
        const double s = rect(sum_, x0, y0, x1, y1);
        const double q = rect(sq_, x0, y0, x1, y1);
        mean = s / n;
        var = std::max(q / n - mean * mean, 0.0);
    }

private:
    std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * (w_ + 1) + x; }
    double rect(const std::vector<double>& t, int x0, int y0, int x1, int y1) const {
        return t[idx(x1 + 1, y1 + 1)] - t[idx(x0, y1 + 1)] - t[idx(x1 + 1, y0)] + t[idx(x0, y0)];
    }
    int w_, h_;
    std::vector<double> sum_, sq_;
};

FeatureMap compute_recipe(const SliceTW& x, const EncoderConfig& cfg) {
    const int W = x.width, H = x.height, M = x.channels;
    const int f = cfg.recipe_dim(M);
    FeatureMap fm;
    fm.width = W;
    fm.height = H;
    fm.dim = f;
    fm.data.assign(static_cast<std::size_t>(W) * H * f, 0.0);

    const std::size_t plane = static_cast<std::size_t>(W) * H;
    std::vector<WindowSums> sums;
    if (!cfg.mean_windows.empty() || !cfg.std_windows.empty()) {
        sums.reserve(M);
        for (int m = 0; m < M; ++m) sums.emplace_back(x.data.data() + plane * m, W, H);
    }

    for (int yy = 0; yy < H; ++yy)
        for (int xx = 0; xx < W; ++xx) {
            double* out = fm.px(xx, yy);
            int k = 0;
            if (cfg.use_raw)
                for (int m = 0; m < M; ++m) out[k++] = x.data[plane * m + static_cast<std::size_t>(yy) * W + xx];
            for (int wsz : cfg.mean_windows)
                for (int m = 0; m < M; ++m) {
                    double mean, var;
                    sums[m].window(xx, yy, wsz / 2, mean, var);
                    out[k++] = mean;
                }
            for (int wsz : cfg.std_windows)
                for (int m = 0; m < M; ++m) {
                    double mean, var;
                    sums[m].window(xx, yy, wsz / 2, mean, var);
                    out[k++] = std::sqrt(var);
                }
        }
    return fm;
}

FeatureMap apply_projection(const FeatureMap& phi, const Projection& proj) {
    FeatureMap out;
    out.width = phi.width;
    out.height = phi.height;
    out.dim = proj.out_dim;
    out.data.assign(static_cast<std::size_t>(phi.width) * phi.height * proj.out_dim, 0.0);
    const std::size_t n = static_cast<std::size_t>(phi.width) * phi.height;
    for (std::size_t i = 0; i < n; ++i) {
        const double* in = phi.data.data() + i * phi.dim;
        double* o = out.data.data() + i * proj.out_dim;
        for (int r = 0; r < proj.out_dim; ++r) {
            const double* wrow = proj.weights.data() + static_cast<std::size_t>(r) * proj.in_dim;
            double acc = proj.bias[r];
            for (int c = 0; c < proj.in_dim; ++c) acc += wrow[c] * in[c];
            o[r] = acc;
        }
    }
    return out;
}

}  // namespace

FeatureMap encode(const SliceTW& x, const EncoderConfig& cfg) {
    cfg.validate(x.channels);
    FeatureMap phi = compute_recipe(x, cfg);
    if (cfg.projection) return apply_projection(phi, *cfg.projection);
    return phi;
}

Prototype map_prototype(const FeatureMap& features, const BinaryMask& fg) {
    if (fg.width != features.width || fg.height != features.height || fg.depth != 1)
        throw std::invalid_argument("map_prototype: mask dims do not match features");
    Prototype p;
    p.values.assign(features.dim, 0.0);
    std::size_t n = 0;
    for (int y = 0; y < features.height; ++y)
        for (int x = 0; x < features.width; ++x) {
            if (!fg.at(x, y)) continue;
            const double* v = features.px(x, y);
            for (int k = 0; k < features.dim; ++k) p.values[k] += v[k];
            ++n;
        }
    if (n == 0) throw std::invalid_argument("map_prototype: empty support mask");
    for (double& v : p.values) v /= static_cast<double>(n);
    return p;
}

ScoreMap anomaly_scores(const FeatureMap& features, const Prototype& p) {
    if (static_cast<int>(p.values.size()) != features.dim)
        throw std::invalid_argument("anomaly_scores: prototype dim mismatch");
    double pn = 0.0;
    for (double v : p.values) pn += v * v;
    pn = std::sqrt(pn);

    ScoreMap s;
    s.width = features.width;
    s.height = features.height;
    s.values.assign(static_cast<std::size_t>(s.width) * s.height, 0.0);
    if (pn < kNormFloor) return s;

    for (int y = 0; y < features.height; ++y)
        for (int x = 0; x < features.width; ++x) {
            const double* u = features.px(x, y);
            double un = 0.0, dot = 0.0;
            for (int k = 0; k < features.dim; ++k) {
                un += u[k] * u[k];
                dot += u[k] * p.values[k];
            }
            un = std::sqrt(un);
            if (un < kNormFloor) continue;
            s.values[static_cast<std::size_t>(y) * s.width + x] = -dot / (un * pn);
        }
    return s;
}

SoftMask soft_mask(const ScoreMap& scores, const ThresholdParams& tp) {
    tp.validate();
    SoftMask m;
    m.width = scores.width;
    m.height = scores.height;
    m.values.resize(scores.values.size());
    for (std::size_t i = 0; i < scores.values.size(); ++i)
        m.values[i] = sigmoid(-tp.kappa * (scores.values[i] - tp.threshold));
    return m;
}

BinaryMask hard_mask(const SoftMask& soft) {
    BinaryMask m = BinaryMask::zeros(soft.width, soft.height);
    for (std::size_t i = 0; i < soft.values.size(); ++i)
        m.data[i] = soft.values[i] > 0.5 ? 1 : 0;
    return m;
}

namespace {

struct LossWeights {
    double w_fg, w_bg;
};

LossWeights balance_weights(const BinaryMask& label) {
    const double n = static_cast<double>(label.voxel_count());
    const double n_fg = static_cast<double>(label.count());
    const double n_bg = n - n_fg;
    if (n_fg == 0.0 || n_bg == 0.0) return {1.0, 1.0};  // single-class fallback
    return {n / (2.0 * n_fg), n / (2.0 * n_bg)};
}

}  // namespace

double episode_loss(const SoftMask& pred, const BinaryMask& label) {
    if (label.width != pred.width || label.height != pred.height || label.depth != 1)
        throw std::invalid_argument("episode_loss: dims mismatch");
    const auto [w_fg, w_bg] = balance_weights(label);
    const double n = static_cast<double>(label.voxel_count());
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const double y = std::clamp(pred.values[i], kClampEps, 1.0 - kClampEps);
        if (label.data[i])
            acc += w_fg * std::log(y);
        else
            acc += w_bg * std::log(1.0 - y);
    }
    return -acc / n;
}

double episode_forward(const Episode& ep, const EncoderConfig& cfg, const ThresholdParams& tp) {
    const FeatureMap fs = encode(ep.support_image, cfg);
    const FeatureMap fq = encode(ep.query_image, cfg);
    const Prototype p = map_prototype(fs, ep.support_label);
    const ScoreMap s = anomaly_scores(fq, p);
    return episode_loss(soft_mask(s, tp), ep.query_label);
}

LossGradients loss_gradients(const Episode& ep, const EncoderConfig& cfg,
                             const ThresholdParams& tp) {
    tp.validate();
    const bool trainable = cfg.projection.has_value();

    // Pre-projection recipe features are the fixed inputs of the linear head.
    EncoderConfig recipe_only = cfg;
    recipe_only.projection.reset();
    const FeatureMap phi_s = compute_recipe(ep.support_image, recipe_only);
    const FeatureMap phi_q = compute_recipe(ep.query_image, recipe_only);

    const FeatureMap fs = cfg.projection ? apply_projection(phi_s, *cfg.projection) : phi_s;
    const FeatureMap fq = cfg.projection ? apply_projection(phi_q, *cfg.projection) : phi_q;

    const Prototype proto = map_prototype(fs, ep.support_label);
    const int d = fs.dim;
    const int f = phi_s.dim;

    // phi_bar: masked mean of recipe features over the support foreground.
    std::vector<double> phi_bar(f, 0.0);
    std::size_t n_fg = 0;
    for (int y = 0; y < phi_s.height; ++y)
        for (int x = 0; x < phi_s.width; ++x) {
            if (!ep.support_label.at(x, y)) continue;
            const double* v = phi_s.px(x, y);
            for (int k = 0; k < f; ++k) phi_bar[k] += v[k];
            ++n_fg;
        }
    for (double& v : phi_bar) v /= static_cast<double>(n_fg);

    double pn = 0.0;
    for (double v : proto.values) pn += v * v;
    pn = std::sqrt(pn);
    const bool proto_degenerate = pn < kNormFloor;

    const auto [w_fg, w_bg] = balance_weights(ep.query_label);
    const double n = static_cast<double>(ep.query_label.voxel_count());

    LossGradients g;
    if (trainable) {
        g.d_weights.assign(static_cast<std::size_t>(d) * f, 0.0);
        g.d_bias.assign(d, 0.0);
    }
    std::vector<double> d_proto(d, 0.0);
    std::vector<double> ds_du(d, 0.0);

    for (int y = 0; y < fq.height; ++y)
        for (int x = 0; x < fq.width; ++x) {
            const double* u = fq.px(x, y);
            double un = 0.0, dot = 0.0;
            for (int k = 0; k < d; ++k) {
                un += u[k] * u[k];
                dot += u[k] * proto.values[k];
            }
            un = std::sqrt(un);
            const bool degenerate = proto_degenerate || un < kNormFloor;
            const double cosv = degenerate ? 0.0 : dot / (un * pn);
            const double score = -cosv;

            const double yhat = sigmoid(-tp.kappa * (score - tp.threshold));
            if (yhat <= kClampEps || yhat >= 1.0 - kClampEps) continue;  // clamp is flat

            const bool fg = ep.query_label.at(x, y);
            const double dl_dy = -(fg ? w_fg / yhat : -w_bg / (1.0 - yhat)) / n;
            const double sig_slope = yhat * (1.0 - yhat);
            g.d_threshold += dl_dy * tp.kappa * sig_slope;
            if (!trainable || degenerate) continue;

            const double dl_ds = dl_dy * (-tp.kappa * sig_slope);
            for (int k = 0; k < d; ++k) {
                ds_du[k] = cosv * u[k] / (un * un) - proto.values[k] / (un * pn);
                d_proto[k] += dl_ds * (cosv * proto.values[k] / (pn * pn) - u[k] / (un * pn));
            }
            const double* phi = phi_q.px(x, y);
            for (int r = 0; r < d; ++r) {
                const double gr = dl_ds * ds_du[r];
                g.d_bias[r] += gr;
                double* wrow = g.d_weights.data() + static_cast<std::size_t>(r) * f;
                for (int c = 0; c < f; ++c) wrow[c] += gr * phi[c];
            }
        }

    if (trainable && !proto_degenerate) {
        for (int r = 0; r < d; ++r) {
            g.d_bias[r] += d_proto[r];
            double* wrow = g.d_weights.data() + static_cast<std::size_t>(r) * f;
            for (int c = 0; c < f; ++c) wrow[c] += d_proto[r] * phi_bar[c];
        }
    }
    g.loss = episode_loss(soft_mask(anomaly_scores(fq, proto), tp), ep.query_label);
    return g;
}

TrainResult train(const std::vector<Episode>& episodes, EncoderConfig cfg, ThresholdParams tp,
                  int steps, double step_size) {
    if (episodes.empty()) throw std::invalid_argument("train: no episodes");
    if (steps < 1) throw std::invalid_argument("train: steps must be >= 1");
    if (step_size < 0) throw std::invalid_argument("train: step_size must be >= 0");
    tp.validate();

    TrainResult result;
    result.loss_trace.reserve(static_cast<std::size_t>(steps));
    for (int step = 0; step < steps; ++step) {
        const Episode& ep = episodes[static_cast<std::size_t>(step) % episodes.size()];
        LossGradients g = loss_gradients(ep, cfg, tp);
        if (!std::isfinite(g.loss))
            throw std::runtime_error("train: loss diverged (non-finite) at step " +
                                     std::to_string(step));
        result.loss_trace.push_back(g.loss);
        tp.threshold -= step_size * g.d_threshold;
        if (cfg.projection) {
            auto& proj = *cfg.projection;
            for (std::size_t i = 0; i < proj.weights.size(); ++i)
                proj.weights[i] -= step_size * g.d_weights[i];
            for (std::size_t i = 0; i < proj.bias.size(); ++i)
                proj.bias[i] -= step_size * g.d_bias[i];
        }
    }
    result.config = std::move(cfg);
    result.threshold = tp;
    return result;
}

BinaryMask infer_volume(const SliceTW& support_image, const BinaryMask& support_label,
                        const Volume4D& query, const EncoderConfig& cfg,
                        const ThresholdParams& tp, const BinaryMask* brain_mask) {
    if (support_label.count() == 0)
        throw std::invalid_argument("infer_volume: empty support mask");
    if (query.channels != support_image.channels)
        throw std::invalid_argument("infer_volume: query channel count differs from support");
    if (brain_mask && (brain_mask->width != query.width || brain_mask->height != query.height ||
                       brain_mask->depth != query.depth))
        throw std::invalid_argument("infer_volume: brain mask dims mismatch");

    const Prototype p = map_prototype(encode(support_image, cfg), support_label);

    BinaryMask out = BinaryMask::zeros(query.width, query.height, query.depth);
    for (int z = 0; z < query.depth; ++z) {
        const SliceTW slice = extract_slice(query, z);
        const BinaryMask pred = hard_mask(soft_mask(anomaly_scores(encode(slice, cfg), p), tp));
        for (int y = 0; y < query.height; ++y)
            for (int x = 0; x < query.width; ++x) {
                bool v = pred.at(x, y);
                if (v && brain_mask && !brain_mask->at(x, y, z)) v = false;
                out.set(x, y, z, v);
            }
    }
    return out;
}

void save_model(const EncoderConfig& cfg, const ThresholdParams& tp, const std::string& path) {
    ensure_parent_dir(path);
    nlohmann::json j;
    j["recipe"] = {{"use_raw", cfg.use_raw},
                   {"mean_windows", cfg.mean_windows},
                   {"std_windows", cfg.std_windows}};
    if (cfg.projection) {
        j["projection"] = {{"out_dim", cfg.projection->out_dim},
                           {"in_dim", cfg.projection->in_dim},
                           {"weights", cfg.projection->weights},
                           {"bias", cfg.projection->bias}};
    } else {
        j["projection"] = nullptr;
    }
    j["threshold"] = tp.threshold;
    j["kappa"] = tp.kappa;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open model file for writing: " + path);
    out << j.dump(2) << "\n";
}

void load_model(const std::string& path, EncoderConfig& cfg, ThresholdParams& tp) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    nlohmann::json j;
    in >> j;
    cfg = EncoderConfig{};
    const auto& recipe = j.at("recipe");
    cfg.use_raw = recipe.at("use_raw").get<bool>();
    cfg.mean_windows = recipe.at("mean_windows").get<std::vector<int>>();
    cfg.std_windows = recipe.at("std_windows").get<std::vector<int>>();
    if (!j.at("projection").is_null()) {
        Projection p;
        p.out_dim = j["projection"].at("out_dim").get<int>();
        p.in_dim = j["projection"].at("in_dim").get<int>();
        p.weights = j["projection"].at("weights").get<std::vector<double>>();
        p.bias = j["projection"].at("bias").get<std::vector<double>>();
        p.validate();
        cfg.projection = std::move(p);
    }
    tp.threshold = j.at("threshold").get<double>();
    tp.kappa = j.at("kappa").get<double>();
    tp.validate();
}

}  // namespace perfseg
