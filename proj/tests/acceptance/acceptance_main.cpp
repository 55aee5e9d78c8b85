// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Every tolerance is pinned in code; all runs are seeded and
// deterministic.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "perfseg/episodes.hpp"
#include "perfseg/metrics.hpp"
#include "perfseg/perfusion.hpp"
#include "perfseg/pipeline.hpp"
#include "perfseg/proto.hpp"
#include "perfseg/rng.hpp"
#include "perfseg/supervox.hpp"
#include "references.hpp"
#include "test_helpers.hpp"

using namespace perfseg;

namespace {

int g_failures = 0;

class Criterion {
public:
    Criterion(int number, std::string title)
        : number_(number), title_(std::move(title)),
          start_(std::chrono::steady_clock::now()) {}

    void require(bool ok, const std::string& detail) {
        if (!ok) {
            failed_ = true;
            details_ += (details_.empty() ? "" : "; ") + detail;
        }
    }
    void note(const std::string& text) { notes_ += (notes_.empty() ? "" : ", ") + text; }

    ~Criterion() {
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        if (failed_) {
            ++g_failures;
            std::printf("[FAIL] criterion %d: %s (%s) [%.1fs]\n", number_, title_.c_str(),
                        details_.c_str(), secs);
        } else {
            std::printf("[PASS] criterion %d: %s%s%s [%.1fs]\n", number_, title_.c_str(),
                        notes_.empty() ? "" : " — ", notes_.c_str(), secs);
        }
        std::fflush(stdout);
    }

private:
    int number_;
    std::string title_;
    std::string details_;
    std::string notes_;
    bool failed_ = false;
    std::chrono::steady_clock::time_point start_;
};

// Phantom family used by criteria 2, 4, 6, 8 and 9.
PhantomSpec acceptance_spec(std::uint64_t seed) {
    PhantomSpec s;
    s.seed = seed;
    s.width = 64;
    s.height = 64;
    s.depth = 16;
    s.spacing_mm = {1.0, 1.0, 5.0};
    s.frames = 16;
    s.frame_interval_s = 1.0;
    s.lesion_count = 1;
    s.lesion_radius_mm = {6.0, 12.0};
    s.lesion_delay_s = 2.0;
    s.lesion_amplitude_factor = 0.75;
    s.lesion_fade_fraction = 0.45;
    s.noise_sigma = 2.0;
    return s;
}

std::vector<Phantom> tuning_phantoms() {
    std::vector<Phantom> out;
    for (int i = 0; i < 5; ++i) out.push_back(make_phantom(acceptance_spec(derive_seed(777, i))));
    return out;
}

std::vector<Phantom> eval_phantoms() {
    std::vector<Phantom> out;
    for (int i = 0; i < 20; ++i) {
        out.push_back(make_phantom(acceptance_spec(derive_seed(888, i))));
        out.back().ctp.id = "phantom_" + std::to_string(i);
    }
    return out;
}

Volume4D arm_source(const Phantom& p, bool pms) {
    return pms ? compute_pms(p.ctp, p.brain_mask) : p.ctp;
}

// rho tuned per arm so the held-out mean supervoxel count approaches the
// shared target: coarse geometric grid, then bisection in log-rho.
double tune_rho(const std::vector<Phantom>& tune, bool pms, double target) {
    auto mean_count = [&](double rho) {
        SupervoxelParams sp;
        sp.rho = rho;
        sp.min_size = 100;
        double mean = 0;
        for (const Phantom& p : tune)
            mean += felzenszwalb_4d(arm_source(p, pms), sp, p.brain_mask).max_label();
        return mean / static_cast<double>(tune.size());
    };
    double best = 0.5, best_err = 1e18;
    std::vector<double> grid;
    for (int k = 0; k <= 22; ++k) grid.push_back(0.1 * std::pow(2.0, k * 0.5));
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double err = std::abs(std::log(mean_count(grid[i]) / target));
        if (err < best_err) {
            best_err = err;
            best = grid[i];
            best_i = i;
        }
    }
    double lo = grid[best_i > 0 ? best_i - 1 : best_i];
    double hi = grid[best_i + 1 < grid.size() ? best_i + 1 : best_i];
    for (int it = 0; it < 8; ++it) {
        const double mid = std::sqrt(lo * hi);
        const double c = mean_count(mid);
        const double err = std::abs(std::log(c / target));
        if (err < best_err) {
            best_err = err;
            best = mid;
        }
        (c > target ? lo : hi) = mid;
    }
    return best;
}

PipelineConfig fewshot_config(double rho) {
    PipelineConfig cfg;
    cfg.arm = Arm::proposed;
    cfg.seed = 4242;
    cfg.supervoxel.rho = rho;
    cfg.supervoxel.min_size = 100;
    cfg.episodes_per_volume = 24;
    cfg.training.steps = 150;
    cfg.training.step_size = 0.2;
    return cfg;
}

std::size_t support_with_middle_lesion(const std::vector<Phantom>& subjects) {
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        const auto& lm = subjects[i].lesion_mask;
        const int mz = subjects[i].ctp.depth / 2;
        for (int y = 0; y < lm.height; ++y)
            for (int x = 0; x < lm.width; ++x)
                if (lm.at(x, y, mz)) return i;
    }
    return subjects.size();
}

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void criterion_1_supervoxel_oracle() {
    Criterion c(1, "felzenszwalb_4d equals the independent naive reference on 100 random volumes");
    int checked = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const Volume4D v = testhelp::random_volume(seed, 6, 6, 6, 3, -4.0, 4.0);
        BinaryMask mask = testhelp::random_mask(seed + 2000, 6, 6, 6, 0.85);
        if (mask.empty()) mask.set(0, 0, 0, true);
        Rng knobs(seed + 4000);
        SupervoxelParams p;
        p.rho = knobs.uniform(0.5, 50.0);
        p.min_size = static_cast<int>(knobs.uniform_int(1, 12));
        p.connectivity = knobs.bernoulli(0.5) ? 6 : 26;
        p.normalize_channels = knobs.bernoulli(0.5);
        p.spacing_weighted = knobs.bernoulli(0.5);
        const LabelVolume got = felzenszwalb_4d(v, p, mask);
        const LabelVolume want = testref::reference_felzenszwalb(v, p, mask);
        if (got.labels != want.labels) {
            c.require(false, "labeling mismatch at seed " + std::to_string(seed));
            return;
        }
        ++checked;
    }
    c.note(std::to_string(checked) + "/100 label-exact");
}

void criterion_2_partition_suite(const std::vector<Phantom>& eval_set) {
    Criterion c(2, "partition, connectivity and min-size on 20 phantoms at rho in {250, 1000}");
    SupervoxelParams sp;
    sp.min_size = 100;
    int labels_checked = 0;
    for (double rho : {250.0, 1000.0, 2.0}) {  // the working scale 2.0 adds coverage
        sp.rho = rho;
        for (const Phantom& p : eval_set) {
            const Volume4D src = arm_source(p, true);
            const LabelVolume labels = felzenszwalb_4d(src, sp, p.brain_mask);
            for (std::size_t i = 0; i < labels.labels.size(); ++i) {
                if ((labels.labels[i] != 0) != (p.brain_mask.data[i] != 0)) {
                    c.require(false, "labeling does not cover exactly the mask");
                    return;
                }
            }
            const SegmentStats stats = segment_stats(labels);
            for (const SegmentInfo& s : stats.segments) {
                if (!testref::label_connected(labels, s.label, sp.connectivity)) {
                    c.require(false, "label " + std::to_string(s.label) + " disconnected");
                    return;
                }
                // the ellipsoid mask is one 6-connected component well above
                // min_size, so no exception applies
                if (s.voxel_count < sp.min_size) {
                    c.require(false, "label below min_size at rho " + std::to_string(rho));
                    return;
                }
                ++labels_checked;
            }
        }
    }
    c.note(std::to_string(labels_checked) + " labels flood-fill checked");
}

void criterion_3_achievable_dice_oracle() {
    Criterion c(3, "achievable_dice prefix scan equals exhaustive 2^K search on 200 instances");
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng rng(seed + 9000);
        LabelVolume lv;
        lv.width = 5;
        lv.height = 5;
        lv.depth = 1;
        const int k = static_cast<int>(rng.uniform_int(1, 12));
        lv.labels.resize(25);
        for (auto& l : lv.labels) l = static_cast<std::uint32_t>(rng.uniform_int(1, k));
        std::vector<std::uint32_t> remap(static_cast<std::size_t>(k) + 1, 0);
        std::uint32_t next = 0;
        for (std::uint32_t l : lv.labels)
            if (remap[l] == 0) remap[l] = ++next;
        for (auto& l : lv.labels) l = remap[l];

        const BinaryMask gt = testhelp::random_mask(seed + 40, 5, 5, 1, 0.4);
        const double greedy = achievable_dice(lv, gt).dice;
        const double brute = testref::exhaustive_achievable_dice(lv, gt);
        if (std::abs(greedy - brute) > 1e-12) {
            c.require(false, "seed " + std::to_string(seed) + ": greedy " +
                                 std::to_string(greedy) + " vs exhaustive " +
                                 std::to_string(brute));
            return;
        }
    }
    c.note("200/200 exact");
}

void criterion_4_directional_claim(const std::vector<Phantom>& tune,
                                   const std::vector<Phantom>& eval_set, double& rho_pms_out) {
    Criterion c(4, "PM supervoxels beat raw-CTP supervoxels in achievable Dice "
                   "(>= 80% of 20 phantoms, mean margin >= 0.05, matched counts)");
    const double target = 60.0;
    const double rho_pms = tune_rho(tune, true, target);
    const double rho_ctp = tune_rho(tune, false, target);
    rho_pms_out = rho_pms;

    int wins = 0;
    double margin_sum = 0, count_pms = 0, count_ctp = 0;
    for (const Phantom& p : eval_set) {
        SupervoxelParams sp;
        sp.min_size = 100;
        sp.rho = rho_pms;
        const LabelVolume lp = felzenszwalb_4d(arm_source(p, true), sp, p.brain_mask);
        sp.rho = rho_ctp;
        const LabelVolume lc = felzenszwalb_4d(arm_source(p, false), sp, p.brain_mask);
        const double dp = achievable_dice(lp, p.lesion_mask).dice;
        const double dc = achievable_dice(lc, p.lesion_mask).dice;
        wins += dp > dc;
        margin_sum += dp - dc;
        count_pms += lp.max_label();
        count_ctp += lc.max_label();
    }
    const double margin = margin_sum / static_cast<double>(eval_set.size());
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "wins %d/20, mean margin %.3f, rho %.2f/%.2f, mean counts %.1f/%.1f", wins,
                  margin, rho_pms, rho_ctp, count_pms / 20.0, count_ctp / 20.0);
    c.note(buf);
    c.require(wins >= 16, "wins " + std::to_string(wins) + "/20 below 80%");
    c.require(margin >= 0.05, "mean margin " + std::to_string(margin) + " below 0.05");
}

void criterion_5_gradient_checks() {
    Criterion c(5, "analytic gradients match central finite differences on 50 random episodes");
    const double step = 1e-4;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(derive_seed(5150, seed));
        const int w = 5 + static_cast<int>(rng.uniform_int(0, 2));
        const int h = 4 + static_cast<int>(rng.uniform_int(0, 2));
        const int m = 2;

        auto random_slice = [&](std::uint64_t s) {
            Rng r(s);
            SliceTW sl;
            sl.width = w;
            sl.height = h;
            sl.channels = m;
            sl.data.resize(static_cast<std::size_t>(w) * h * m);
            for (float& x : sl.data) x = static_cast<float>(r.uniform(0.5, 2.0));
            return sl;
        };
        auto nonempty = [&](std::uint64_t s) {
            BinaryMask mk = testhelp::random_mask(s, w, h, 1, 0.4);
            if (mk.count() == 0) mk.set(w / 2, h / 2, true);
            return mk;
        };
        Episode ep;
        ep.support_image = random_slice(derive_seed(seed, 1));
        ep.query_image = random_slice(derive_seed(seed, 2));
        ep.support_label = nonempty(derive_seed(seed, 3));
        ep.query_label = nonempty(derive_seed(seed, 4));

        EncoderConfig cfg;
        cfg.mean_windows = {3};
        cfg.std_windows = {3};
        Projection proj;
        proj.out_dim = 3;
        proj.in_dim = cfg.recipe_dim(m);
        proj.weights.resize(static_cast<std::size_t>(proj.out_dim) * proj.in_dim);
        proj.bias.resize(proj.out_dim);
        for (double& x : proj.weights) x = rng.uniform(-0.6, 0.6);
        for (double& x : proj.bias) x = rng.uniform(0.1, 0.5);
        cfg.projection = proj;
        ThresholdParams tp{rng.uniform(-0.8, 0.2), rng.uniform(0.3, 2.0)};

        const LossGradients g = loss_gradients(ep, cfg, tp);

        // relative error < 1e-4 with a 1e-7 absolute floor: central
        // differences at step 1e-4 carry ~1e-8 truncation error, which
        // dominates the ratio on near-zero components
        auto fd_vs = [&](double analytic, auto&& mutate) {
            EncoderConfig chi = cfg, clo = cfg;
            ThresholdParams thi = tp, tlo = tp;
            mutate(chi, thi, +step);
            mutate(clo, tlo, -step);
            const double numeric =
                (episode_forward(ep, chi, thi) - episode_forward(ep, clo, tlo)) / (2 * step);
            const double diff = std::abs(analytic - numeric);
            const bool ok = diff < 1e-4 * std::max(std::abs(analytic), std::abs(numeric)) + 1e-7;
            worst = std::max(worst, diff / std::max({std::abs(analytic), std::abs(numeric), 1e-8}));
            return ok;
        };

        bool ok = fd_vs(g.d_threshold,
                        [](EncoderConfig&, ThresholdParams& t, double d) { t.threshold += d; });
        for (std::size_t i = 0; ok && i < cfg.projection->weights.size(); ++i)
            ok = fd_vs(g.d_weights[i], [i](EncoderConfig& cf, ThresholdParams&, double d) {
                cf.projection->weights[i] += d;
            });
        for (std::size_t i = 0; ok && i < cfg.projection->bias.size(); ++i)
            ok = fd_vs(g.d_bias[i], [i](EncoderConfig& cf, ThresholdParams&, double d) {
                cf.projection->bias[i] += d;
            });
        if (!ok) {
            c.require(false, "gradient mismatch at episode seed " + std::to_string(seed));
            return;
        }
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "worst relative error %.2e", worst);
    c.note(buf);
}

void criterion_6_fewshot_sanity(const std::vector<Phantom>& eval_set) {
    Criterion c(6, "trained-threshold inference beats the best constant baseline by >= 0.15, "
                   "byte-identical under reruns");
    const PipelineConfig cfg = fewshot_config(2.0);  // the pipeline working point
    const std::size_t sup = support_with_middle_lesion(eval_set);
    c.require(sup < eval_set.size(), "no phantom with a middle-slice lesion");
    if (sup >= eval_set.size()) return;

    const TrainResult trained = train_on_subject(eval_set[sup], cfg);
    const TrainResult trained_again = train_on_subject(eval_set[sup], cfg);
    c.require(trained.threshold.threshold == trained_again.threshold.threshold,
              "training is not deterministic");

    double model_sum = 0, allfg_sum = 0, allbg_sum = 0;
    int queries = 0;
    bool reruns_identical = true;
    for (std::size_t i = 0; i < eval_set.size() && queries < 10; ++i) {
        if (i == sup) continue;
        const Phantom& q = eval_set[i];
        const BinaryMask pred =
            infer_subject(eval_set[sup], -1, q, cfg, trained.config, trained.threshold);
        const BinaryMask pred2 =
            infer_subject(eval_set[sup], -1, q, cfg, trained.config, trained.threshold);
        reruns_identical = reruns_identical && pred.data == pred2.data;

        model_sum += dice(pred, q.lesion_mask);
        allfg_sum += dice(q.brain_mask, q.lesion_mask);
        allbg_sum += dice(BinaryMask::zeros(q.ctp.width, q.ctp.height, q.ctp.depth),
                          q.lesion_mask);
        ++queries;
    }
    const double model = model_sum / queries;
    const double best_const = std::max(allfg_sum / queries, allbg_sum / queries);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "mean Dice %.3f vs best constant %.3f over %d queries",
                  model, best_const, queries);
    c.note(buf);
    c.require(queries == 10, "expected 10 query phantoms");
    c.require(reruns_identical, "inference reruns differ");
    c.require(model >= best_const + 0.15, "margin over constant baseline below 0.15");
}

void criterion_7_metric_oracles() {
    Criterion c(7, "dice/mcc/delta_v match confusion-count references on 1000 mask pairs");
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const BinaryMask p = testhelp::random_mask(seed * 7 + 1, 5, 4, 3, 0.5);
        const BinaryMask g = testhelp::random_mask(seed * 7 + 2, 5, 4, 3, 0.35);
        const double d = dice(p, g), m = mcc(p, g);
        if (std::abs(d - testref::reference_dice(p, g)) > 1e-12 ||
            std::abs(m - testref::reference_mcc(p, g)) > 1e-12 || m < -1.0 || m > 1.0) {
            c.require(false, "mismatch at seed " + std::to_string(seed));
            return;
        }
        const auto conf = testref::count_confusion(p, g);
        const double dv = delta_v_ml(p, g, {1.0, 1.0, 5.0});
        const double want =
            std::abs(static_cast<double>(conf.tp + conf.fn) - (conf.tp + conf.fp)) * 5.0 / 1000.0;
        if (std::abs(dv - want) > 1e-12) {
            c.require(false, "delta_v mismatch at seed " + std::to_string(seed));
            return;
        }
    }
    // pinned example: pred 300 voxels, gt 200, spacing (1,1,5) -> 0.5 ml
    BinaryMask p = BinaryMask::zeros(20, 20, 1), g = BinaryMask::zeros(20, 20, 1);
    for (int i = 0; i < 300; ++i) p.data[i] = 1;
    for (int i = 0; i < 200; ++i) g.data[i] = 1;
    c.require(delta_v_ml(p, g, {1.0, 1.0, 5.0}) == 0.5, "0.5 ml example not exact");
    c.note("1000/1000 exact, 0.5 ml case exact");
}

void criterion_8_sweep(const std::vector<Phantom>& eval_set) {
    Criterion c(8, "rho sweep over 6 values: deterministic CSV, non-increasing mean count");
    PipelineConfig cfg = fewshot_config(2.0);
    cfg.training.steps = 60;
    const std::vector<double> rhos{2.0, 4.0, 8.0, 16.0, 250.0, 1000.0};

    const auto rows = rho_sweep(eval_set, rhos, cfg);
    const auto rows2 = rho_sweep(eval_set, rhos, cfg);

    const auto dir = std::filesystem::temp_directory_path() / "perfseg_acceptance";
    std::filesystem::create_directories(dir);
    write_sweep_csv(rows, (dir / "sweep_a.csv").string());
    write_sweep_csv(rows2, (dir / "sweep_b.csv").string());
    c.require(!file_bytes((dir / "sweep_a.csv").string()).empty(), "empty sweep csv");
    c.require(file_bytes((dir / "sweep_a.csv").string()) ==
                  file_bytes((dir / "sweep_b.csv").string()),
              "sweep CSV not byte-identical across reruns");

    c.require(rows.size() == rhos.size(), "row count != rho count");
    std::string counts;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        counts += (i ? "," : "") + std::to_string(rows[i].mean_svx_count);
        if (i > 0 && rows[i].mean_svx_count > rows[i - 1].mean_svx_count + 1e-12)
            c.require(false, "mean supervoxel count increased from rho " +
                                 std::to_string(rows[i - 1].rho) + " to " +
                                 std::to_string(rows[i].rho));
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "counts %.1f -> %.1f", rows.front().mean_svx_count,
                  rows.back().mean_svx_count);
    c.note(buf);
}

void criterion_9_episode_statistics(const Phantom& phantom) {
    Criterion c(9, "1000 episodes: untransformed share inside the binomial 95% interval, "
                   "support != query always");
    PipelineConfig cfg = fewshot_config(2.0);
    const LabelVolume labels = pipeline_supervoxels(phantom, cfg);
    const Volume4D model_in = model_input_volume(phantom, cfg);
    const SegmentStats stats = segment_stats(labels);

    int none = 0;
    for (int k = 0; k < 1000; ++k) {
        const Episode ep = build_episode(model_in, labels, stats, cfg.episodes,
                                         derive_seed(31337, static_cast<std::uint64_t>(k)));
        if (ep.support_z == ep.query_z) {
            c.require(false, "support_z == query_z at episode " + std::to_string(k));
            return;
        }
        if (ep.support_label.count() == 0 || ep.query_label.count() == 0) {
            c.require(false, "empty pseudolabel at episode " + std::to_string(k));
            return;
        }
        none += ep.transformed_side == TransformedSide::none;
    }
    // binomial(1000, 0.5): 95% interval 500 +- 1.96 * sqrt(250)
    c.note("untransformed in " + std::to_string(none) + "/1000");
    c.require(none >= 469 && none <= 531,
              "untransformed count " + std::to_string(none) + " outside [469, 531]");
}

}  // namespace

int main() {
    std::printf("perfseg acceptance suite\n");
    const auto t0 = std::chrono::steady_clock::now();

    criterion_1_supervoxel_oracle();

    const std::vector<Phantom> tune = tuning_phantoms();
    const std::vector<Phantom> eval_set = eval_phantoms();

    criterion_2_partition_suite(eval_set);
    criterion_3_achievable_dice_oracle();

    double rho_pms = 2.0;
    criterion_4_directional_claim(tune, eval_set, rho_pms);
    criterion_5_gradient_checks();
    criterion_6_fewshot_sanity(eval_set);
    criterion_7_metric_oracles();
    criterion_8_sweep(eval_set);
    criterion_9_episode_statistics(eval_set[0]);

    const double total =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s (%d failed) [%.1fs total]\n", g_failures ? "FAILURE" : "SUCCESS", g_failures,
                total);
    return g_failures == 0 ? 0 : 1;
}
