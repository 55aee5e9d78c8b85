// perfseg: batch CLI for supervoxel-based few-shot perfusion segmentation.
//
// Pipeline stages map onto subcommands: synth -> pm / preprocess ->
// supervoxel -> episodes -> train -> infer -> eval, plus a rho sensitivity
// sweep. All paths are explicit and all randomness hangs off --seed.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "perfseg/episodes.hpp"
#include "perfseg/io.hpp"
#include "perfseg/metrics.hpp"
#include "perfseg/perfusion.hpp"
#include "perfseg/pipeline.hpp"
#include "perfseg/preproc.hpp"
#include "perfseg/proto.hpp"
#include "perfseg/rng.hpp"
#include "perfseg/supervox.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace perfseg;

namespace {

PhantomSpec phantom_spec_from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open phantom spec: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("malformed phantom spec: ") + e.what());
    }
    PhantomSpec s;
    if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("dims")) {
        auto d = j["dims"].get<std::array<int, 3>>();
        s.width = d[0];
        s.height = d[1];
        s.depth = d[2];
    }
    if (j.contains("spacing_mm")) s.spacing_mm = j["spacing_mm"].get<std::array<double, 3>>();
    if (j.contains("frames")) s.frames = j["frames"].get<int>();
    if (j.contains("frame_interval_s")) s.frame_interval_s = j["frame_interval_s"].get<double>();
    if (j.contains("lesion_count")) s.lesion_count = j["lesion_count"].get<int>();
    if (j.contains("lesion_radius_mm"))
        s.lesion_radius_mm = j["lesion_radius_mm"].get<std::array<double, 2>>();
    if (j.contains("lesion_delay_s")) s.lesion_delay_s = j["lesion_delay_s"].get<double>();
    if (j.contains("lesion_amplitude_factor"))
        s.lesion_amplitude_factor = j["lesion_amplitude_factor"].get<double>();
    if (j.contains("lesion_fade_fraction"))
        s.lesion_fade_fraction = j["lesion_fade_fraction"].get<double>();
    if (j.contains("noise_sigma")) s.noise_sigma = j["noise_sigma"].get<double>();
    s.validate();
    return s;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir, int count,
              std::optional<std::uint64_t> seed) {
    PhantomSpec spec = phantom_spec_from_file(spec_path);
    if (seed) spec.seed = *seed;
    fs::create_directories(out_dir);
    if (count == 1) {
        Phantom ph = make_phantom(spec);
        save_subject_dir(ph, out_dir, fs::path(out_dir).filename().string());
        std::cout << "wrote phantom to " << out_dir << "\n";
        return 0;
    }
    for (int i = 0; i < count; ++i) {
        PhantomSpec s = spec;
        s.seed = derive_seed(spec.seed, static_cast<std::uint64_t>(i));
        char name[32];
        std::snprintf(name, sizeof(name), "phantom_%03d", i);
        const fs::path dir = fs::path(out_dir) / name;
        save_subject_dir(make_phantom(s), dir.string(), name);
    }
    std::cout << "wrote " << count << " phantoms to " << out_dir << "\n";
    return 0;
}

int cmd_preprocess(const std::string& in, const std::string& mask_path, const std::string& out,
                   std::optional<double> hu_slope, std::optional<double> hu_intercept,
                   std::optional<double> gamma, bool hist_eq, int bins, bool zscore) {
    Volume4D v = load_volume(in);
    const BinaryMask mask = load_mask(mask_path).mask;
    if (hu_slope || hu_intercept)
        v = hu_rescale(v, hu_slope.value_or(1.0), hu_intercept.value_or(0.0));
    if (gamma) {
        // Per-volume range from the masked voxels.
        float lo = std::numeric_limits<float>::max();
        float hi = std::numeric_limits<float>::lowest();
        for (std::size_t i = 0; i < v.voxel_count(); ++i)
            if (mask.data[i])
                for (int m = 0; m < v.channels; ++m) {
                    const float x = v.data[v.voxel_count() * m + i];
                    lo = std::min(lo, x);
                    hi = std::max(hi, x);
                }
        if (hi > lo) v = gamma_correct(v, *gamma, lo, hi);
    }
    if (hist_eq) v = hist_equalize(v, mask, bins);
    if (zscore) v = zscore_channels(v, mask);
    save_volume(v, out);
    std::cout << "wrote " << out << "\n";
    return 0;
}

int cmd_pm(const std::string& ctp_path, const std::string& mask_path, const std::string& out) {
    const Volume4D ctp = load_volume(ctp_path);
    const BinaryMask mask = load_mask(mask_path).mask;
    save_volume(compute_pms(ctp, mask), out);
    std::cout << "wrote " << out << "\n";
    return 0;
}

int cmd_supervoxel(const std::string& in, const std::string& mask_path, const std::string& out,
                   const std::string& stats_path, const SupervoxelParams& params) {
    const Volume4D v = load_volume(in);
    const BinaryMask mask = load_mask(mask_path).mask;
    const LabelVolume labels = felzenszwalb_4d(v, params, mask);
    save_labels(labels, out);
    if (!stats_path.empty()) write_stats_csv(segment_stats(labels), stats_path);
    std::cout << "wrote " << out << " (" << labels.max_label() << " supervoxels)\n";
    return 0;
}

json transform_record_json(const Episode& ep) {
    return {{"rotation_deg", ep.transform.rotation_deg},
            {"scale", ep.transform.scale},
            {"tx", ep.transform.tx},
            {"ty", ep.transform.ty},
            {"gamma", ep.transform.gamma}};
}

int cmd_episodes(const std::string& in, const std::string& labels_path, int count,
                 std::uint64_t seed, const std::string& out_dir, const EpisodeParams& params) {
    const Volume4D v = load_volume(in);
    const LabelVolume labels = load_labels(labels_path);
    const SegmentStats stats = segment_stats(labels);
    fs::create_directories(out_dir);

    json manifest;
    manifest["volume"] = fs::path(strip_volume_suffix(in)).filename().string();
    manifest["labels"] = fs::path(strip_volume_suffix(labels_path)).filename().string();
    manifest["seed"] = seed;
    manifest["episodes"] = json::array();
    for (int k = 0; k < count; ++k) {
        const Episode ep =
            build_episode(v, labels, stats, params, derive_seed(seed, static_cast<std::uint64_t>(k)));
        char id[32];
        std::snprintf(id, sizeof(id), "ep_%04d", k);
        const fs::path base = fs::path(out_dir) / id;
        save_slice(ep.support_image, v.spacing_mm, v.frame_interval_s, base.string() + "_xs");
        save_mask(ep.support_label, v.spacing_mm, base.string() + "_ls");
        save_slice(ep.query_image, v.spacing_mm, v.frame_interval_s, base.string() + "_xq");
        save_mask(ep.query_label, v.spacing_mm, base.string() + "_lq");
        manifest["episodes"].push_back({{"id", id},
                                        {"supervoxel_id", ep.supervoxel_id},
                                        {"volume_id", ep.volume_id},
                                        {"support_z", ep.support_z},
                                        {"query_z", ep.query_z},
                                        {"transformed_side", to_string(ep.transformed_side)},
                                        {"seed", ep.seed},
                                        {"transform", transform_record_json(ep)}});
    }
    std::ofstream mf(fs::path(out_dir) / "manifest.json");
    if (!mf) throw io_error("cannot write manifest in " + out_dir);
    mf << manifest.dump(2) << "\n";
    std::cout << "wrote " << count << " episodes to " << out_dir << "\n";
    return 0;
}

std::vector<Episode> load_episode_dir(const std::string& dir) {
    const fs::path mpath = fs::path(dir) / "manifest.json";
    std::ifstream in(mpath);
    if (!in) throw io_error("cannot open episode manifest: " + mpath.string());
    json manifest;
    in >> manifest;
    std::vector<Episode> eps;
    for (const auto& e : manifest.at("episodes")) {
        const std::string id = e.at("id").get<std::string>();
        const fs::path base = fs::path(dir) / id;
        Episode ep;
        ep.support_image = load_slice(base.string() + "_xs");
        ep.support_label = load_mask(base.string() + "_ls").mask;
        ep.query_image = load_slice(base.string() + "_xq");
        ep.query_label = load_mask(base.string() + "_lq").mask;
        ep.supervoxel_id = e.at("supervoxel_id").get<std::uint32_t>();
        ep.volume_id = e.at("volume_id").get<std::string>();
        ep.support_z = e.at("support_z").get<int>();
        ep.query_z = e.at("query_z").get<int>();
        ep.transformed_side = transformed_side_from_string(e.at("transformed_side").get<std::string>());
        ep.seed = e.at("seed").get<std::uint64_t>();
        eps.push_back(std::move(ep));
    }
    return eps;
}

void write_loss_trace(const std::vector<double>& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open loss trace for writing: " + path);
    out << "step,loss\n";
    char buf[64];
    for (std::size_t i = 0; i < trace.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", i, trace[i]);
        out << buf;
    }
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& episode_dirs,
              const std::string& out_dir, std::optional<std::uint64_t> seed) {
    PipelineConfig cfg = PipelineConfig::from_json_file(config_path);
    if (seed) cfg.seed = *seed;
    std::vector<Episode> episodes;
    for (const std::string& dir : episode_dirs) {
        auto eps = load_episode_dir(dir);
        episodes.insert(episodes.end(), std::make_move_iterator(eps.begin()),
                        std::make_move_iterator(eps.end()));
    }
    if (episodes.empty()) throw std::runtime_error("train: no episodes found");

    const TrainResult result = train(episodes, cfg.encoder, cfg.threshold, cfg.training.steps,
                                     cfg.training.step_size);
    fs::create_directories(out_dir);
    save_model(result.config, result.threshold, (fs::path(out_dir) / "model.json").string());
    write_loss_trace(result.loss_trace, (fs::path(out_dir) / "loss_trace.csv").string());
    cfg.to_json_file((fs::path(out_dir) / "effective_config.json").string());
    std::cout << "trained " << cfg.training.steps << " steps; final loss "
              << result.loss_trace.back() << "; wrote " << out_dir << "\n";
    return 0;
}

int cmd_infer(const std::string& model_path, const std::string& support_image_path,
              const std::string& support_mask_path, int support_z,
              const std::string& query_path, const std::string& brain_mask_path,
              const std::string& out_path) {
    EncoderConfig enc;
    ThresholdParams tp;
    load_model(model_path, enc, tp);

    const Volume4D support_vol = load_volume(support_image_path);
    const BinaryMask support_mask3d = load_mask(support_mask_path).mask;
    if (support_mask3d.width != support_vol.width || support_mask3d.height != support_vol.height ||
        support_mask3d.depth != support_vol.depth)
        throw std::runtime_error("infer: support mask dims do not match support volume");
    if (support_z < 0) support_z = middle_slice(support_vol);  // middle slice default
    if (support_z >= support_vol.depth)
        throw std::runtime_error("infer: support-z out of range");

    const SliceTW support_slice = extract_slice(support_vol, support_z);
    BinaryMask support_label = BinaryMask::zeros(support_vol.width, support_vol.height);
    for (int y = 0; y < support_vol.height; ++y)
        for (int x = 0; x < support_vol.width; ++x)
            support_label.set(x, y, support_mask3d.at(x, y, support_z));

    const Volume4D query = load_volume(query_path);
    std::optional<BinaryMask> brain;
    if (!brain_mask_path.empty()) brain = load_mask(brain_mask_path).mask;

    const BinaryMask pred = infer_volume(support_slice, support_label, query, enc, tp,
                                         brain ? &*brain : nullptr);
    save_mask(pred, query.spacing_mm, out_path);
    std::cout << "wrote " << out_path << " (" << pred.count() << " voxels predicted)\n";
    return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir,
             const std::string& groups_path, const std::string& out_dir) {
    std::map<std::string, std::string> groups;
    if (!groups_path.empty()) {
        std::ifstream in(groups_path);
        if (!in) throw io_error("cannot open groups file: " + groups_path);
        json j;
        in >> j;
        for (auto it = j.begin(); it != j.end(); ++it)
            groups[it.key()] = it.value().get<std::string>();
    }

    std::vector<std::string> run_ids;
    for (const auto& entry : fs::directory_iterator(pred_dir)) {
        const std::string name = entry.path().filename().string();
        const std::string suffix = ".vh.json";
        if (name.size() > suffix.size() &&
            name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
            run_ids.push_back(name.substr(0, name.size() - suffix.size()));
    }
    std::sort(run_ids.begin(), run_ids.end());
    if (run_ids.empty()) throw std::runtime_error("eval: no predictions in " + pred_dir);

    std::vector<RunMetrics> runs;
    for (const std::string& id : run_ids) {
        const MaskFile pred = load_mask((fs::path(pred_dir) / id).string());
        const MaskFile gt = load_mask((fs::path(gt_dir) / id).string());
        RunMetrics r;
        r.run_id = id;
        const auto git = groups.find(id);
        r.group = git == groups.end() ? "ungrouped" : git->second;
        r.dice = dice(pred.mask, gt.mask);
        r.mcc = mcc(pred.mask, gt.mask);
        r.delta_v_ml = delta_v_ml(pred.mask, gt.mask, gt.spacing_mm);
        runs.push_back(std::move(r));
    }
    fs::create_directories(out_dir);
    write_runs_csv(runs, (fs::path(out_dir) / "runs.csv").string());
    write_aggregate_csv(aggregate(runs), (fs::path(out_dir) / "aggregate.csv").string());
    std::cout << "evaluated " << runs.size() << " runs; wrote " << out_dir << "\n";
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& data_dir,
              const std::vector<double>& rhos, const std::string& out_csv,
              std::optional<std::uint64_t> seed) {
    PipelineConfig cfg = PipelineConfig::from_json_file(config_path);
    if (seed) cfg.seed = *seed;

    std::vector<std::string> dirs;
    for (const auto& entry : fs::directory_iterator(data_dir))
        if (entry.is_directory()) dirs.push_back(entry.path().string());
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw std::runtime_error("sweep: no subject directories in " + data_dir);

    std::vector<Phantom> subjects;
    for (const std::string& d : dirs) subjects.push_back(load_subject_dir(d));

    const auto rows = rho_sweep(subjects, rhos, cfg);
    write_sweep_csv(rows, out_csv);
    std::cout << "wrote " << out_csv << " (" << rows.size() << " rho values, "
              << subjects.size() << " subjects)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"supervoxel-based few-shot segmentation of perfusion volumes"};
    app.require_subcommand(1);

    std::optional<std::uint64_t> seed;
    app.add_option("--seed", seed, "override the seed from config/spec files");

    // synth
    auto* synth = app.add_subcommand("synth", "generate synthetic CTP phantoms");
    std::string synth_spec, synth_out;
    int synth_count = 1;
    synth->add_option("--spec", synth_spec, "phantom spec JSON")->required();
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--count", synth_count, "number of phantoms (seeds derived per index)");

    // preprocess
    auto* prep = app.add_subcommand("preprocess", "contrast pipeline within a brain mask");
    std::string prep_in, prep_mask, prep_out;
    std::optional<double> prep_slope, prep_intercept, prep_gamma;
    bool prep_histeq = false, prep_zscore = false;
    int prep_bins = 256;
    prep->add_option("--in", prep_in)->required();
    prep->add_option("--mask", prep_mask)->required();
    prep->add_option("--out", prep_out)->required();
    prep->add_option("--hu-slope", prep_slope, "HU rescale slope");
    prep->add_option("--hu-intercept", prep_intercept, "HU rescale intercept");
    prep->add_option("--gamma", prep_gamma, "gamma correction exponent, conventional preset 1.2 (range from masked min/max)");
    prep->add_flag("--hist-eq", prep_histeq, "histogram equalization per channel");
    prep->add_option("--bins", prep_bins, "histogram bins");
    prep->add_flag("--zscore", prep_zscore, "z-score channels within mask");

    // pm
    auto* pm = app.add_subcommand("pm", "compute parametric maps [CBV,CBF,TTP,TMax,MIP]");
    std::string pm_ctp, pm_mask, pm_out;
    pm->add_option("--ctp", pm_ctp)->required();
    pm->add_option("--mask", pm_mask)->required();
    pm->add_option("--out", pm_out)->required();

    // supervoxel
    auto* svx = app.add_subcommand("supervoxel", "4D graph-based supervoxel segmentation");
    std::string svx_in, svx_mask, svx_out, svx_stats;
    SupervoxelParams svx_params;
    bool svx_no_norm = false;
    svx->add_option("--in", svx_in)->required();
    svx->add_option("--mask", svx_mask)->required();
    svx->add_option("--out", svx_out)->required();
    svx->add_option("--stats", svx_stats, "per-label stats CSV");
    svx->add_option("--rho", svx_params.rho, "merge scale parameter")->required();
    svx->add_option("--min-size", svx_params.min_size);
    svx->add_option("--connectivity", svx_params.connectivity, "6 or 26");
    svx->add_flag("--no-normalize", svx_no_norm, "skip per-channel z-scoring");
    svx->add_flag("--spacing-weighted", svx_params.spacing_weighted);

    // episodes
    auto* eps = app.add_subcommand("episodes", "export self-supervised episodes");
    std::string eps_in, eps_labels, eps_out;
    int eps_count = 32;
    std::uint64_t eps_seed = 0;
    EpisodeParams eps_params;
    eps->add_option("--in", eps_in)->required();
    eps->add_option("--labels", eps_labels)->required();
    eps->add_option("--out", eps_out)->required();
    eps->add_option("--count", eps_count);
    eps->add_option("--episode-seed", eps_seed, "base seed (also settable via --seed)");
    eps->add_option("--min-slices", eps_params.min_slices);
    eps->add_option("--min-pixels", eps_params.min_pixels_per_slice);
    eps->add_option("--apply-probability", eps_params.transform.apply_probability);

    // train
    auto* train_cmd = app.add_subcommand("train", "gradient descent on exported episodes");
    std::string train_config, train_out;
    std::vector<std::string> train_dirs;
    train_cmd->add_option("--config", train_config)->required();
    train_cmd->add_option("--episodes", train_dirs, "episode directories")->required();
    train_cmd->add_option("--out", train_out)->required();

    // infer
    auto* infer = app.add_subcommand("infer", "segment a query volume from one support slice");
    std::string inf_model, inf_simg, inf_smask, inf_query, inf_brain, inf_out;
    int inf_z = -1;
    infer->add_option("--model", inf_model)->required();
    infer->add_option("--support-image", inf_simg)->required();
    infer->add_option("--support-mask", inf_smask)->required();
    infer->add_option("--support-z", inf_z, "support slice (default: middle slice)");
    infer->add_option("--query", inf_query)->required();
    infer->add_option("--brain-mask", inf_brain, "clip predictions to this mask");
    infer->add_option("--out", inf_out)->required();

    // eval
    auto* eval = app.add_subcommand("eval", "Dice/MCC/deltaV over prediction-gt mask pairs");
    std::string eval_pred, eval_gt, eval_groups, eval_out;
    eval->add_option("--pred", eval_pred)->required();
    eval->add_option("--gt", eval_gt)->required();
    eval->add_option("--groups", eval_groups, "JSON map run_id -> group tag");
    eval->add_option("--out", eval_out)->required();

    // sweep
    auto* sweep = app.add_subcommand("sweep", "rho sensitivity sweep over a subject set");
    std::string sweep_config, sweep_data, sweep_out;
    std::vector<double> sweep_rhos;
    sweep->add_option("--config", sweep_config)->required();
    sweep->add_option("--data", sweep_data, "directory of subject subdirectories")->required();
    sweep->add_option("--rho", sweep_rhos, "rho values")->required()->expected(-2);
    sweep->add_option("--out", sweep_out)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) return cmd_synth(synth_spec, synth_out, synth_count, seed);
        if (*prep)
            return cmd_preprocess(prep_in, prep_mask, prep_out, prep_slope, prep_intercept,
                                  prep_gamma, prep_histeq, prep_bins, prep_zscore);
        if (*pm) return cmd_pm(pm_ctp, pm_mask, pm_out);
        if (*svx) {
            svx_params.normalize_channels = !svx_no_norm;
            return cmd_supervoxel(svx_in, svx_mask, svx_out, svx_stats, svx_params);
        }
        if (*eps) {
            if (seed) eps_seed = *seed;
            return cmd_episodes(eps_in, eps_labels, eps_count, eps_seed, eps_out, eps_params);
        }
        if (*train_cmd) return cmd_train(train_config, train_dirs, train_out, seed);
        if (*infer)
            return cmd_infer(inf_model, inf_simg, inf_smask, inf_z, inf_query, inf_brain, inf_out);
        if (*eval) return cmd_eval(eval_pred, eval_gt, eval_groups, eval_out);
        if (*sweep) return cmd_sweep(sweep_config, sweep_data, sweep_rhos, sweep_out, seed);
    } catch (const io_error& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
