#include "perfseg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "perfseg/io.hpp"
#include "perfseg/preproc.hpp"
#include "perfseg/rng.hpp"

namespace perfseg {

using nlohmann::json;

const char* to_string(Arm arm) {
    switch (arm) {
        case Arm::proposed: return "proposed";
        case Arm::ctp_baseline: return "ctp-baseline";
        case Arm::pms_baseline: return "pms-baseline";
    }
    return "proposed";
}

Arm arm_from_string(const std::string& s) {
    if (s == "proposed") return Arm::proposed;
    if (s == "ctp-baseline") return Arm::ctp_baseline;
    if (s == "pms-baseline") return Arm::pms_baseline;
    throw std::invalid_argument("unknown arm: " + s);
}

VolumeKind supervoxel_source(Arm arm) {
    return arm == Arm::ctp_baseline ? VolumeKind::ctp : VolumeKind::pms;
}

VolumeKind model_input(Arm arm) {
    return arm == Arm::pms_baseline ? VolumeKind::pms : VolumeKind::ctp;
}

void PipelineConfig::validate() const {
    supervoxel.validate();
    episodes.validate();
    threshold.validate();
    if (episodes_per_volume < 1)
        throw std::invalid_argument("PipelineConfig: episodes_per_volume must be >= 1");
    if (training.steps < 1)
        throw std::invalid_argument("PipelineConfig: training.steps must be >= 1");
    if (training.step_size < 0)
        throw std::invalid_argument("PipelineConfig: training.step_size must be >= 0");
}

namespace {

json config_to_json(const PipelineConfig& c) {
    json j;
    j["arm"] = to_string(c.arm);
    j["seed"] = c.seed;
    j["supervoxel"] = {{"rho", c.supervoxel.rho},
                       {"min_size", c.supervoxel.min_size},
                       {"connectivity", c.supervoxel.connectivity},
                       {"normalize_channels", c.supervoxel.normalize_channels},
                       {"spacing_weighted", c.supervoxel.spacing_weighted}};
    j["episodes"] = {{"count_per_volume", c.episodes_per_volume},
                     {"min_slices", c.episodes.min_slices},
                     {"min_pixels_per_slice", c.episodes.min_pixels_per_slice},
                     {"transform",
                      {{"rotation_deg", c.episodes.transform.rotation_deg},
                       {"translation_px", c.episodes.transform.translation_px},
                       {"scale_range", c.episodes.transform.scale_range},
                       {"gamma_range", c.episodes.transform.gamma_range},
                       {"apply_probability", c.episodes.transform.apply_probability}}}};
    json enc;
    enc["use_raw"] = c.encoder.use_raw;
    enc["mean_windows"] = c.encoder.mean_windows;
    enc["std_windows"] = c.encoder.std_windows;
    if (c.encoder.projection) {
        enc["projection"] = {{"out_dim", c.encoder.projection->out_dim},
                             {"in_dim", c.encoder.projection->in_dim},
                             {"weights", c.encoder.projection->weights},
                             {"bias", c.encoder.projection->bias}};
    } else {
        enc["projection"] = nullptr;
    }
    j["encoder"] = enc;
    j["threshold"] = {{"value", c.threshold.threshold}, {"kappa", c.threshold.kappa}};
    j["training"] = {{"steps", c.training.steps}, {"step_size", c.training.step_size}};
    j["zscore_model_input"] = c.zscore_model_input;
    return j;
}

PipelineConfig config_from_json(const json& j) {
    PipelineConfig c;
    if (j.contains("arm")) c.arm = arm_from_string(j["arm"].get<std::string>());
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("supervoxel")) {
        const auto& s = j["supervoxel"];
        if (s.contains("rho")) c.supervoxel.rho = s["rho"].get<double>();
        if (s.contains("min_size")) c.supervoxel.min_size = s["min_size"].get<int>();
        if (s.contains("connectivity")) c.supervoxel.connectivity = s["connectivity"].get<int>();
        if (s.contains("normalize_channels"))
            c.supervoxel.normalize_channels = s["normalize_channels"].get<bool>();
        if (s.contains("spacing_weighted"))
            c.supervoxel.spacing_weighted = s["spacing_weighted"].get<bool>();
    }
    if (j.contains("episodes")) {
        const auto& e = j["episodes"];
        if (e.contains("count_per_volume"))
            c.episodes_per_volume = e["count_per_volume"].get<int>();
        if (e.contains("min_slices")) c.episodes.min_slices = e["min_slices"].get<int>();
        if (e.contains("min_pixels_per_slice"))
            c.episodes.min_pixels_per_slice = e["min_pixels_per_slice"].get<int>();
        if (e.contains("transform")) {
            const auto& t = e["transform"];
            auto& tp = c.episodes.transform;
            if (t.contains("rotation_deg")) tp.rotation_deg = t["rotation_deg"].get<double>();
            if (t.contains("translation_px"))
                tp.translation_px = t["translation_px"].get<double>();
            if (t.contains("scale_range"))
                tp.scale_range = t["scale_range"].get<std::array<double, 2>>();
            if (t.contains("gamma_range"))
                tp.gamma_range = t["gamma_range"].get<std::array<double, 2>>();
            if (t.contains("apply_probability"))
                tp.apply_probability = t["apply_probability"].get<double>();
        }
    }
    if (j.contains("encoder")) {
        const auto& e = j["encoder"];
        if (e.contains("use_raw")) c.encoder.use_raw = e["use_raw"].get<bool>();
        if (e.contains("mean_windows"))
            c.encoder.mean_windows = e["mean_windows"].get<std::vector<int>>();
        if (e.contains("std_windows"))
            c.encoder.std_windows = e["std_windows"].get<std::vector<int>>();
        if (e.contains("projection") && !e["projection"].is_null()) {
            Projection p;
            p.out_dim = e["projection"].at("out_dim").get<int>();
            p.in_dim = e["projection"].at("in_dim").get<int>();
            p.weights = e["projection"].at("weights").get<std::vector<double>>();
            p.bias = e["projection"].at("bias").get<std::vector<double>>();
            p.validate();
            c.encoder.projection = std::move(p);
        }
    }
    if (j.contains("threshold")) {
        const auto& t = j["threshold"];
        if (t.contains("value")) c.threshold.threshold = t["value"].get<double>();
        if (t.contains("kappa")) c.threshold.kappa = t["kappa"].get<double>();
    }
    if (j.contains("training")) {
        const auto& t = j["training"];
        if (t.contains("steps")) c.training.steps = t["steps"].get<int>();
        if (t.contains("step_size")) c.training.step_size = t["step_size"].get<double>();
    }
    if (j.contains("zscore_model_input"))
        c.zscore_model_input = j["zscore_model_input"].get<bool>();
    c.validate();
    return c;
}

}  // namespace

PipelineConfig PipelineConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("malformed config JSON: ") + e.what());
    }
    return config_from_json(j);
}

PipelineConfig PipelineConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

std::string PipelineConfig::to_json_text() const {
    return config_to_json(*this).dump(2) + "\n";
}

void PipelineConfig::to_json_file(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open config file for writing: " + path);
    out << to_json_text();
}

Phantom load_subject_dir(const std::string& dir) {
    const auto base = std::filesystem::path(dir);
    Phantom p;
    p.ctp = load_volume((base / "ctp").string());
    p.brain_mask = load_mask((base / "brain_mask").string()).mask;
    p.lesion_mask = load_mask((base / "lesion_mask").string()).mask;
    p.ctp.id = base.filename().string();
    return p;
}

void save_subject_dir(const Phantom& subject, const std::string& dir, const std::string& id) {
    const auto base = std::filesystem::path(dir);
    std::filesystem::create_directories(base);
    Volume4D ctp = subject.ctp;
    if (!id.empty()) ctp.id = id;
    save_volume(ctp, (base / "ctp").string());
    save_mask(subject.brain_mask, ctp.spacing_mm, (base / "brain_mask").string());
    save_mask(subject.lesion_mask, ctp.spacing_mm, (base / "lesion_mask").string());
}

Volume4D supervoxel_input_volume(const Phantom& subject, const PipelineConfig& cfg) {
    if (supervoxel_source(cfg.arm) == VolumeKind::ctp) return subject.ctp;
    return compute_pms(subject.ctp, subject.brain_mask);
}

Volume4D model_input_volume(const Phantom& subject, const PipelineConfig& cfg) {
    Volume4D v = model_input(cfg.arm) == VolumeKind::ctp
                     ? subject.ctp
                     : compute_pms(subject.ctp, subject.brain_mask);
    if (cfg.zscore_model_input) {
        const std::string id = v.id;
        v = zscore_channels(v, subject.brain_mask);
        v.id = id;
    }
    return v;
}

LabelVolume pipeline_supervoxels(const Phantom& subject, const PipelineConfig& cfg) {
    return felzenszwalb_4d(supervoxel_input_volume(subject, cfg), cfg.supervoxel,
                           subject.brain_mask);
}

std::vector<Episode> make_episodes(const Volume4D& model_in, const LabelVolume& labels,
                                   const PipelineConfig& cfg, int count,
                                   std::uint64_t base_seed) {
    const SegmentStats stats = segment_stats(labels);
    std::vector<Episode> eps;
    eps.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k)
        eps.push_back(build_episode(model_in, labels, stats, cfg.episodes,
                                    derive_seed(base_seed, static_cast<std::uint64_t>(k))));
    return eps;
}

TrainResult train_on_subject(const Phantom& subject, const PipelineConfig& cfg) {
    cfg.validate();
    const LabelVolume labels = pipeline_supervoxels(subject, cfg);
    const Volume4D model_in = model_input_volume(subject, cfg);
    const auto episodes =
        make_episodes(model_in, labels, cfg, cfg.episodes_per_volume, cfg.seed);
    return train(episodes, cfg.encoder, cfg.threshold, cfg.training.steps,
                 cfg.training.step_size);
}

int middle_slice(const Volume4D& v) { return v.depth / 2; }

BinaryMask infer_subject(const Phantom& support, int support_z, const Phantom& query,
                         const PipelineConfig& cfg, const EncoderConfig& enc,
                         const ThresholdParams& tp) {
    const Volume4D support_in = model_input_volume(support, cfg);
    if (support_z < 0) support_z = middle_slice(support_in);
    const SliceTW support_slice = extract_slice(support_in, support_z);

    BinaryMask support_label = BinaryMask::zeros(support_in.width, support_in.height);
    for (int y = 0; y < support_in.height; ++y)
        for (int x = 0; x < support_in.width; ++x)
            support_label.set(x, y, support.lesion_mask.at(x, y, support_z));

    const Volume4D query_in = model_input_volume(query, cfg);
    return infer_volume(support_slice, support_label, query_in, enc, tp, &query.brain_mask);
}

std::vector<SweepRow> rho_sweep(const std::vector<Phantom>& subjects,
                                const std::vector<double>& rhos, const PipelineConfig& cfg) {
    if (rhos.size() < 2) throw std::invalid_argument("rho_sweep: need at least 2 rho values");
    if (subjects.size() < 2)
        throw std::invalid_argument("rho_sweep: need at least 2 subjects");

    // Support subject: first whose lesion shows on its middle slice.
    std::size_t support_idx = subjects.size();
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        const int mz = subjects[i].ctp.depth / 2;
        const auto& lm = subjects[i].lesion_mask;
        for (int y = 0; y < lm.height && support_idx == subjects.size(); ++y)
            for (int x = 0; x < lm.width; ++x)
                if (lm.at(x, y, mz)) {
                    support_idx = i;
                    break;
                }
        if (support_idx != subjects.size()) break;
    }
    if (support_idx == subjects.size())
        throw std::runtime_error("rho_sweep: no subject has a lesion on its middle slice");

    std::vector<double> sorted_rhos = rhos;
    std::sort(sorted_rhos.begin(), sorted_rhos.end());

    std::vector<SweepRow> rows;
    for (std::size_t ri = 0; ri < sorted_rhos.size(); ++ri) {
        // seed depends on cfg only, so equal rho values give equal rows
        PipelineConfig rc = cfg;
        rc.supervoxel.rho = sorted_rhos[ri];

        SweepRow row;
        row.rho = sorted_rhos[ri];

        double count_sum = 0.0;
        for (const Phantom& s : subjects)
            count_sum += static_cast<double>(pipeline_supervoxels(s, rc).max_label());
        row.mean_svx_count = count_sum / static_cast<double>(subjects.size());

        const TrainResult trained = train_on_subject(subjects[support_idx], rc);

        std::vector<double> ds, dv;
        for (std::size_t qi = 0; qi < subjects.size(); ++qi) {
            if (qi == support_idx) continue;
            const BinaryMask pred = infer_subject(subjects[support_idx], -1, subjects[qi], rc,
                                                  trained.config, trained.threshold);
            ds.push_back(dice(pred, subjects[qi].lesion_mask));
            dv.push_back(delta_v_ml(pred, subjects[qi].lesion_mask,
                                    subjects[qi].ctp.spacing_mm));
        }
        auto mean_of = [](const std::vector<double>& v) {
            double s = 0;
            for (double x : v) s += x;
            return s / static_cast<double>(v.size());
        };
        auto std_of = [&](const std::vector<double>& v, double m) {
            double s = 0;
            for (double x : v) s += (x - m) * (x - m);
            return std::sqrt(s / static_cast<double>(v.size()));
        };
        row.mean_ds = mean_of(ds);
        row.std_ds = std_of(ds, row.mean_ds);
        row.mean_dv = mean_of(dv);
        row.std_dv = std_of(dv, row.mean_dv);
        rows.push_back(row);
    }
    return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
    ensure_parent_dir(path);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open sweep csv for writing: " + path);
    out << "rho,mean_ds,std_ds,mean_dv,std_dv,mean_svx_count\n";
    char buf[256];
    for (const SweepRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.rho, r.mean_ds,
                      r.std_ds, r.mean_dv, r.std_dv, r.mean_svx_count);
        out << buf;
    }
}

}  // namespace perfseg
