#include <benchmark/benchmark.h>

#include "perfseg/episodes.hpp"
#include "perfseg/perfusion.hpp"
#include "perfseg/pipeline.hpp"
#include "perfseg/proto.hpp"
#include "perfseg/supervox.hpp"

using namespace perfseg;

namespace {

PhantomSpec bench_spec(int w, int h, int z, int frames) {
    PhantomSpec s;
    s.seed = 99;
    s.width = w;
    s.height = h;
    s.depth = z;
    s.spacing_mm = {1.0, 1.0, 5.0};
    s.frames = frames;
    s.lesion_radius_mm = {6.0, 12.0};
    s.lesion_fade_fraction = 0.45;
    s.lesion_amplitude_factor = 0.75;
    s.noise_sigma = 2.0;
    return s;
}

const Phantom& phantom_64() {
    static const Phantom p = make_phantom(bench_spec(64, 64, 16, 16));
    return p;
}

const Volume4D& pms_64() {
    static const Volume4D v = compute_pms(phantom_64().ctp, phantom_64().brain_mask);
    return v;
}

}  // namespace

// The reference workload: a 64x64x16 masked volume with 5 channels.
static void BM_Felzenszwalb4D_Pms(benchmark::State& state) {
    SupervoxelParams params;
    params.rho = 2.0;
    params.min_size = 100;
    for (auto _ : state)
        benchmark::DoNotOptimize(felzenszwalb_4d(pms_64(), params, phantom_64().brain_mask));
}
BENCHMARK(BM_Felzenszwalb4D_Pms)->Unit(benchmark::kMillisecond);

static void BM_Felzenszwalb4D_RawCtp(benchmark::State& state) {
    SupervoxelParams params;
    params.rho = 2.0;
    params.min_size = 100;
    for (auto _ : state)
        benchmark::DoNotOptimize(felzenszwalb_4d(phantom_64().ctp, params, phantom_64().brain_mask));
}
BENCHMARK(BM_Felzenszwalb4D_RawCtp)->Unit(benchmark::kMillisecond);

static void BM_ComputePms(benchmark::State& state) {
    for (auto _ : state)
        benchmark::DoNotOptimize(compute_pms(phantom_64().ctp, phantom_64().brain_mask));
}
BENCHMARK(BM_ComputePms)->Unit(benchmark::kMillisecond);

static void BM_MakePhantom(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(make_phantom(bench_spec(64, 64, 16, 16)));
}
BENCHMARK(BM_MakePhantom)->Unit(benchmark::kMillisecond);

static void BM_EncodeSlice(benchmark::State& state) {
    const SliceTW slice = extract_slice(phantom_64().ctp, 8);
    EncoderConfig cfg;
    for (auto _ : state) benchmark::DoNotOptimize(encode(slice, cfg));
}
BENCHMARK(BM_EncodeSlice)->Unit(benchmark::kMillisecond);

static void BM_BuildEpisode(benchmark::State& state) {
    PipelineConfig cfg = PipelineConfig{};
    cfg.supervoxel.rho = 2.0;
    const LabelVolume labels = pipeline_supervoxels(phantom_64(), cfg);
    const Volume4D model_in = model_input_volume(phantom_64(), cfg);
    const SegmentStats stats = segment_stats(labels);
    std::uint64_t k = 0;
    for (auto _ : state)
        benchmark::DoNotOptimize(build_episode(model_in, labels, stats, cfg.episodes, k++));
}
BENCHMARK(BM_BuildEpisode)->Unit(benchmark::kMillisecond);

static void BM_InferVolume(benchmark::State& state) {
    PipelineConfig cfg = PipelineConfig{};
    cfg.supervoxel.rho = 2.0;
    const Volume4D model_in = model_input_volume(phantom_64(), cfg);
    const SliceTW support = extract_slice(model_in, 8);
    BinaryMask label = BinaryMask::zeros(64, 64);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
            label.set(x, y, phantom_64().lesion_mask.at(x, y, 8));
    if (label.count() == 0) label.set(32, 32, true);
    ThresholdParams tp;
    for (auto _ : state)
        benchmark::DoNotOptimize(
            infer_volume(support, label, model_in, EncoderConfig{}, tp, &phantom_64().brain_mask));
}
BENCHMARK(BM_InferVolume)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
