#include <doctest.h>

#include <stdexcept>

#include <set>

#include "perfseg/perfusion.hpp"
#include "perfseg/supervox.hpp"
#include "references.hpp"
#include "test_helpers.hpp"

using namespace perfseg;

TEST_SUITE_BEGIN("supervox");

TEST_CASE("uniform volume collapses to a single supervoxel") {
    Volume4D v;
    v.width = 5;
    v.height = 4;
    v.depth = 3;
    v.channels = 2;
    v.data.assign(v.element_count(), 3.25f);
    SupervoxelParams p;
    p.rho = 1.0;
    p.min_size = 1;
    const LabelVolume out = felzenszwalb_4d(v, p, testhelp::full_mask(5, 4, 3));
    CHECK(out.max_label() == 1);
    for (std::uint32_t l : out.labels) CHECK(l == 1);
}

TEST_CASE("two-voxel merge predicate hand trace") {
    Volume4D v;
    v.width = 2;
    v.height = 1;
    v.depth = 1;
    v.channels = 1;
    v.data = {0.0f, 10.0f};
    SupervoxelParams p;
    p.min_size = 1;
    p.normalize_channels = false;

    // single edge of weight 10; tau = rho/1 on both sides
    p.rho = 1.0;  // 10 <= min(0+1, 0+1) fails
    CHECK(felzenszwalb_4d(v, p, testhelp::full_mask(2, 1, 1)).max_label() == 2);
    p.rho = 100.0;  // 10 <= 100 merges
    CHECK(felzenszwalb_4d(v, p, testhelp::full_mask(2, 1, 1)).max_label() == 1);
}

TEST_CASE("matches the independent naive reference on random volumes") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const Volume4D v = testhelp::random_volume(seed, 6, 6, 6, 3, -4.0, 4.0);
        const BinaryMask mask = testhelp::random_mask(seed + 500, 6, 6, 6, 0.85);
        if (mask.empty()) continue;
        Rng knobs(seed);
        SupervoxelParams p;
        p.rho = knobs.uniform(0.5, 40.0);
        p.min_size = static_cast<int>(knobs.uniform_int(1, 10));
        p.connectivity = knobs.bernoulli(0.5) ? 6 : 26;
        p.normalize_channels = knobs.bernoulli(0.5);
        p.spacing_weighted = knobs.bernoulli(0.5);
        const LabelVolume got = felzenszwalb_4d(v, p, mask);
        const LabelVolume want = testref::reference_felzenszwalb(v, p, mask);
        REQUIRE(got.labels == want.labels);
    }
}

TEST_CASE("determinism across repeated runs") {
    const Volume4D v = testhelp::random_volume(77, 10, 9, 4, 3);
    const BinaryMask mask = testhelp::random_mask(78, 10, 9, 4, 0.9);
    SupervoxelParams p;
    p.rho = 5.0;
    p.min_size = 4;
    const LabelVolume a = felzenszwalb_4d(v, p, mask);
    const LabelVolume b = felzenszwalb_4d(v, p, mask);
    CHECK(a.labels == b.labels);
}

TEST_CASE("partition, connectivity and min-size hold on a phantom") {
    PhantomSpec spec;
    spec.seed = 900;
    spec.width = 32;
    spec.height = 32;
    spec.depth = 8;
    spec.frames = 8;
    spec.lesion_radius_mm = {5.0, 8.0};
    const Phantom ph = make_phantom(spec);
    const Volume4D pm = compute_pms(ph.ctp, ph.brain_mask);
    SupervoxelParams p;
    p.rho = 200.0;
    p.min_size = 30;
    const LabelVolume labels = felzenszwalb_4d(pm, p, ph.brain_mask);
    labels.validate();

    for (std::size_t i = 0; i < labels.labels.size(); ++i)
        REQUIRE((labels.labels[i] != 0) == (ph.brain_mask.data[i] != 0));

    const SegmentStats stats = segment_stats(labels);
    REQUIRE(stats.masked_voxels == static_cast<std::int64_t>(ph.brain_mask.count()));
    for (const SegmentInfo& s : stats.segments) {
        REQUIRE(testref::label_connected(labels, s.label, p.connectivity));
        REQUIRE(s.voxel_count >= p.min_size);  // the brain mask is one 6-connected component
    }
}

TEST_CASE("scaling values by c and rho by c preserves the labeling (unnormalized)") {
    const Volume4D v = testhelp::random_volume(5, 7, 6, 4, 2, -3.0, 3.0);
    const BinaryMask mask = testhelp::full_mask(7, 6, 4);
    SupervoxelParams p;
    p.rho = 4.0;
    p.min_size = 3;
    p.normalize_channels = false;
    const LabelVolume base = felzenszwalb_4d(v, p, mask);

    const double c = 4.0;  // power of two keeps the scaling exact in floats
    Volume4D scaled = v;
    for (float& x : scaled.data) x *= static_cast<float>(c);
    SupervoxelParams ps = p;
    ps.rho = p.rho * c;
    const LabelVolume out = felzenszwalb_4d(scaled, ps, mask);
    CHECK(out.labels == base.labels);
}

TEST_CASE("segment_stats on planted boxes") {
    LabelVolume lv;
    lv.width = 6;
    lv.height = 5;
    lv.depth = 4;
    lv.labels.assign(lv.voxel_count(), 0);
    // label 1: box x in [0,2], y in [0,1], z in [0,1]; label 2: single row on z=3
    for (int z = 0; z <= 1; ++z)
        for (int y = 0; y <= 1; ++y)
            for (int x = 0; x <= 2; ++x) lv.at(x, y, z) = 1;
    for (int x = 1; x <= 4; ++x) lv.at(x, 2, 3) = 2;

    const SegmentStats stats = segment_stats(lv);
    REQUIRE(stats.segments.size() == 2);
    CHECK(stats.segments[0].voxel_count == 12);
    CHECK(stats.segments[0].zmin == 0);
    CHECK(stats.segments[0].zmax == 1);
    CHECK(stats.segments[0].xmax == 2);
    CHECK(stats.segments[0].slice_pixels.at(0) == 6);
    CHECK(stats.segments[1].voxel_count == 4);
    CHECK(stats.segments[1].zmin == 3);
    CHECK(stats.segments[1].zmax == 3);
    CHECK(stats.masked_voxels == 16);

    std::int64_t total = 0;
    for (const auto& s : stats.segments) total += s.voxel_count;
    CHECK(total == stats.masked_voxels);
}

TEST_CASE("achievable_dice: perfect segment and empty gt") {
    LabelVolume lv;
    lv.width = 4;
    lv.height = 4;
    lv.depth = 1;
    lv.labels.assign(16, 1);
    for (int i = 8; i < 16; ++i) lv.labels[i] = 2;

    BinaryMask gt = BinaryMask::zeros(4, 4, 1);
    for (int i = 8; i < 16; ++i) gt.data[i] = 1;  // equals label 2 exactly
    const AchievableDice r = achievable_dice(lv, gt);
    CHECK(r.dice == doctest::Approx(1.0));
    CHECK(r.selected == std::vector<std::uint32_t>{2});

    const AchievableDice empty = achievable_dice(lv, BinaryMask::zeros(4, 4, 1));
    CHECK(empty.dice == 0.0);
    CHECK(empty.selected.empty());
}

TEST_CASE("achievable_dice greedy equals exhaustive subset search") {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        Rng rng(seed + 9000);
        LabelVolume lv;
        lv.width = 5;
        lv.height = 5;
        lv.depth = 1;
        const int k = static_cast<int>(rng.uniform_int(1, 12));
        lv.labels.resize(25);
        // random labeling, then repair density
        for (auto& l : lv.labels)
            l = static_cast<std::uint32_t>(rng.uniform_int(1, k));
        std::set<std::uint32_t> used(lv.labels.begin(), lv.labels.end());
        std::map<std::uint32_t, std::uint32_t> remap;
        std::uint32_t next = 0;
        for (std::uint32_t l : used) remap[l] = ++next;
        for (auto& l : lv.labels) l = remap[l];

        const BinaryMask gt = testhelp::random_mask(seed + 41, 5, 5, 1, 0.4);
        const AchievableDice greedy = achievable_dice(lv, gt);
        const double brute = testref::exhaustive_achievable_dice(lv, gt);
        REQUIRE(greedy.dice == doctest::Approx(brute).epsilon(1e-12));
    }
}

TEST_CASE("parameter validation") {
    SupervoxelParams p;
    p.rho = 0.0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = SupervoxelParams{};
    p.connectivity = 18;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = SupervoxelParams{};
    p.min_size = 0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);

    const Volume4D v = testhelp::random_volume(1, 3, 3, 1, 1);
    CHECK_THROWS_AS(felzenszwalb_4d(v, SupervoxelParams{}, BinaryMask::zeros(3, 3, 1)),
                    std::invalid_argument);
    CHECK_THROWS_AS(felzenszwalb_4d(v, SupervoxelParams{}, BinaryMask::zeros(2, 3, 1)),
                    std::invalid_argument);
}

TEST_SUITE_END();
