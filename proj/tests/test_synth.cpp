#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "metadet/synth.hpp"

using namespace metadet;

namespace {

SynthConfig base_cfg() {
    SynthConfig cfg;
    cfg.canvas_size = 96;
    cfg.sequence_length = 6;
    cfg.seed = 1234;
    return cfg;
}

// 4-connected component count over a binary mask.
int count_components(const Tensor& mask) {
    int64_t h = mask.shape()[1], w = mask.shape()[2];
    std::vector<int> seen(static_cast<size_t>(h * w), 0);
    int count = 0;
    for (int64_t start = 0; start < h * w; ++start) {
        if (mask[start] < 0.5 || seen[static_cast<size_t>(start)]) continue;
        ++count;
        std::vector<int64_t> stack{start};
        seen[static_cast<size_t>(start)] = 1;
        while (!stack.empty()) {
            int64_t p = stack.back();
            stack.pop_back();
            int64_t y = p / w, x = p % w;
            const int64_t dy[] = {1, -1, 0, 0}, dx[] = {0, 0, 1, -1};
            for (int k = 0; k < 4; ++k) {
                int64_t ny = y + dy[k], nx = x + dx[k];
                if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                int64_t q = ny * w + nx;
                if (mask[q] >= 0.5 && !seen[static_cast<size_t>(q)]) {
                    seen[static_cast<size_t>(q)] = 1;
                    stack.push_back(q);
                }
            }
        }
    }
    return count;
}

}  // namespace

TEST_CASE("static scene: all sigmas zero gives identical frames") {
    SynthConfig cfg = base_cfg();
    cfg.motion_sigma = 0;
    cfg.scale_sigma = 0;
    cfg.appearance_sigma = 0;
    Sequence seq = generate_sequence(cfg, 3);
    REQUIRE(seq.frames.size() == 6);
    for (size_t f = 1; f < seq.frames.size(); ++f) {
        CHECK(seq.frames[f].data() == seq.frames[0].data());
        CHECK(seq.gt[f].cx == seq.gt[0].cx);
        CHECK(seq.gt[f].w == seq.gt[0].w);
    }
}

TEST_CASE("determinism: same (seed, id) twice is bit-identical") {
    SynthConfig cfg = base_cfg();
    cfg.motion_sigma = 3;
    cfg.appearance_sigma = 0.01;
    cfg.distractor_count = 1;
    Sequence a = generate_sequence(cfg, 7);
    Sequence b = generate_sequence(cfg, 7);
    for (size_t f = 0; f < a.frames.size(); ++f) CHECK(a.frames[f].data() == b.frames[f].data());
    Sequence c = generate_sequence(cfg, 8);
    CHECK(a.frames[0].data() != c.frames[0].data());
}

TEST_CASE("distractor count verified by connected components on the mask") {
    SynthConfig cfg = base_cfg();
    cfg.motion_sigma = 0;
    cfg.scale_sigma = 0;
    cfg.distractor_count = 2;
    cfg.min_object_size = 12;
    cfg.max_object_size = 20;
    for (int64_t id : {1, 2, 3}) {
        Tensor mask = render_object_mask(cfg, id, 0);
        CHECK(count_components(mask) == 3);
    }
}

TEST_CASE("gt boxes stay inside the canvas under motion") {
    SynthConfig cfg = base_cfg();
    cfg.motion_sigma = 12;
    cfg.scale_sigma = 0.05;
    cfg.sequence_length = 40;
    for (int64_t id = 0; id < 4; ++id) {
        Sequence seq = generate_sequence(cfg, id);
        for (const auto& b : seq.gt) {
            CHECK(b.valid());
            CHECK(b.x1() >= -1e-9);
            CHECK(b.y1() >= -1e-9);
            CHECK(b.x2() <= cfg.canvas_size + 1e-9);
            CHECK(b.y2() <= cfg.canvas_size + 1e-9);
        }
        for (const auto& f : seq.frames)
            for (int64_t i = 0; i < f.numel(); ++i) {
                CHECK(f[i] >= 0.0);
                CHECK(f[i] <= 1.0);
            }
    }
}

TEST_CASE("crop side follows the context rule") {
    // w=h=32 -> side 2*sqrt(48*48)=96, so scale = out/96
    SynthConfig cfg = base_cfg();
    Sequence seq = generate_sequence(cfg, 1);
    BoundingBox box{48, 48, 32, 32};
    auto [patch, t] = crop_search_region(seq.frames[0], box, 64);
    CHECK(patch.shape() == std::vector<int64_t>{3, 64, 64});
    CHECK(t.scale == doctest::Approx(64.0 / 96.0).epsilon(1e-12));

    // the box maps to the patch center
    BoundingBox in_patch = t.apply(box);
    CHECK(in_patch.cx == doctest::Approx(32.0));
    CHECK(in_patch.cy == doctest::Approx(32.0));
}

TEST_CASE("patch transform is exactly affine and invertible") {
    SynthConfig cfg = base_cfg();
    Sequence seq = generate_sequence(cfg, 2);
    Rng rng(55);
    BoundingBox box{40, 50, 24, 30};
    auto [patch, t] = crop_search_region(seq.frames[0], box, 64);
    (void)patch;
    for (int trial = 0; trial < 1000; ++trial) {
        BoundingBox b{rng.uniform(0, 96), rng.uniform(0, 96), rng.uniform(1, 50),
                      rng.uniform(1, 50)};
        BoundingBox back = t.invert(t.apply(b));
        CHECK(std::fabs(back.cx - b.cx) < 1e-6);
        CHECK(std::fabs(back.cy - b.cy) < 1e-6);
        CHECK(std::fabs(back.w - b.w) < 1e-6);
        CHECK(std::fabs(back.h - b.h) < 1e-6);
    }
}

TEST_CASE("support set: three zoom levels") {
    SynthConfig cfg = base_cfg();
    Sequence seq = generate_sequence(cfg, 4);
    BoundingBox box = seq.gt[0];
    auto support = make_support_set(seq.frames[0], box, 64);
    REQUIRE(support.size() == 3);

    auto [plain, t] = crop_search_region(seq.frames[0], box, 64);
    CHECK(support[1].image.data() == plain.data());
    CHECK(support[1].box.w == doctest::Approx(t.apply(box).w));

    // zoomed-in crop (smaller side) makes the box larger by factor 1.08
    CHECK(support[0].box.w / support[1].box.w == doctest::Approx(1.08).epsilon(1e-3));
    CHECK(support[2].box.w / support[1].box.w == doctest::Approx(1.0 / 1.08).epsilon(1e-3));
}

TEST_CASE("sample_task shape and determinism") {
    SynthConfig cfg = base_cfg();
    std::vector<Sequence> pool = {generate_sequence(cfg, 0), generate_sequence(cfg, 1)};
    Rng rng(9);
    Task t = sample_task(pool, cfg, 64, rng);
    CHECK(t.support.size() == 3);
    CHECK(t.target.size() == 1);
    CHECK(t.target[0].image.shape() == std::vector<int64_t>{3, 64, 64});

    Rng r1(77), r2(77);
    Task a = sample_task(pool, cfg, 64, r1);
    Task b = sample_task(pool, cfg, 64, r2);
    CHECK(a.support[0].image.data() == b.support[0].image.data());
    CHECK(a.target[0].image.data() == b.target[0].image.data());
    CHECK(a.target[0].box.cx == b.target[0].box.cx);

    std::vector<Sequence> tiny = {pool[0]};
    Rng r3(1);
    CHECK_THROWS_AS(sample_task(tiny, cfg, 64, r3), numeric_error);
}

TEST_CASE("same-sequence probability is 0.8 within tolerance") {
    // Monte-Carlo over the raw rng decision replicated from sample_task's rule
    SynthConfig cfg = base_cfg();
    cfg.sequence_length = 3;
    cfg.canvas_size = 48;
    cfg.min_object_size = 12;
    cfg.max_object_size = 20;
    std::vector<Sequence> pool = {generate_sequence(cfg, 0), generate_sequence(cfg, 1)};
    Rng rng(2025);
    int same = 0, trials = 10000;
    for (int i = 0; i < trials; ++i) {
        Task t = sample_task(pool, cfg, 32, rng);
        // same-sequence targets are crops of pool frames; cross-sequence
        // targets are re-rendered, so detect via exact frame-crop match
        bool matched = false;
        for (const auto& seq : pool)
            for (size_t f = 0; f < seq.frames.size() && !matched; ++f) {
                auto [patch, tr] = crop_search_region(seq.frames[f], seq.gt[f], 32);
                matched = patch.data() == t.target[0].image.data();
            }
        same += matched ? 1 : 0;
    }
    double frac = static_cast<double>(same) / trials;
    CHECK(frac > 0.78);
    CHECK(frac < 0.82);
}

TEST_CASE("sequence export/import round trip") {
    SynthConfig cfg = base_cfg();
    cfg.sequence_length = 3;
    Sequence seq = generate_sequence(cfg, 11);
    std::string dir = "synth_export_test";
    export_sequence(dir, seq);
    Sequence back = import_sequence(dir);
    CHECK(back.instance_id == seq.instance_id);
    REQUIRE(back.frames.size() == seq.frames.size());
    for (size_t f = 0; f < seq.frames.size(); ++f) {
        CHECK(back.frames[f].data() == seq.frames[f].data());
        CHECK(back.gt[f].cx == seq.gt[f].cx);
        CHECK(back.gt[f].h == seq.gt[f].h);
    }
    std::filesystem::remove_all(dir);
}
