// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "patchwork/maskgen.hpp"

using namespace patchwork;
using namespace patchwork::maskgen;

TEST_CASE("object mask is connected and deterministic") {
    Rng rng(42);
    Tensor m = sample_object_mask(rng, 256, 256);
    CHECK(mask_is_connected(m));
    CHECK(mask_ratio(m) > 0.0);

    Rng r1(7), r2(7);
    Tensor a = sample_object_mask(r1, 256, 256);
    Tensor b = sample_object_mask(r2, 256, 256);
    CHECK((a.array() - b.array()).abs().maxCoeff() == 0.0);
}

TEST_CASE("object mask rejects tiny dimensions") {
    Rng rng(1);
    CHECK_THROWS_AS(sample_object_mask(rng, 16, 256), MaskGenError);
    CHECK_THROWS_AS(sample_object_mask(rng, 256, 31), MaskGenError);
}

TEST_CASE("object mask ratio support stays within (0, 0.9)") {
    Rng rng(1234);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 2000; ++i) {
        double r = mask_ratio(sample_object_mask(rng, 256, 256));
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    CHECK(lo > 0.0);
    CHECK(hi < 0.9);
}

TEST_CASE("rectangle primitives: full frame and its complement") {
    Rng r1(3);
    Tensor all_one = sample_rect_mask(r1, 64, 64, 1.0 - 1e-12, 1.0);
    CHECK(all_one.array().minCoeff() == 1.0);

    Rng r2(3);
    Tensor all_zero = sample_complement_rect_mask(r2, 64, 64, 0.0, 1e-12);
    CHECK(all_zero.array().maxCoeff() == 0.0);
}

TEST_CASE("lama mask logs stroke count and widths within configured ranges") {
    BrushParams bp;
    Rng rng(5);
    MaskInfo log;
    Tensor m = sample_lama_mask(rng, 256, 256, bp, &log);
    CHECK(log.stroke_count >= bp.lama_strokes_min);
    CHECK(log.stroke_count <= bp.lama_strokes_max);
    for (double wpx : log.stroke_widths) {
        CHECK(wpx >= bp.lama_width_min * 256 - 1e-9);
        CHECK(wpx <= bp.lama_width_max * 256 + 1e-9);
    }
    CHECK(mask_ratio(m) > 0.0);
}

TEST_CASE("training mixture frequencies and ratio bounds") {
    MaskMixtureConfig cfg;
    Rng rng(777);
    std::map<MaskFamily, int> counts;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        MaskInfo info;
        Tensor m = sample_training_mask(cfg, rng, 64, 64, &info);
        ++counts[info.family];
        double r = mask_ratio(m);
        REQUIRE(r >= cfg.ratio_min);
        REQUIRE(r <= cfg.ratio_max);
    }
    auto frac = [&](MaskFamily f) { return counts[f] / static_cast<double>(n); };
    CHECK(frac(MaskFamily::object) == doctest::Approx(0.50).epsilon(0.04));
    CHECK(std::abs(frac(MaskFamily::object) - 0.50) < 0.02);
    CHECK(std::abs(frac(MaskFamily::comod) - 0.20) < 0.02);
    CHECK(std::abs(frac(MaskFamily::lama) - 0.20) < 0.02);
    CHECK(std::abs(frac(MaskFamily::rect) - 0.05) < 0.02);
    CHECK(std::abs(frac(MaskFamily::rect_complement) - 0.05) < 0.02);
}

TEST_CASE("degenerate mixture: weight 1 on rect yields single rectangles") {
    MaskMixtureConfig cfg;
    cfg.w_object = cfg.w_comod = cfg.w_lama = cfg.w_rect_complement = 0.0;
    cfg.w_rect = 1.0;
    Rng rng(11);
    for (int i = 0; i < 20; ++i) {
        MaskInfo info;
        Tensor m = sample_training_mask(cfg, rng, 64, 64, &info);
        CHECK(info.family == MaskFamily::rect);
        // masked pixels exactly fill their bounding box
        int y0 = 64, y1 = -1, x0 = 64, x1 = -1, cnt = 0;
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x)
                if (m.at(static_cast<int64_t>(y) * 64 + x) > 0.5) {
                    ++cnt;
                    y0 = std::min(y0, y);
                    y1 = std::max(y1, y);
                    x0 = std::min(x0, x);
                    x1 = std::max(x1, x);
                }
        CHECK(cnt == (y1 - y0 + 1) * (x1 - x0 + 1));
    }
}

TEST_CASE("eval mixture: no rectangle families, ratios in [0.2, 0.8]") {
    Rng rng(99);
    for (int i = 0; i < 2000; ++i) {
        MaskInfo info;
        Tensor m = sample_eval_mask(rng, 64, 64, &info);
        REQUIRE(info.family != MaskFamily::rect);
        REQUIRE(info.family != MaskFamily::rect_complement);
        double r = mask_ratio(m);
        REQUIRE(r >= 0.2);
        REQUIRE(r <= 0.8);
    }
}

TEST_CASE("training mask determinism under identical seeds") {
    MaskMixtureConfig cfg;
    Rng r1(31337), r2(31337);
    for (int i = 0; i < 5; ++i) {
        Tensor a = sample_training_mask(cfg, r1, 64, 64);
        Tensor b = sample_training_mask(cfg, r2, 64, 64);
        CHECK((a.array() - b.array()).abs().maxCoeff() == 0.0);
    }
}

TEST_CASE("to_patch_mask basics") {
    Tensor zero({64, 64});
    PatchMask pm = to_patch_mask(zero, 8);
    CHECK(pm.count() == 0);
    CHECK(pm.size() == 64);

    Tensor one_px({64, 64});
    one_px.at(static_cast<int64_t>(20) * 64 + 37) = 1.0;
    pm = to_patch_mask(one_px, 8);
    CHECK(pm.count() == 1);
    CHECK(pm.flags[(20 / 8) * 8 + 37 / 8] == 1);

    CHECK_THROWS_AS(to_patch_mask(zero, 7), MaskGenError);
}

TEST_CASE("to_patch_mask checkerboard matches enumeration oracle") {
    const int p = 8, n = 64;
    Tensor m({n, n});
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            if (((y / p) + (x / p)) % 2 == 0) m.at(static_cast<int64_t>(y) * n + x) = 1.0;
    PatchMask pm = to_patch_mask(m, p);
    for (int gy = 0; gy < n / p; ++gy)
        for (int gx = 0; gx < n / p; ++gx) {
            bool expect = false;
            for (int y = gy * p; y < (gy + 1) * p && !expect; ++y)
                for (int x = gx * p; x < (gx + 1) * p; ++x)
                    if (m.at(static_cast<int64_t>(y) * n + x) > 0.5) {
                        expect = true;
                        break;
                    }
            CHECK(pm.flags[static_cast<size_t>(gy) * (n / p) + gx] == (expect ? 1 : 0));
        }
}

TEST_CASE("unmasked patch implies every covered pixel unmasked") {
    Rng rng(17);
    for (int i = 0; i < 10; ++i) {
        Tensor m = sample_lama_mask(rng, 64, 64);
        PatchMask pm = to_patch_mask(m, 8);
        for (int gy = 0; gy < 8; ++gy)
            for (int gx = 0; gx < 8; ++gx) {
                if (pm.flags[static_cast<size_t>(gy) * 8 + gx]) continue;
                for (int y = gy * 8; y < (gy + 1) * 8; ++y)
                    for (int x = gx * 8; x < (gx + 1) * 8; ++x)
                        REQUIRE(m.at(static_cast<int64_t>(y) * 64 + x) == 0.0);
            }
    }
}

TEST_CASE("enlarge_to_ratio exact count and monotonicity") {
    PatchMask pm;
    pm.grid_h = pm.grid_w = 16;  // 256 patches
    pm.flags.assign(256, 0);
    for (int i = 0; i < 128; ++i) pm.flags[i] = 1;
    Rng rng(5);
    PatchMask out = enlarge_to_ratio(pm, 0.75, rng);
    CHECK(out.count() == 192);
    for (int i = 0; i < 128; ++i) CHECK(out.flags[i] == 1);

    PatchMask big = pm;
    for (int i = 0; i < 200; ++i) big.flags[i] = 1;
    PatchMask same = enlarge_to_ratio(big, 0.75, rng);
    CHECK(same.count() == 200);
}

TEST_CASE("enlarge_to_ratio adds patches uniformly (chi-square)") {
    PatchMask pm;
    pm.grid_h = pm.grid_w = 8;  // 64 patches, first 16 pre-flagged
    pm.flags.assign(64, 0);
    for (int i = 0; i < 16; ++i) pm.flags[i] = 1;
    Rng rng(2024);
    std::vector<int> hits(64, 0);
    const int trials = 1000;
    for (int t = 0; t < trials; ++t) {
        PatchMask out = enlarge_to_ratio(pm, 0.5, rng);  // adds 16 of 48 candidates
        for (int i = 16; i < 64; ++i) hits[i] += out.flags[i];
    }
    double expected = trials * 16.0 / 48.0;
    double chi2 = 0.0;
    for (int i = 16; i < 64; ++i) {
        double d = hits[i] - expected;
        chi2 += d * d / expected;
    }
    // chi-square critical value at p = 0.01 with 47 dof
    CHECK(chi2 < 72.443);
}

TEST_CASE("subtract_foreground") {
    Rng rng(8);
    Tensor m = sample_comod_mask(rng, 64, 64);
    Tensor all_fg = Tensor::full({64, 64}, 1.0);
    CHECK(subtract_foreground(m, all_fg).array().maxCoeff() == 0.0);
    Tensor none({64, 64});
    CHECK((subtract_foreground(m, none).array() - m.array()).abs().maxCoeff() == 0.0);

    // elementwise AND-NOT oracle on a random pair
    Tensor seg({64, 64});
    for (int64_t i = 0; i < seg.numel(); ++i) seg.at(i) = rng.bernoulli(0.3) ? 1.0 : 0.0;
    Tensor out = subtract_foreground(m, seg);
    for (int64_t i = 0; i < out.numel(); ++i) {
        double expect = (m.at(i) > 0.5 && !(seg.at(i) > 0.5)) ? 1.0 : 0.0;
        REQUIRE(out.at(i) == expect);
    }
    Tensor wrong({32, 32});
    CHECK_THROWS_AS(subtract_foreground(m, wrong), MaskGenError);
}

TEST_CASE("mixture config validation") {
    MaskMixtureConfig bad;
    bad.w_object = 0.6;  // no longer sums to 1
    Rng rng(1);
    CHECK_THROWS_AS(sample_training_mask(bad, rng, 64, 64), MaskGenError);

    MaskMixtureConfig flipped;
    flipped.ratio_min = 0.8;
    flipped.ratio_max = 0.2;
    CHECK_THROWS_AS(flipped.validate(), MaskGenError);
}

TEST_CASE("impossible ratio bounds raise a generation error naming the family") {
    MaskMixtureConfig cfg;
    cfg.w_object = 0.0;
    cfg.w_comod = 0.0;
    cfg.w_lama = 1.0;
    cfg.w_rect = 0.0;
    cfg.w_rect_complement = 0.0;
    cfg.ratio_min = 0.98;  // a lama stroke never covers 98% of the frame
    cfg.ratio_max = 0.99;
    Rng rng(6);
    CHECK_THROWS_WITH_AS(sample_training_mask(cfg, rng, 64, 64),
                         doctest::Contains("lama"), MaskGenError);
}
