// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "patchwork/image.hpp"
#include "patchwork/metrics.hpp"
#include "patchwork/rng.hpp"

using namespace patchwork;
using namespace patchwork::met;

namespace fs = std::filesystem;

namespace {

Tensor unit_image(int h, int w, uint64_t seed, double lo = 0.0, double hi = 1.0) {
    Rng rng(seed);
    Tensor im({3, h, w});
    for (int64_t i = 0; i < im.numel(); ++i) im.at(i) = rng.uniform(lo, hi);
    return im;
}

// direct 2-D window SSIM, written separately from the separable filter in the
// library
double ssim_naive(const Tensor& a, const Tensor& b) {
    const double c1 = 1e-4, c2 = 9e-4, sigma = 1.5;
    int c = a.dim(0), h = a.dim(1), w = a.dim(2);
    double total = 0.0;
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double wsum = 0, ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
                for (int dy = -5; dy <= 5; ++dy)
                    for (int dx = -5; dx <= 5; ++dx) {
                        int yy = y + dy, xx = x + dx;
                        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                        double kv = std::exp(-0.5 * (dy * dy + dx * dx) / (sigma * sigma));
                        double va = a.at((static_cast<int64_t>(ch) * h + yy) * w + xx);
                        double vb = b.at((static_cast<int64_t>(ch) * h + yy) * w + xx);
                        wsum += kv;
                        ma += kv * va;
                        mb += kv * vb;
                        maa += kv * va * va;
                        mbb += kv * vb * vb;
                        mab += kv * va * vb;
                    }
                ma /= wsum;
                mb /= wsum;
                double va = maa / wsum - ma * ma, vb = mbb / wsum - mb * mb;
                double cov = mab / wsum - ma * mb;
                total += (2 * ma * mb + c1) * (2 * cov + c2) /
                         ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
    return total / (static_cast<double>(c) * h * w);
}

Eigen::MatrixXd gaussian_rows(int n, int d, uint64_t seed, double mean = 0.0, double std = 1.0) {
    Rng rng(seed);
    Eigen::MatrixXd X(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) X(i, j) = mean + std * rng.normal();
    return X;
}

}  // namespace

TEST_CASE("psnr: cap, closed-form offset, naive oracle, monotone in mse") {
    Tensor a = unit_image(24, 24, 1);
    CHECK(psnr(a, a) == 99.0);

    Tensor a8 = unit_image(24, 24, 2, 0.0, 0.8);
    Tensor b(a8.dims(), a8.array() + 0.1);  // no clipping, MSE exactly 0.01
    CHECK(psnr(a8, b) == doctest::Approx(20.0).epsilon(1e-12));

    Tensor c = unit_image(24, 24, 3);
    double mse = (a.array() - c.array()).square().mean();
    CHECK(psnr(a, c) == doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-9));

    Tensor small(a8.dims(), a8.array() + 0.05), big(a8.dims(), a8.array() + 0.15);
    CHECK(psnr(a8, small) > psnr(a8, big));

    CHECK_THROWS_AS(psnr(a, unit_image(10, 10, 4)), std::invalid_argument);
}

TEST_CASE("ssim: identity, naive 2-D window oracle, range") {
    Tensor a = unit_image(32, 32, 5);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

    Tensor b = unit_image(32, 32, 6);
    double got = ssim(a, b);
    CHECK(got == doctest::Approx(ssim_naive(a, b)).epsilon(1e-6));
    CHECK(got >= -1.0);
    CHECK(got <= 1.0);

    Rng rng(9);
    Tensor near = a;
    for (int64_t i = 0; i < near.numel(); ++i)
        near.at(i) = std::clamp(near.at(i) + 0.02 * rng.normal(), 0.0, 1.0);
    CHECK(ssim(a, near) == doctest::Approx(ssim_naive(a, near)).epsilon(1e-6));
    CHECK(ssim(a, near) > got);
}

TEST_CASE("lpips: identity zero, symmetric, monotone in noise level") {
    FeatNet fn = make_random_featnet(3);
    Tensor a = unit_image(32, 32, 11, -1.0, 1.0);
    CHECK(lpips(a, a, fn) == doctest::Approx(0.0).epsilon(1e-12));

    Tensor b = unit_image(32, 32, 12, -1.0, 1.0);
    CHECK(lpips(a, b, fn) == doctest::Approx(lpips(b, a, fn)).epsilon(1e-9));

    int ordered = 0;
    for (uint64_t s = 0; s < 20; ++s) {
        Tensor base = unit_image(32, 32, 100 + s, -1.0, 1.0);
        Rng rng(200 + s);
        Tensor light = base, heavy = base;
        for (int64_t i = 0; i < base.numel(); ++i) {
            double n = rng.normal();
            light.at(i) = std::clamp(base.at(i) + 0.05 * n, -1.0, 1.0);
            heavy.at(i) = std::clamp(base.at(i) + 0.60 * n, -1.0, 1.0);
        }
        if (lpips(base, heavy, fn) > lpips(base, light, fn)) ++ordered;
    }
    CHECK(ordered == 20);
}

TEST_CASE("fid: identical sets, symmetry, sampled 1-D closed form") {
    Eigen::MatrixXd X = gaussian_rows(400, 8, 21);
    CHECK(fid(X, X) <= 1e-6);

    Eigen::MatrixXd Y = gaussian_rows(400, 8, 22, 0.3, 1.2);
    CHECK(fid(X, Y) == doctest::Approx(fid(Y, X)).epsilon(1e-9));
    CHECK(fid(X, Y) > 0.0);

    // N(0,1) vs N(1,1): Frechet distance (mu1-mu2)^2 + (s1-s2)^2 = 1
    Eigen::MatrixXd r = gaussian_rows(100000, 1, 23, 0.0, 1.0);
    Eigen::MatrixXd f = gaussian_rows(100000, 1, 24, 1.0, 1.0);
    CHECK(fid(r, f) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("fid: d = 2 exactly-diagonal covariance matches the per-dimension closed form") {
    // points chosen so the sample cross-covariance is exactly zero
    auto cross = [](double s0, double s1) {
        Eigen::MatrixXd X(4, 2);
        X << s0, 0, -s0, 0, 0, s1, 0, -s1;
        return X;
    };
    Eigen::MatrixXd R = cross(1.0, 2.0), F = cross(1.5, 0.5);
    F.rowwise() += Eigen::RowVector2d(0.25, -0.75);

    const double eps = 1e-6;
    double oracle = 0.0;
    for (int dim = 0; dim < 2; ++dim) {
        double mr = R.col(dim).mean(), mf = F.col(dim).mean();
        double vr = (R.col(dim).array() - mr).square().sum() / 3.0 + eps;
        double vf = (F.col(dim).array() - mf).square().sum() / 3.0 + eps;
        oracle += (mr - mf) * (mr - mf) +
                  (std::sqrt(vr) - std::sqrt(vf)) * (std::sqrt(vr) - std::sqrt(vf));
    }
    CHECK(fid(R, F) == doctest::Approx(oracle).epsilon(1e-6));
}

TEST_CASE("ids: separable clusters give zero scores") {
    Eigen::MatrixXd R = gaussian_rows(200, 4, 31, 5.0, 0.5);
    Eigen::MatrixXd F = gaussian_rows(200, 4, 32, -5.0, 0.5);
    IdsScores s = ids(R, F);
    CHECK(s.u_ids == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(s.p_ids == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("ids: identical paired rows and identical distributions") {
    // literally identical rows: gradients cancel, the separator stays at the
    // boundary everywhere; ties split as half errors and strict ">" kills P-IDS
    Eigen::MatrixXd X = gaussian_rows(100, 6, 41);
    IdsScores same = ids(X, X);
    CHECK(same.p_ids == 0.0);
    CHECK(same.u_ids == doctest::Approx(0.5).epsilon(1e-12));

    // independent draws from one distribution: nothing to separate
    Eigen::MatrixXd R = gaussian_rows(2000, 6, 42);
    Eigen::MatrixXd F = gaussian_rows(2000, 6, 43);
    IdsScores s = ids(R, F);
    CHECK(s.u_ids == doctest::Approx(0.5).epsilon(0.1));
    CHECK(s.u_ids <= 0.55);
    CHECK(s.p_ids <= 0.55);

    Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(10, 3, 2.0);
    CHECK_THROWS_AS(ids(flat, flat), std::runtime_error);
}

TEST_CASE("ids is invariant under a common orthonormal rotation") {
    Eigen::MatrixXd R = gaussian_rows(300, 5, 51, 0.5, 1.0);
    Eigen::MatrixXd F = gaussian_rows(300, 5, 52, -0.2, 1.3);
    Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(gaussian_rows(5, 5, 53))
                            .householderQ();
    IdsScores base = ids(R, F);
    IdsScores rot = ids(R * Q, F * Q);
    CHECK(rot.u_ids == doctest::Approx(base.u_ids).epsilon(1e-6));
    CHECK(rot.p_ids == doctest::Approx(base.p_ids).epsilon(1e-6));
}

TEST_CASE("evaluate: perfect outputs, missing outputs, report round trip") {
    fs::path gt_dir = fs::temp_directory_path() / "pw_metrics_gt";
    fs::path out_dir = fs::temp_directory_path() / "pw_metrics_out";
    fs::remove_all(gt_dir);
    fs::remove_all(out_dir);
    fs::create_directories(gt_dir);
    fs::create_directories(out_dir);

    std::vector<cur::EvalRecord> manifest;
    for (int i = 0; i < 6; ++i) {
        Tensor im = unit_image(32, 32, 60 + static_cast<uint64_t>(i), -1.0, 1.0);
        cur::EvalRecord rec;
        rec.image_path = (gt_dir / ("im" + std::to_string(i) + ".png")).string();
        rec.source = "synthetic";
        img::write_png(rec.image_path, im);
        fs::copy_file(rec.image_path, out_dir / ("im" + std::to_string(i) + ".png"));
        manifest.push_back(rec);
    }

    FeatNet fn = make_random_featnet(7);
    MetricReport r = evaluate(manifest, out_dir.string(), fn);
    CHECK(r.complete);
    CHECK(r.n_samples == 6);
    CHECK(r.psnr == 99.0);
    CHECK(r.ssim == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.lpips == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.fid <= 1e-6);
    CHECK(r.p_ids == 0.0);
    CHECK(r.u_ids == doctest::Approx(0.5).epsilon(1e-12));

    // deterministic
    MetricReport again = evaluate(manifest, out_dir.string(), fn);
    CHECK(again.psnr == r.psnr);
    CHECK(again.fid == r.fid);

    // schema round trip
    fs::path jpath = out_dir / "report.json";
    write_report_json(jpath.string(), r);
    MetricReport back = read_report_json(jpath.string());
    CHECK(back.psnr == r.psnr);
    CHECK(back.ssim == r.ssim);
    CHECK(back.lpips == r.lpips);
    CHECK(back.fid == r.fid);
    CHECK(back.u_ids == r.u_ids);
    CHECK(back.p_ids == r.p_ids);
    CHECK(back.n_samples == r.n_samples);
    CHECK(back.featnet_id == r.featnet_id);
    write_report_csv((out_dir / "report.csv").string(), r);

    // drop one output: flagged incomplete, named
    fs::remove(out_dir / "im3.png");
    MetricReport part = evaluate(manifest, out_dir.string(), fn);
    CHECK_FALSE(part.complete);
    REQUIRE(part.missing.size() == 1);
    CHECK(part.missing[0].find("im3.png") != std::string::npos);
    CHECK(part.n_samples == 5);

    fs::remove_all(gt_dir);
    fs::remove_all(out_dir);
}
