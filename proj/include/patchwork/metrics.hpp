// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "patchwork/curation.hpp"
#include "patchwork/tensor.hpp"

namespace patchwork::met {

// Images at the metric boundary are [3,H,W] in [0,1].

// PSNR = 10 log10(1 / MSE), capped for identical inputs.
double psnr(const Tensor& a, const Tensor& b, double cap_db = 99.0);

// SSIM with an 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2,
// truncated/renormalized at the borders, averaged over pixels and channels.
double ssim(const Tensor& a, const Tensor& b);

// Fixed multi-layer feature extractor for the perceptual metrics. The
// identity string is echoed in reports so numbers are comparable only
// between runs that used the same extractor.
struct FeatNet {
    std::string id;
    std::function<std::vector<Tensor>(const Tensor& image)> layers;  // each [C,H,W]
};

// Three random strided conv layers with silu, deterministic per seed.
// A learned classifier can be plugged in through the same interface.
FeatNet make_random_featnet(uint64_t seed = 0);

// Per-layer channel-normalized feature L2 distance, spatially then
// layer-averaged.
double lpips(const Tensor& a, const Tensor& b, const FeatNet& fn);

// Mean-pooled deepest-layer features, the row format fid()/ids() consume.
Eigen::VectorXd pooled_features(const Tensor& image, const FeatNet& fn);

// Frechet distance between Gaussians fitted to the rows. Covariances get
// eps*I before the symmetrized square root; eigenvalues of the product more
// negative than -tol are an error, smaller residue is clamped to zero.
double fid(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake, double eps = 1e-6,
           double tol = 1e-3);

struct IdsScores {
    double u_ids = 0.0;
    double p_ids = 0.0;
};

// Soft-margin linear separator (real = +1, fake = -1) fit by deterministic
// full-batch hinge-loss descent from zero after global centering and scalar
// scaling (both rotation-equivariant, so the scores are invariant under a
// common orthonormal rotation of the features).
// U-IDS = mean misclassification rate; scores exactly on the boundary count
// as half an error. P-IDS = Pr[f(fake_i) > f(real_i)], strict inequality, so
// identical paired rows give 0.
IdsScores ids(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake);

struct MetricReport {
    double psnr = 0.0, ssim = 0.0, lpips = 0.0, fid = 0.0, u_ids = 0.0, p_ids = 0.0;
    int n_samples = 0;
    std::string featnet_id;
    bool complete = true;
    std::vector<std::string> missing;  // manifest records without an output
};

// Scores method outputs against the eval-set ground truth. Outputs live in
// outputs_dir under the same file names as the manifest images.
MetricReport evaluate(const std::vector<cur::EvalRecord>& manifest,
                      const std::string& outputs_dir, const FeatNet& fn);

void write_report_json(const std::string& path, const MetricReport& r);
MetricReport read_report_json(const std::string& path);
// single CSV row in column order PSNR, SSIM, LPIPS, FID, U-IDS, P-IDS
void write_report_csv(const std::string& path, const MetricReport& r);

}  // namespace patchwork::met
