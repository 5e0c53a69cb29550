// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#include "patchwork/metrics.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <memory>

#include "patchwork/image.hpp"
#include "patchwork/nn.hpp"
#include "patchwork/rng.hpp"

namespace patchwork::met {

namespace fs = std::filesystem;

namespace {

void check_same_image(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 3 || !a.same_shape(b))
        throw std::invalid_argument("metric: shape mismatch " + shape_str(a.dims()) + " vs " +
                                    shape_str(b.dims()));
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b, double cap_db) {
    check_same_image(a, b);
    double mse = (a.array() - b.array()).square().mean();
    if (mse <= 0.0) return cap_db;
    return std::min(cap_db, 10.0 * std::log10(1.0 / mse));
}

namespace {

// separable truncated Gaussian filter over [C,H,W], renormalized per pixel so
// border windows still average to 1
Tensor gauss_filter(const Tensor& x, const std::vector<double>& k) {
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    int r = static_cast<int>(k.size()) / 2;
    Tensor tmp({c, h, w}), out({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x0 = 0; x0 < w; ++x0) {
                double s = 0.0, wsum = 0.0;
                for (int d = -r; d <= r; ++d) {
                    int xx = x0 + d;
                    if (xx < 0 || xx >= w) continue;
                    double kv = k[static_cast<size_t>(d + r)];
                    s += kv * x.at((static_cast<int64_t>(ch) * h + y) * w + xx);
                    wsum += kv;
                }
                tmp.at((static_cast<int64_t>(ch) * h + y) * w + x0) = s / wsum;
            }
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x0 = 0; x0 < w; ++x0) {
                double s = 0.0, wsum = 0.0;
                for (int d = -r; d <= r; ++d) {
                    int yy = y + d;
                    if (yy < 0 || yy >= h) continue;
                    double kv = k[static_cast<size_t>(d + r)];
                    s += kv * tmp.at((static_cast<int64_t>(ch) * h + yy) * w + x0);
                    wsum += kv;
                }
                out.at((static_cast<int64_t>(ch) * h + y) * w + x0) = s / wsum;
            }
    return out;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
    check_same_image(a, b);
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03, sigma = 1.5;
    std::vector<double> k(11);
    for (int i = 0; i < 11; ++i) k[static_cast<size_t>(i)] = std::exp(-0.5 * (i - 5) * (i - 5) / (sigma * sigma));

    Tensor mu_a = gauss_filter(a, k), mu_b = gauss_filter(b, k);
    Tensor aa(a.dims(), a.array() * a.array());
    Tensor bb(a.dims(), b.array() * b.array());
    Tensor ab(a.dims(), a.array() * b.array());
    Tensor e_aa = gauss_filter(aa, k), e_bb = gauss_filter(bb, k), e_ab = gauss_filter(ab, k);

    double total = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        double ma = mu_a.at(i), mb = mu_b.at(i);
        double va = e_aa.at(i) - ma * ma;
        double vb = e_bb.at(i) - mb * mb;
        double cov = e_ab.at(i) - ma * mb;
        total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) /
                 ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return total / static_cast<double>(a.numel());
}

FeatNet make_random_featnet(uint64_t seed) {
    Rng rng(Rng::derive(seed, 0xfea7ULL));
    auto c1 = std::make_shared<nn::Conv2d>(3, 8, 3, 1, 1, rng);
    auto c2 = std::make_shared<nn::Conv2d>(8, 16, 3, 2, 1, rng);
    auto c3 = std::make_shared<nn::Conv2d>(16, 32, 3, 2, 1, rng);
    FeatNet fn;
    fn.id = "random-conv-v1/seed=" + std::to_string(seed);
    fn.layers = [c1, c2, c3](const Tensor& image) -> std::vector<Tensor> {
        if (image.ndim() != 3 || image.dim(0) != 3)
            throw std::invalid_argument("featnet: expected [3,H,W], got " + shape_str(image.dims()));
        ag::Var x = ag::constant(image.reshaped({1, 3, image.dim(1), image.dim(2)}));
        std::vector<Tensor> out;
        for (const auto& conv : {c1, c2, c3}) {
            x = ag::silu(conv->forward(x));
            const Tensor& v = x->val;
            out.push_back(v.reshaped({v.dim(1), v.dim(2), v.dim(3)}));
        }
        return out;
    };
    return fn;
}

double lpips(const Tensor& a, const Tensor& b, const FeatNet& fn) {
    check_same_image(a, b);
    std::vector<Tensor> fa = fn.layers(a), fb = fn.layers(b);
    if (fa.size() != fb.size() || fa.empty()) throw std::runtime_error("lpips: bad featnet output");
    double total = 0.0;
    for (size_t l = 0; l < fa.size(); ++l) {
        int c = fa[l].dim(0), hw = fa[l].dim(1) * fa[l].dim(2);
        double layer = 0.0;
        for (int p = 0; p < hw; ++p) {
            // unit-normalize the channel vector at each location
            double na = 0.0, nb = 0.0;
            for (int ch = 0; ch < c; ++ch) {
                double va = fa[l].at(static_cast<int64_t>(ch) * hw + p);
                double vb = fb[l].at(static_cast<int64_t>(ch) * hw + p);
                na += va * va;
                nb += vb * vb;
            }
            na = std::sqrt(na) + 1e-10;
            nb = std::sqrt(nb) + 1e-10;
            double d = 0.0;
            for (int ch = 0; ch < c; ++ch) {
                double va = fa[l].at(static_cast<int64_t>(ch) * hw + p) / na;
                double vb = fb[l].at(static_cast<int64_t>(ch) * hw + p) / nb;
                d += (va - vb) * (va - vb);
            }
            layer += d;
        }
        total += layer / hw;
    }
    return total / static_cast<double>(fa.size());
}

Eigen::VectorXd pooled_features(const Tensor& image, const FeatNet& fn) {
    std::vector<Tensor> feats = fn.layers(image);
    const Tensor& deep = feats.back();
    int c = deep.dim(0), hw = deep.dim(1) * deep.dim(2);
    Eigen::VectorXd out(c);
    for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (int p = 0; p < hw; ++p) s += deep.at(static_cast<int64_t>(ch) * hw + p);
        out(ch) = s / hw;
    }
    return out;
}

namespace {

Eigen::MatrixXd covariance(const Eigen::MatrixXd& X, const Eigen::RowVectorXd& mu) {
    Eigen::MatrixXd C = X.rowwise() - mu;
    double denom = X.rows() > 1 ? static_cast<double>(X.rows() - 1) : 1.0;
    return C.transpose() * C / denom;
}

// PSD square root via eigendecomposition; slightly negative eigenvalues up to
// tol are numerical residue and clamp to zero
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& S, double tol, const char* what) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    if (es.info() != Eigen::Success) throw std::runtime_error(std::string(what) + ": eigensolver failed");
    Eigen::VectorXd lam = es.eigenvalues();
    for (int i = 0; i < lam.size(); ++i) {
        if (lam(i) < -tol)
            throw std::runtime_error(std::string(what) + ": matrix not PSD, eigenvalue " +
                                     std::to_string(lam(i)));
        lam(i) = std::sqrt(std::max(lam(i), 0.0));
    }
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double fid(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake, double eps, double tol) {
    if (real.cols() != fake.cols() || real.rows() < 2 || fake.rows() < 2)
        throw std::invalid_argument("fid: need >= 2 rows per set and equal dims");
    int d = static_cast<int>(real.cols());
    Eigen::RowVectorXd mu_r = real.colwise().mean(), mu_f = fake.colwise().mean();
    Eigen::MatrixXd id = Eigen::MatrixXd::Identity(d, d);
    Eigen::MatrixXd sr = covariance(real, mu_r) + eps * id;
    Eigen::MatrixXd sf = covariance(fake, mu_f) + eps * id;

    // (Sr Sf)^{1/2} has the trace of the symmetric Sr^{1/2} Sf Sr^{1/2} root
    Eigen::MatrixXd sr_half = psd_sqrt(sr, tol, "fid: real covariance");
    Eigen::MatrixXd inner = sr_half * sf * sr_half;
    inner = 0.5 * (inner + inner.transpose());  // drop asymmetry residue
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner);
    if (es.info() != Eigen::Success) throw std::runtime_error("fid: eigensolver failed");
    double tr_sqrt = 0.0;
    for (int i = 0; i < d; ++i) {
        double lam = es.eigenvalues()(i);
        if (lam < -tol)
            throw std::runtime_error("fid: covariance product not PSD, eigenvalue " +
                                     std::to_string(lam));
        tr_sqrt += std::sqrt(std::max(lam, 0.0));
    }
    double val = (mu_r - mu_f).squaredNorm() + sr.trace() + sf.trace() - 2.0 * tr_sqrt;
    return std::max(val, 0.0);
}

IdsScores ids(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake) {
    if (real.rows() != fake.rows() || real.cols() != fake.cols())
        throw std::invalid_argument("ids: feature sets must have matching shapes");
    int n = static_cast<int>(real.rows()), d = static_cast<int>(real.cols());
    if (n < 2) throw std::invalid_argument("ids: need at least 2 samples per set");

    // rotation-equivariant normalization: subtract the pooled mean, divide by
    // the pooled RMS radius
    Eigen::RowVectorXd mu = (real.colwise().sum() + fake.colwise().sum()) / (2.0 * n);
    Eigen::MatrixXd R = real.rowwise() - mu, F = fake.rowwise() - mu;
    double scale = std::sqrt((R.squaredNorm() + F.squaredNorm()) / (2.0 * n));
    if (scale < 1e-12) throw std::runtime_error("ids: degenerate features with zero variance");
    R /= scale;
    F /= scale;

    // full-batch subgradient descent on lambda/2 |w|^2 + mean hinge loss,
    // deterministic from zero
    const double lambda = 1e-3, lr = 0.1;
    const int iters = 500;
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
    double b = 0.0;
    for (int it = 0; it < iters; ++it) {
        Eigen::VectorXd gw = lambda * w;
        double gb = 0.0;
        for (int i = 0; i < n; ++i) {
            if (1.0 - (R.row(i) * w + b) > 0.0) {  // real label +1
                gw -= R.row(i).transpose() / (2.0 * n);
                gb -= 1.0 / (2.0 * n);
            }
            if (1.0 + (F.row(i) * w + b) > 0.0) {  // fake label -1
                gw += F.row(i).transpose() / (2.0 * n);
                gb += 1.0 / (2.0 * n);
            }
        }
        w -= lr * gw;
        b -= lr * gb;
    }

    IdsScores s;
    double err_real = 0.0, err_fake = 0.0, p_wins = 0.0;
    for (int i = 0; i < n; ++i) {
        double fr = R.row(i) * w + b, ff = F.row(i) * w + b;
        err_real += fr < 0.0 ? 1.0 : (fr == 0.0 ? 0.5 : 0.0);
        err_fake += ff > 0.0 ? 1.0 : (ff == 0.0 ? 0.5 : 0.0);
        if (ff > fr) p_wins += 1.0;
    }
    s.u_ids = 0.5 * (err_real + err_fake) / n;
    s.p_ids = p_wins / n;
    return s;
}

MetricReport evaluate(const std::vector<cur::EvalRecord>& manifest,
                      const std::string& outputs_dir, const FeatNet& fn) {
    MetricReport r;
    r.featnet_id = fn.id;
    double sp = 0.0, ss = 0.0, sl = 0.0;
    std::vector<Eigen::VectorXd> feats_real, feats_fake;
    for (const auto& rec : manifest) {
        fs::path out_path = fs::path(outputs_dir) / fs::path(rec.image_path).filename();
        if (!fs::exists(out_path)) {
            r.missing.push_back(out_path.string());
            continue;
        }
        Tensor gt = img::read_png(rec.image_path);
        Tensor out = img::read_png(out_path.string());
        Tensor gt_u = img::to_unit(gt), out_u = img::to_unit(out);
        sp += psnr(gt_u, out_u);
        ss += ssim(gt_u, out_u);
        sl += lpips(gt, out, fn);
        feats_real.push_back(pooled_features(gt, fn));
        feats_fake.push_back(pooled_features(out, fn));
        ++r.n_samples;
    }
    r.complete = r.missing.empty();
    if (r.n_samples == 0) return r;
    r.psnr = sp / r.n_samples;
    r.ssim = ss / r.n_samples;
    r.lpips = sl / r.n_samples;
    if (r.n_samples >= 2) {
        Eigen::MatrixXd FR(r.n_samples, feats_real[0].size()), FF(r.n_samples, feats_real[0].size());
        for (int i = 0; i < r.n_samples; ++i) {
            FR.row(i) = feats_real[static_cast<size_t>(i)];
            FF.row(i) = feats_fake[static_cast<size_t>(i)];
        }
        r.fid = fid(FR, FF);
        IdsScores s = ids(FR, FF);
        r.u_ids = s.u_ids;
        r.p_ids = s.p_ids;
    }
    return r;
}

void write_report_json(const std::string& path, const MetricReport& r) {
    nlohmann::json j = {{"psnr", r.psnr},           {"ssim", r.ssim},
                        {"lpips", r.lpips},         {"fid", r.fid},
                        {"u_ids", r.u_ids},         {"p_ids", r.p_ids},
                        {"n_samples", r.n_samples}, {"featnet_id", r.featnet_id},
                        {"complete", r.complete},   {"missing", r.missing}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report " + path);
    out << j.dump(2) << "\n";
}

MetricReport read_report_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read report " + path);
    nlohmann::json j;
    in >> j;
    MetricReport r;
    r.psnr = j.at("psnr");
    r.ssim = j.at("ssim");
    r.lpips = j.at("lpips");
    r.fid = j.at("fid");
    r.u_ids = j.at("u_ids");
    r.p_ids = j.at("p_ids");
    r.n_samples = j.at("n_samples");
    r.featnet_id = j.at("featnet_id");
    r.complete = j.at("complete");
    r.missing = j.at("missing").get<std::vector<std::string>>();
    return r;
}

void write_report_csv(const std::string& path, const MetricReport& r) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report " + path);
    out << "PSNR,SSIM,LPIPS,FID,U-IDS,P-IDS\n";
    out << r.psnr << "," << r.ssim << "," << r.lpips << "," << r.fid << "," << r.u_ids << ","
        << r.p_ids << "\n";
}

}  // namespace patchwork::met
