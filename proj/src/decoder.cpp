// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#include "patchwork/decoder.hpp"

#include <cmath>
#include <fstream>

#include "patchwork/image.hpp"

namespace patchwork::dec {

using ag::Var;

void ColorJitterParams::validate() const {
    if (brightness < 0 || contrast < 0 || saturation < 0 || hue < 0)
        throw std::invalid_argument("color jitter: magnitudes must be >= 0");
    if (hue > 0.5) throw std::invalid_argument("color jitter: hue magnitude above 0.5");
}

Tensor color_augment(const Tensor& image, Rng& rng, const ColorJitterParams& p) {
    p.validate();
    // factors are always drawn in a fixed order so the rng stream is stable
    double fb = 1.0 + p.brightness * (2.0 * rng.uniform() - 1.0);
    double fc = 1.0 + p.contrast * (2.0 * rng.uniform() - 1.0);
    double fs = 1.0 + p.saturation * (2.0 * rng.uniform() - 1.0);
    double hshift = p.hue * (2.0 * rng.uniform() - 1.0);

    if (fb == 1.0 && fc == 1.0 && fs == 1.0 && hshift == 0.0) return image;

    int h = image.dim(1), w = image.dim(2);
    int64_t plane = static_cast<int64_t>(h) * w;
    Tensor u = img::to_unit(image);

    // unit factors are skipped outright so zero magnitudes stay bit-exact
    if (fb != 1.0) u = Tensor(u.dims(), u.array() * fb);

    if (fc != 1.0) {
        double mean_lum = 0.0;
        for (int64_t i = 0; i < plane; ++i)
            mean_lum += 0.299 * u.at(i) + 0.587 * u.at(plane + i) + 0.114 * u.at(2 * plane + i);
        mean_lum /= plane;
        u = Tensor(u.dims(), (u.array() - mean_lum) * fc + mean_lum);
    }

    if (fs != 1.0) {
        for (int64_t i = 0; i < plane; ++i) {
            double lum = 0.299 * u.at(i) + 0.587 * u.at(plane + i) + 0.114 * u.at(2 * plane + i);
            u.at(i) = lum + (u.at(i) - lum) * fs;
            u.at(plane + i) = lum + (u.at(plane + i) - lum) * fs;
            u.at(2 * plane + i) = lum + (u.at(2 * plane + i) - lum) * fs;
        }
    }

    if (hshift != 0.0) {
        for (int64_t i = 0; i < plane; ++i) {
            double r = std::min(std::max(u.at(i), 0.0), 1.0);
            double g = std::min(std::max(u.at(plane + i), 0.0), 1.0);
            double b = std::min(std::max(u.at(2 * plane + i), 0.0), 1.0);
            double hh, ss, vv;
            img::rgb_to_hsv(r, g, b, hh, ss, vv);
            hh += hshift;
            hh -= std::floor(hh);
            img::hsv_to_rgb(hh, ss, vv, r, g, b);
            u.at(i) = r;
            u.at(plane + i) = g;
            u.at(2 * plane + i) = b;
        }
    }
    return img::from_unit(img::clamp(u, 0.0, 1.0));
}

int draw_aug_timestep(const NoiseSchedule& sched, const LatentAugmentConfig& cfg, Rng& rng) {
    int lo = static_cast<int>(static_cast<int64_t>(cfg.t_min) * sched.steps / 1000);
    int hi = static_cast<int>(static_cast<int64_t>(cfg.t_max) * sched.steps / 1000);
    hi = std::min(hi, sched.steps);
    if (hi <= lo) hi = lo + 1;
    return rng.uniform_int(lo, hi - 1);
}

Tensor latent_augment(const Tensor& image, const backbone::Backbone& bb, Rng& rng,
                      const LatentAugmentConfig& cfg, const backbone::EpsFn* eps_override,
                      int* t_out) {
    const NoiseSchedule& sched = bb.schedule();
    int t = draw_aug_timestep(sched, cfg, rng);
    if (t_out) *t_out = t;

    Tensor z0 = bb.encode_latent(image);
    Tensor eps(z0.dims());
    for (int64_t i = 0; i < eps.numel(); ++i) eps.at(i) = rng.normal();
    Tensor z_t = sched.add_noise(z0, eps, t);
    int ls = bb.vae().config().latent_size();
    Tensor m_zero = Tensor::full({ls, ls}, 0.0);
    Tensor eps_hat = eps_override ? (*eps_override)(z_t, t)
                                  : bb.unet().predict_eps(z_t, z0, m_zero, t, nullptr);
    Tensor z_est = backbone::one_step_from_eps(z_t, eps_hat, sched.alpha_bar[t]);
    if (!cfg.round_trip) return z_est;
    return bb.encode_latent(bb.decode_latent(z_est));
}

Tensor make_pixel_cond(const Tensor& image, const Tensor& mask) {
    return img::apply_mask(image, mask);
}

InpaintDecoder::InpaintDecoder(const vae::VAEConfig& cfg, double latent_scale, uint64_t init_seed)
    : vcfg_(cfg), latent_scale_(latent_scale) {
    if (!(latent_scale_ > 0.0)) throw std::invalid_argument("decoder: latent scale must be > 0");
    Rng rng(Rng::derive(init_seed, 0xdec0ULL));
    dec_ = vae::Decoder(vcfg_, rng);
    px1_ = nn::Conv2d(4, vcfg_.ch_full, 3, 1, 1, rng);
    px2_ = nn::Conv2d(vcfg_.ch_full, vcfg_.ch_half, 3, 2, 1, rng);
    px3_ = nn::Conv2d(vcfg_.ch_half, vcfg_.ch_quarter, 3, 2, 1, rng);
    fuse_q_ = nn::Conv2d::zero_init(vcfg_.ch_quarter, vcfg_.ch_quarter, 3, 1, 1);
    fuse_h_ = nn::Conv2d::zero_init(vcfg_.ch_half, vcfg_.ch_half, 3, 1, 1);
    fuse_f_ = nn::Conv2d::zero_init(vcfg_.ch_full, vcfg_.ch_full, 3, 1, 1);
}

InpaintDecoder::InpaintDecoder(const vae::VAE& trained_vae, double latent_scale,
                               uint64_t init_seed)
    : InpaintDecoder(trained_vae.config(), latent_scale, init_seed) {
    // deep-copy the trained decoder stage weights (values only; no sharing)
    nn::NamedParams src = trained_vae.decoder_params();
    nn::NamedParams dst;
    dec_.collect("dec", dst);
    if (src.size() != dst.size()) throw std::logic_error("decoder: stage parameter sets differ");
    for (size_t i = 0; i < src.size(); ++i) {
        if (src[i].first != dst[i].first)
            throw std::logic_error("decoder: stage parameter name mismatch " + src[i].first);
        dst[i].second->val = src[i].second->val;
    }
}

Var InpaintDecoder::pixel_cond_4ch(const Var& masked_image, const Tensor& mask) const {
    int h = vcfg_.image_size;
    if (masked_image->val.dims() != Shape{3, h, h} || mask.dims() != Shape{h, h})
        throw std::invalid_argument("decoder: pixel conditioning shape mismatch");
    Var rows = ag::chw_to_rows(ag::reshape(masked_image, {1, 3, h, h}));
    Tensor mask_col({static_cast<int>(static_cast<int64_t>(h) * h), 1}, mask.array());
    Var cat = ag::concat_cols({rows, ag::constant(std::move(mask_col))});
    return ag::rows_to_chw(cat, 4, h, h);
}

Var InpaintDecoder::decode_graph(const Var& z_raw, const Var& masked_image,
                                 const Tensor& mask) const {
    int c = vcfg_.latent_channels, ls = vcfg_.latent_size(), hw = vcfg_.image_size;
    Var z4 = z_raw->val.dims().size() == 4 ? z_raw : ag::reshape(z_raw, {1, c, ls, ls});
    Var g1 = ag::silu(px1_.forward(pixel_cond_4ch(masked_image, mask)));
    Var g2 = ag::silu(px2_.forward(g1));
    Var g3 = ag::silu(px3_.forward(g2));
    std::vector<Var> inject = {fuse_q_.forward(g3), fuse_h_.forward(g2), fuse_f_.forward(g1)};
    return ag::reshape(dec_.forward(z4, &inject), {3, hw, hw});
}

Tensor InpaintDecoder::decode_inpaint(const Tensor& z, const Tensor& masked_image,
                                      const Tensor& mask, bool paste_unmasked) const {
    Tensor z_raw(z.dims(), z.array() / latent_scale_);
    Tensor out = decode_graph(ag::constant(z_raw), ag::constant(masked_image), mask)->val;
    if (!out.all_finite()) throw std::runtime_error("decoder produced non-finite image");
    if (paste_unmasked) {
        int64_t plane = static_cast<int64_t>(vcfg_.image_size) * vcfg_.image_size;
        for (int c = 0; c < 3; ++c)
            for (int64_t i = 0; i < plane; ++i)
                if (mask.at(i) == 0.0) out.at(c * plane + i) = masked_image.at(c * plane + i);
    }
    return out;
}

nn::NamedParams InpaintDecoder::params() const {
    nn::NamedParams np;
    dec_.collect("dec", np);
    px1_.collect("px1", np);
    px2_.collect("px2", np);
    px3_.collect("px3", np);
    fuse_q_.collect("fuse_q", np);
    fuse_h_.collect("fuse_h", np);
    fuse_f_.collect("fuse_f", np);
    return np;
}

Checkpoint InpaintDecoder::to_checkpoint(int64_t step) const {
    nlohmann::json cfg = {{"vae", vcfg_.to_json()}, {"latent_scale", latent_scale_}};
    return checkpoint_from_params("decoder", cfg, step, params());
}

InpaintDecoder InpaintDecoder::from_checkpoint(const Checkpoint& ck) {
    if (ck.module_id != "decoder")
        throw std::runtime_error("expected a decoder checkpoint, got '" + ck.module_id + "'");
    InpaintDecoder m(vae::VAEConfig::from_json(ck.config.at("vae")),
                     ck.config.at("latent_scale").get<double>(), 0);
    nn::NamedParams np = m.params();
    load_params(np, ck);
    return m;
}

backbone::TrainCurve train_decoder(InpaintDecoder& model, const backbone::Backbone& bb,
                                   const DecoderTrainConfig& tc, const ImageSource& images) {
    nn::NamedParams np = model.params();
    std::vector<Var> ps = nn::values(np);
    nn::AdamW opt(ps, tc.lr, 0.9, 0.999, 1e-8, 1e-5);
    Rng rng(Rng::derive(tc.seed, 0xdec7ULL));
    std::ofstream log;
    if (!tc.log_csv.empty()) {
        log.open(tc.log_csv);
        log << "step,loss,latent_aug_frac,lr\n";
    }
    int hw = model.config().image_size;
    double scale = model.latent_scale();
    backbone::TrainCurve curve;
    int head_end = std::max(1, tc.steps / 10);
    int tail_start = tc.steps - std::max(1, tc.steps / 10);
    int head_n = 0, tail_n = 0;
    uint64_t img_idx = 0;
    for (int step = 0; step < tc.steps; ++step) {
        opt.zero_grad();
        std::vector<Var> losses;
        int la_count = 0;
        for (int b = 0; b < tc.batch; ++b) {
            Tensor im = images(img_idx++);
            if (tc.color_aug) im = color_augment(im, rng, tc.jitter);
            Tensor mask = maskgen::sample_training_mask(tc.mask_cfg, rng, hw, hw);
            Tensor masked = make_pixel_cond(im, mask);
            bool use_la = tc.latent_aug && rng.uniform() < tc.latent_aug_prob;
            Tensor z = use_la ? latent_augment(im, bb, rng, tc.la) : bb.encode_latent(im);
            la_count += use_la ? 1 : 0;
            Tensor z_raw(z.dims(), z.array() / scale);
            Var pred = model.decode_graph(ag::constant(z_raw), ag::constant(masked), mask);
            Var diff = ag::abs(ag::sub(pred, ag::constant(im)));
            if (tc.masked_weight != 1.0) {
                int64_t plane = static_cast<int64_t>(hw) * hw;
                Tensor w({3, hw, hw});
                double wsum = 0.0;
                for (int c = 0; c < 3; ++c)
                    for (int64_t i = 0; i < plane; ++i) {
                        double v = mask.at(i) != 0.0 ? tc.masked_weight : 1.0;
                        w.at(c * plane + i) = v;
                        wsum += v;
                    }
                losses.push_back(
                    ag::mul_scalar(ag::sum_all(ag::mul(diff, ag::constant(std::move(w)))), 1.0 / wsum));
            } else {
                losses.push_back(ag::mean_all(diff));
            }
        }
        Var total = losses[0];
        for (size_t i = 1; i < losses.size(); ++i) total = ag::add(total, losses[i]);
        total = ag::mul_scalar(total, 1.0 / losses.size());
        double loss_val = total->val.item();
        if (!std::isfinite(loss_val))
            throw std::runtime_error("decoder training diverged (non-finite loss)");
        ag::backward(total);
        opt.step();
        if (log.is_open())
            log << step << "," << loss_val << "," << static_cast<double>(la_count) / tc.batch
                << "," << opt.lr() << "\n";
        if (step < head_end) {
            curve.head_mean += loss_val;
            ++head_n;
        }
        if (step >= tail_start) {
            curve.tail_mean += loss_val;
            ++tail_n;
        }
    }
    if (head_n) curve.head_mean /= head_n;
    if (tail_n) curve.tail_mean /= tail_n;
    return curve;
}

double masked_mean_color_error(const Tensor& got, const Tensor& want, const Tensor& mask) {
    int64_t plane = mask.numel();
    double err = 0.0;
    int64_t n = 0;
    for (int64_t i = 0; i < plane; ++i) n += mask.at(i) != 0.0 ? 1 : 0;
    if (n == 0) return 0.0;
    for (int c = 0; c < 3; ++c) {
        double mg = 0.0, mw = 0.0;
        for (int64_t i = 0; i < plane; ++i)
            if (mask.at(i) != 0.0) {
                mg += got.at(c * plane + i);
                mw += want.at(c * plane + i);
            }
        err += std::abs(mg / n - mw / n);
    }
    return err / 3.0;
}

}  // namespace patchwork::dec
