// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#include "patchwork/vae.hpp"

#include <cmath>
#include <fstream>

namespace patchwork::vae {

using ag::Var;

nlohmann::json VAEConfig::to_json() const {
    return {{"image_size", image_size},   {"latent_channels", latent_channels},
            {"ch_full", ch_full},         {"ch_half", ch_half},
            {"ch_quarter", ch_quarter},   {"kl_weight", kl_weight}};
}

VAEConfig VAEConfig::from_json(const nlohmann::json& j) {
    VAEConfig c;
    c.image_size = j.at("image_size");
    c.latent_channels = j.at("latent_channels");
    c.ch_full = j.at("ch_full");
    c.ch_half = j.at("ch_half");
    c.ch_quarter = j.at("ch_quarter");
    c.kl_weight = j.at("kl_weight");
    return c;
}

Decoder::Decoder(const VAEConfig& cfg, Rng& rng)
    : conv_in_(cfg.latent_channels, cfg.ch_quarter, 3, 1, 1, rng),
      conv_q_(cfg.ch_quarter, cfg.ch_quarter, 3, 1, 1, rng),
      conv_h_(cfg.ch_quarter, cfg.ch_half, 3, 1, 1, rng),
      conv_f_(cfg.ch_half, cfg.ch_full, 3, 1, 1, rng),
      conv_out_(cfg.ch_full, 3, 3, 1, 1, rng),
      gn_in_(cfg.ch_quarter, 8),
      gn_q_(cfg.ch_quarter, 8),
      gn_h_(cfg.ch_half, 8),
      gn_f_(cfg.ch_full, 8) {}

Var Decoder::forward(const Var& z, const std::vector<Var>* inject) const {
    Var x = ag::silu(gn_in_.forward(conv_in_.forward(z)));
    x = ag::silu(gn_q_.forward(conv_q_.forward(x)));
    if (inject) x = ag::add(x, (*inject)[0]);
    x = ag::upsample_nearest2(x);
    x = ag::silu(gn_h_.forward(conv_h_.forward(x)));
    if (inject) x = ag::add(x, (*inject)[1]);
    x = ag::upsample_nearest2(x);
    x = ag::silu(gn_f_.forward(conv_f_.forward(x)));
    if (inject) x = ag::add(x, (*inject)[2]);
    return conv_out_.forward(x);
}

void Decoder::collect(const std::string& p, nn::NamedParams& np) const {
    conv_in_.collect(p + ".conv_in", np);
    gn_in_.collect(p + ".gn_in", np);
    conv_q_.collect(p + ".conv_q", np);
    gn_q_.collect(p + ".gn_q", np);
    conv_h_.collect(p + ".conv_h", np);
    gn_h_.collect(p + ".gn_h", np);
    conv_f_.collect(p + ".conv_f", np);
    gn_f_.collect(p + ".gn_f", np);
    conv_out_.collect(p + ".conv_out", np);
}

VAE::VAE(const VAEConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    if (cfg_.image_size % cfg_.factor() != 0)
        throw std::invalid_argument("VAE: image_size not divisible by downsampling factor");
    Rng rng(Rng::derive(init_seed, 0x7ae0ULL));
    e_conv1_ = nn::Conv2d(3, cfg_.ch_full, 3, 1, 1, rng);
    e_gn1_ = nn::GroupNorm(cfg_.ch_full, 8);
    e_conv2_ = nn::Conv2d(cfg_.ch_full, cfg_.ch_half, 3, 2, 1, rng);
    e_gn2_ = nn::GroupNorm(cfg_.ch_half, 8);
    e_conv3_ = nn::Conv2d(cfg_.ch_half, cfg_.ch_quarter, 3, 2, 1, rng);
    e_gn3_ = nn::GroupNorm(cfg_.ch_quarter, 8);
    e_conv4_ = nn::Conv2d(cfg_.ch_quarter, cfg_.ch_quarter, 3, 1, 1, rng);
    e_gn4_ = nn::GroupNorm(cfg_.ch_quarter, 8);
    e_out_ = nn::Conv2d(cfg_.ch_quarter, 2 * cfg_.latent_channels, 3, 1, 1, rng);
    dec_ = Decoder(cfg_, rng);
}

void VAE::encode_graph(const Var& image, Var& mean, Var& logvar) const {
    int hw = cfg_.image_size;
    Var x = ag::reshape(image, {1, 3, hw, hw});
    x = ag::silu(e_gn1_.forward(e_conv1_.forward(x)));
    x = ag::silu(e_gn2_.forward(e_conv2_.forward(x)));
    x = ag::silu(e_gn3_.forward(e_conv3_.forward(x)));
    x = ag::silu(e_gn4_.forward(e_conv4_.forward(x)));
    Var mo = e_out_.forward(x);
    int c = cfg_.latent_channels, ls = cfg_.latent_size();
    // split channel-wise: first half mean, second half logvar
    Var rows = ag::chw_to_rows(mo);  // [ls*ls, 2c]
    mean = ag::rows_to_chw(ag::slice_cols(rows, 0, c), c, ls, ls);
    logvar = ag::rows_to_chw(ag::slice_cols(rows, c, c), c, ls, ls);
}

Var VAE::decode_graph(const Var& z) const {
    int c = cfg_.latent_channels, ls = cfg_.latent_size();
    Var z4 = z->val.dims().size() == 4 ? z : ag::reshape(z, {1, c, ls, ls});
    Var out = dec_.forward(z4);
    return ag::reshape(out, {3, cfg_.image_size, cfg_.image_size});
}

VAE::EncodeResult VAE::encode(const Tensor& image, Rng* noise) const {
    Var mean, logvar;
    encode_graph(ag::constant(image), mean, logvar);
    EncodeResult r;
    int c = cfg_.latent_channels, ls = cfg_.latent_size();
    r.mean = Tensor({c, ls, ls}, mean->val.array());
    r.logvar = Tensor({c, ls, ls}, logvar->val.array());
    if (noise) {
        Tensor eps({c, ls, ls});
        for (int64_t i = 0; i < eps.numel(); ++i) eps.at(i) = noise->normal();
        r.sample = Tensor({c, ls, ls},
                          r.mean.array() + (0.5 * r.logvar.array()).exp() * eps.array());
    } else {
        r.sample = r.mean;
    }
    return r;
}

Tensor VAE::decode(const Tensor& z) const {
    return decode_graph(ag::constant(z))->val;
}

nn::NamedParams VAE::params() const {
    nn::NamedParams np = encoder_params();
    dec_.collect("dec", np);
    return np;
}

nn::NamedParams VAE::encoder_params() const {
    nn::NamedParams np;
    e_conv1_.collect("enc.conv1", np);
    e_gn1_.collect("enc.gn1", np);
    e_conv2_.collect("enc.conv2", np);
    e_gn2_.collect("enc.gn2", np);
    e_conv3_.collect("enc.conv3", np);
    e_gn3_.collect("enc.gn3", np);
    e_conv4_.collect("enc.conv4", np);
    e_gn4_.collect("enc.gn4", np);
    e_out_.collect("enc.out", np);
    return np;
}

nn::NamedParams VAE::decoder_params() const {
    nn::NamedParams np;
    dec_.collect("dec", np);
    return np;
}

Checkpoint VAE::to_checkpoint(int64_t step) const {
    return checkpoint_from_params("vae", cfg_.to_json(), step, params());
}

VAE VAE::from_checkpoint(const Checkpoint& ck) {
    if (ck.module_id != "vae")
        throw std::runtime_error("expected a vae checkpoint, got '" + ck.module_id + "'");
    VAE m(VAEConfig::from_json(ck.config), 0);
    nn::NamedParams np = m.params();
    load_params(np, ck);
    return m;
}

double train_vae(VAE& model, const VAETrainConfig& tc, const ImageSource& images) {
    nn::NamedParams np = model.params();
    std::vector<Var> ps = nn::values(np);
    nn::AdamW opt(ps, tc.lr, 0.9, 0.999, 1e-8, 1e-5);
    Rng rng(Rng::derive(tc.seed, 0x7ae5ULL));
    std::ofstream log;
    if (!tc.log_csv.empty()) {
        log.open(tc.log_csv);
        log << "step,loss,recon,kl,lr\n";
    }
    const VAEConfig& cfg = model.config();
    int c = cfg.latent_channels, ls = cfg.latent_size();
    double tail_sum = 0.0;
    int tail_n = 0;
    int tail_start = tc.steps - std::max(1, tc.steps / 10);
    uint64_t img_idx = 0;
    for (int step = 0; step < tc.steps; ++step) {
        opt.zero_grad();
        std::vector<Var> losses;
        double recon_acc = 0.0, kl_acc = 0.0;
        for (int b = 0; b < tc.batch; ++b) {
            Tensor im = images(img_idx++);
            Var mean, logvar;
            model.encode_graph(ag::constant(im), mean, logvar);
            Tensor eps({1, c, ls, ls});
            for (int64_t i = 0; i < eps.numel(); ++i) eps.at(i) = rng.normal();
            // reparameterization: z = mean + exp(logvar/2) * eps
            Var z = ag::add(mean, ag::mul(ag::exp(ag::mul_scalar(logvar, 0.5)), ag::constant(eps)));
            Var recon = model.decode_graph(z);
            Var rec_loss = ag::mse_loss(recon, im);
            // KL(q || N(0,I)) averaged over latent elements
            Var kl = ag::mean_all(ag::mul_scalar(
                ag::sub(ag::add(ag::square(mean), ag::exp(logvar)),
                        ag::add_scalar(logvar, 1.0)),
                0.5));
            recon_acc += rec_loss->val.item();
            kl_acc += kl->val.item();
            losses.push_back(ag::add(rec_loss, ag::mul_scalar(kl, cfg.kl_weight)));
        }
        Var total = losses[0];
        for (size_t i = 1; i < losses.size(); ++i) total = ag::add(total, losses[i]);
        total = ag::mul_scalar(total, 1.0 / losses.size());
        double loss_val = total->val.item();
        if (!std::isfinite(loss_val))
            throw std::runtime_error("VAE training diverged (non-finite loss)");
        ag::backward(total);
        opt.step();
        if (log.is_open())
            log << step << "," << loss_val << "," << recon_acc / tc.batch << ","
                << kl_acc / tc.batch << "," << opt.lr() << "\n";
        if (step >= tail_start) {
            tail_sum += loss_val;
            ++tail_n;
        }
    }
    return tail_n ? tail_sum / tail_n : 0.0;
}

double eval_roundtrip_psnr(const VAE& model, const ImageSource& images, int n) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        Tensor im = images(static_cast<uint64_t>(i));
        Tensor rec = model.decode(model.encode(im, nullptr).sample);
        // pixels live in [-1,1]; report PSNR on the [0,1] scale
        double mse = ((rec.array() - im.array()) / 2.0).square().mean();
        sum += 10.0 * std::log10(1.0 / std::max(mse, 1e-12));
    }
    return sum / n;
}

double estimate_latent_scale(const VAE& model, const ImageSource& images, int n) {
    std::vector<double> vals;
    for (int i = 0; i < n; ++i) {
        Tensor z = model.encode(images(static_cast<uint64_t>(i)), nullptr).mean;
        for (int64_t j = 0; j < z.numel(); ++j) vals.push_back(z.at(j));
    }
    double m = 0.0;
    for (double v : vals) m += v;
    m /= vals.size();
    double var = 0.0;
    for (double v : vals) var += (v - m) * (v - m);
    var /= vals.size();
    return 1.0 / std::max(std::sqrt(var), 1e-8);
}

}  // namespace patchwork::vae
