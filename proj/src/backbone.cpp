// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#include "patchwork/backbone.hpp"

#include <cmath>
#include <fstream>

#include "patchwork/image.hpp"

namespace patchwork::backbone {

using ag::Var;

Tensor one_step_from_eps(const Tensor& z_t, const Tensor& eps_hat, double alpha_bar_t) {
    if (!z_t.same_shape(eps_hat)) throw std::invalid_argument("one_step: shape mismatch");
    if (!(alpha_bar_t > 0.0 && alpha_bar_t <= 1.0))
        throw std::invalid_argument("one_step: alpha_bar out of (0,1]");
    double a = std::sqrt(alpha_bar_t), b = std::sqrt(1.0 - alpha_bar_t);
    return Tensor(z_t.dims(), (z_t.array() - b * eps_hat.array()) / a);
}

Tensor ddim_sample_fn(const NoiseSchedule& sched, Tensor z_t, int num_steps, const EpsFn& eps_fn,
                      double eta, Rng* noise) {
    if (num_steps < 1 || num_steps > sched.steps)
        throw std::invalid_argument("ddim: num_steps must be in [1, T]");
    if (eta > 0.0 && noise == nullptr) throw std::invalid_argument("ddim: eta > 0 needs noise");
    for (int i = num_steps - 1; i >= 0; --i) {
        // uniformly spaced subsequence; i == 0 steps to the clean latent
        int t = (i + 1) * sched.steps / num_steps - 1;
        int t_prev = i * sched.steps / num_steps - 1;
        double ab = sched.alpha_bar[t];
        double ab_prev = t_prev >= 0 ? sched.alpha_bar[t_prev] : 1.0;
        Tensor eps = eps_fn(z_t, t);
        if (!eps.same_shape(z_t)) throw std::invalid_argument("ddim: eps shape mismatch");
        Tensor z0 = one_step_from_eps(z_t, eps, ab);
        double sigma =
            eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
        double dir = std::sqrt(std::max(1.0 - ab_prev - sigma * sigma, 0.0));
        Eigen::ArrayXd next =
            std::sqrt(ab_prev) * z0.array() + dir * eps.array();
        if (sigma > 0.0) {
            Tensor n(z_t.dims());
            for (int64_t j = 0; j < n.numel(); ++j) n.at(j) = noise->normal();
            next += sigma * n.array();
        }
        z_t = Tensor(z_t.dims(), std::move(next));
        if (!z_t.all_finite()) throw std::runtime_error("ddim: non-finite latent at t=" + std::to_string(t));
    }
    return z_t;
}

Backbone::Backbone(vae::VAE v, unet::UNet u, NoiseSchedule s, double latent_scale)
    : vae_(std::move(v)), unet_(std::move(u)), sched_(std::move(s)), latent_scale_(latent_scale) {
    sched_.validate();
    if (vae_.config().latent_size() != unet_.config().latent_size ||
        vae_.config().latent_channels != unet_.config().latent_channels)
        throw std::invalid_argument("backbone: VAE and U-Net latent geometry disagree");
    if (!(latent_scale_ > 0.0)) throw std::invalid_argument("backbone: latent scale must be > 0");
}

Tensor Backbone::encode_latent(const Tensor& image) const {
    Tensor z = vae_.encode(image, nullptr).mean;
    Tensor out(z.dims(), z.array() * latent_scale_);
    if (!out.all_finite()) throw std::runtime_error("backbone: non-finite latent");
    return out;
}

Tensor Backbone::decode_latent(const Tensor& z) const {
    return vae_.decode(Tensor(z.dims(), z.array() / latent_scale_));
}

Tensor Backbone::latent_mask(const Tensor& mask) const {
    return img::downsample_mask_any(mask, vae_.config().factor());
}

Tensor Backbone::one_step_estimate(const Tensor& z_t, const Tensor& z0_cond, const Tensor& m_lat,
                                   int t, const Tensor* cond) const {
    if (t < 0 || t >= sched_.steps) throw std::out_of_range("one_step: t out of [0, T)");
    Tensor eps = unet_.predict_eps(z_t, z0_cond, m_lat, t, cond);
    return one_step_from_eps(z_t, eps, sched_.alpha_bar[t]);
}

Tensor Backbone::ddim_sample(const Tensor& z_t, const Tensor& z0_masked, const Tensor& m_lat,
                             const Tensor* cond, const SamplerConfig& sc) const {
    EpsFn fn = [&](const Tensor& z, int t) {
        return unet_.predict_eps(z, z0_masked, m_lat, t, cond);
    };
    Rng noise(Rng::derive(sc.seed, 0xdd1eULL));
    return ddim_sample_fn(sched_, z_t, sc.num_steps, fn, sc.eta, &noise);
}

Tensor Backbone::inpaint_latent(const Tensor& image, const Tensor& mask, const Tensor* cond,
                                const SamplerConfig& sc) const {
    Tensor z0_masked = encode_latent(img::apply_mask(image, mask));
    Tensor m_lat = latent_mask(mask);
    int c = vae_.config().latent_channels, ls = vae_.config().latent_size();
    Tensor z_T({c, ls, ls});
    Rng rng(Rng::derive(sc.seed, 0x1afaULL));
    for (int64_t i = 0; i < z_T.numel(); ++i) z_T.at(i) = rng.normal();
    return ddim_sample(z_T, z0_masked, m_lat, cond, sc);
}

void Backbone::freeze() {
    nn::freeze(vae_.params());
    nn::freeze(unet_.params());
}

uint64_t Backbone::param_hash() const {
    nn::NamedParams np;
    for (auto& [k, v] : vae_.params()) np.emplace_back("vae." + k, v);
    for (auto& [k, v] : unet_.params()) np.emplace_back("unet." + k, v);
    return params_hash(np);
}

Checkpoint Backbone::to_checkpoint(int64_t step) const {
    nn::NamedParams np;
    for (auto& [k, v] : vae_.params()) np.emplace_back("vae." + k, v);
    for (auto& [k, v] : unet_.params()) np.emplace_back("unet." + k, v);
    nlohmann::json cfg = {{"vae", vae_.config().to_json()},
                          {"unet", unet_.config().to_json()},
                          {"schedule_steps", sched_.steps},
                          {"beta_start", sched_.beta.front()},
                          {"beta_end", sched_.beta.back()},
                          {"latent_scale", latent_scale_}};
    return checkpoint_from_params("backbone", cfg, step, np);
}

Backbone Backbone::from_checkpoint(const Checkpoint& ck) {
    if (ck.module_id != "backbone")
        throw std::runtime_error("expected a backbone checkpoint, got '" + ck.module_id + "'");
    vae::VAE v(vae::VAEConfig::from_json(ck.config.at("vae")), 0);
    unet::UNet u(unet::UNetConfig::from_json(ck.config.at("unet")), 0);
    NoiseSchedule s = NoiseSchedule::linear(ck.config.at("schedule_steps"),
                                            ck.config.at("beta_start"), ck.config.at("beta_end"));
    nn::NamedParams np;
    for (auto& [k, p] : v.params()) np.emplace_back("vae." + k, p);
    for (auto& [k, p] : u.params()) np.emplace_back("unet." + k, p);
    load_params(np, ck);
    return Backbone(std::move(v), std::move(u), std::move(s), ck.config.at("latent_scale"));
}

TrainCurve train_backbone(Backbone& model, const BackboneTrainConfig& tc,
                          const ImageSource& images) {
    nn::NamedParams np = model.unet().params();
    std::vector<Var> ps = nn::values(np);
    nn::AdamW opt(ps, tc.lr, 0.9, 0.999, 1e-8, 1e-5);
    Rng rng(Rng::derive(tc.seed, 0xbac0ULL));
    std::ofstream log;
    if (!tc.log_csv.empty()) {
        log.open(tc.log_csv);
        log << "step,loss,lr\n";
    }
    const NoiseSchedule& sched = model.schedule();
    int hw = model.vae().config().image_size;
    int c = model.vae().config().latent_channels, ls = model.vae().config().latent_size();
    TrainCurve curve;
    int head_end = std::max(1, tc.steps / 10);
    int tail_start = tc.steps - std::max(1, tc.steps / 10);
    int head_n = 0, tail_n = 0;
    uint64_t img_idx = 0;
    for (int step = 0; step < tc.steps; ++step) {
        opt.zero_grad();
        std::vector<Var> losses;
        for (int b = 0; b < tc.batch; ++b) {
            Tensor im = images(img_idx++);
            Tensor z0 = model.encode_latent(im);
            Tensor mask = maskgen::sample_training_mask(tc.mask_cfg, rng, hw, hw);
            Tensor z0m = model.encode_latent(img::apply_mask(im, mask));
            Tensor m_lat = model.latent_mask(mask);
            int t = rng.uniform_int(0, sched.steps - 1);
            Tensor eps({c, ls, ls});
            for (int64_t i = 0; i < eps.numel(); ++i) eps.at(i) = rng.normal();
            Tensor z_t = sched.add_noise(z0, eps, t);
            Var pred = model.unet().forward(model.unet().pack_input(z_t, z0m, m_lat), t, nullptr);
            losses.push_back(ag::mse_loss(pred, Tensor({1, c, ls, ls}, eps.array())));
        }
        Var total = losses[0];
        for (size_t i = 1; i < losses.size(); ++i) total = ag::add(total, losses[i]);
        total = ag::mul_scalar(total, 1.0 / losses.size());
        double loss_val = total->val.item();
        if (!std::isfinite(loss_val))
            throw std::runtime_error("backbone training diverged (non-finite loss) at step " +
                                     std::to_string(step));
        ag::backward(total);
        opt.step();
        if (log.is_open()) log << step << "," << loss_val << "," << opt.lr() << "\n";
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

}  // namespace patchwork::backbone
