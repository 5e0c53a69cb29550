// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "patchwork/maskgen.hpp"
#include "patchwork/schedule.hpp"
#include "patchwork/unet.hpp"
#include "patchwork/vae.hpp"

namespace patchwork::backbone {

// Pluggable noise estimator; tests inject oracles (the true noise, a
// constant) where the trained network is irrelevant.
using EpsFn = std::function<Tensor(const Tensor& z_t, int t)>;

// One-step clean-latent estimate from a noised latent and a noise estimate:
// z0 = (z_t - sqrt(1 - alpha_bar_t) * eps) / sqrt(alpha_bar_t)
Tensor one_step_from_eps(const Tensor& z_t, const Tensor& eps_hat, double alpha_bar_t);

struct SamplerConfig {
    int num_steps = 50;
    double eta = 0.0;  // 0 = deterministic
    uint64_t seed = 0;
};

// Deterministic-by-default DDIM over a uniformly spaced timestep subsequence.
Tensor ddim_sample_fn(const NoiseSchedule& sched, Tensor z_t, int num_steps, const EpsFn& eps_fn,
                      double eta, Rng* noise);

// Frozen latent-diffusion inpainting stack: VAE + noise-prediction U-Net +
// schedule + latent scaling.
class Backbone {
public:
    Backbone(vae::VAE v, unet::UNet u, NoiseSchedule s, double latent_scale);

    const vae::VAE& vae() const { return vae_; }
    vae::VAE& vae() { return vae_; }
    const unet::UNet& unet() const { return unet_; }
    unet::UNet& unet() { return unet_; }
    const NoiseSchedule& schedule() const { return sched_; }
    double latent_scale() const { return latent_scale_; }
    void set_latent_scale(double s) { latent_scale_ = s; }

    // scaled posterior mean; decode undoes the scaling
    Tensor encode_latent(const Tensor& image) const;
    Tensor decode_latent(const Tensor& z) const;
    Tensor latent_mask(const Tensor& mask) const;

    Tensor one_step_estimate(const Tensor& z_t, const Tensor& z0_cond, const Tensor& m_lat, int t,
                             const Tensor* cond = nullptr) const;
    Tensor ddim_sample(const Tensor& z_t, const Tensor& z0_masked, const Tensor& m_lat,
                       const Tensor* cond, const SamplerConfig& sc) const;
    // full path: encode masked image, run DDIM from pure noise
    Tensor inpaint_latent(const Tensor& image, const Tensor& mask, const Tensor* cond,
                          const SamplerConfig& sc) const;

    // marks every VAE and U-Net parameter as gradient-free
    void freeze();
    uint64_t param_hash() const;

    Checkpoint to_checkpoint(int64_t step) const;
    static Backbone from_checkpoint(const Checkpoint& ck);

private:
    vae::VAE vae_;
    unet::UNet unet_;
    NoiseSchedule sched_;
    double latent_scale_;
};

struct BackboneTrainConfig {
    int steps = 400;
    int batch = 4;
    double lr = 1e-3;
    uint64_t seed = 0;
    maskgen::MaskMixtureConfig mask_cfg;
    std::string log_csv;
};

struct TrainCurve {
    double head_mean = 0.0;  // mean loss over the first 10% of steps
    double tail_mean = 0.0;  // mean loss over the final 10% of steps
};

using ImageSource = std::function<Tensor(uint64_t)>;

// Trains the U-Net only (the VAE must already be trained); null condition.
TrainCurve train_backbone(Backbone& model, const BackboneTrainConfig& tc,
                          const ImageSource& images);

}  // namespace patchwork::backbone
