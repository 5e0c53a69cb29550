// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "patchwork/backbone.hpp"

namespace patchwork::dec {

// Maximum jitter magnitudes; factors are drawn uniformly from [1-m, 1+m]
// and the hue shift from [-hue, +hue] (fraction of the hue circle).
struct ColorJitterParams {
    double brightness = 0.15;
    double contrast = 0.2;
    double saturation = 0.1;
    double hue = 0.03;
    void validate() const;
};

// Brightness scale, contrast about the mean luminance, saturation blend with
// per-pixel luminance, hue rotation; clamped to the valid range at the end.
Tensor color_augment(const Tensor& image, Rng& rng, const ColorJitterParams& p);

struct LatentAugmentConfig {
    int t_min = 500;  // on the reference 1000-step scale; rescaled if T differs
    int t_max = 1000;
    bool round_trip = true;  // decode + re-encode the one-step estimate
};

// Timestep for the degradation draw: uniform on [t_min, t_max) after
// rescaling the reference-1000 bounds to the schedule's own step count.
int draw_aug_timestep(const NoiseSchedule& sched, const LatentAugmentConfig& cfg, Rng& rng);

// Degrades a clean latent the way inpainting sampling degrades it: noise to
// a late timestep, one-step estimate back (all-zero mask, clean latent as
// conditioning), optionally a decode/re-encode round trip. Returns a latent
// in the backbone's scaled space. eps_override lets tests inject an oracle.
Tensor latent_augment(const Tensor& image, const backbone::Backbone& bb, Rng& rng,
                      const LatentAugmentConfig& cfg,
                      const backbone::EpsFn* eps_override = nullptr, int* t_out = nullptr);

// pixel_cond = image with masked pixels zeroed; never sees masked content
Tensor make_pixel_cond(const Tensor& image, const Tensor& mask);

// Latent decoder with an additive pixel-conditioning branch. The decoder
// stages are initialized from a trained VAE decoder; the fusion convs are
// zero-initialized, so at init the module reproduces the vanilla decoder
// bit-for-bit.
class InpaintDecoder {
public:
    InpaintDecoder(const vae::VAE& trained_vae, double latent_scale, uint64_t init_seed);

    // z in backbone (scaled) latent space; masked_image with masked pixels
    // zeroed; mask [H,W] in {0,1}
    Tensor decode_inpaint(const Tensor& z, const Tensor& masked_image, const Tensor& mask,
                          bool paste_unmasked = false) const;
    ag::Var decode_graph(const ag::Var& z_raw, const ag::Var& masked_image,
                         const Tensor& mask) const;

    double latent_scale() const { return latent_scale_; }
    const vae::VAEConfig& config() const { return vcfg_; }
    nn::NamedParams params() const;
    Checkpoint to_checkpoint(int64_t step) const;
    static InpaintDecoder from_checkpoint(const Checkpoint& ck);

private:
    InpaintDecoder(const vae::VAEConfig& cfg, double latent_scale, uint64_t init_seed);
    ag::Var pixel_cond_4ch(const ag::Var& masked_image, const Tensor& mask) const;

    vae::VAEConfig vcfg_;
    double latent_scale_ = 1.0;
    vae::Decoder dec_;
    nn::Conv2d px1_, px2_, px3_;        // strided pixel branch
    nn::Conv2d fuse_q_, fuse_h_, fuse_f_;  // zero-init additive fusion
};

struct DecoderTrainConfig {
    int steps = 300;
    int batch = 4;
    double lr = 1e-3;
    uint64_t seed = 0;
    bool color_aug = true;
    bool latent_aug = true;
    double latent_aug_prob = 0.5;
    double masked_weight = 1.0;  // extra L1 weight on masked-region pixels
    ColorJitterParams jitter;
    LatentAugmentConfig la;
    maskgen::MaskMixtureConfig mask_cfg;
    std::string log_csv;
};

using ImageSource = std::function<Tensor(uint64_t)>;

// Trains the decoder (pixel branch + stages) against the frozen backbone.
backbone::TrainCurve train_decoder(InpaintDecoder& model, const backbone::Backbone& bb,
                                   const DecoderTrainConfig& tc, const ImageSource& images);

// Mean abs difference of per-channel means inside the mask: the harmonization
// error measure used to compare decoders.
double masked_mean_color_error(const Tensor& got, const Tensor& want, const Tensor& mask);

}  // namespace patchwork::dec
