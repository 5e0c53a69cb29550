// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <json.hpp>

#include "patchwork/checkpoint.hpp"
#include "patchwork/nn.hpp"
#include "patchwork/rng.hpp"

namespace patchwork::vae {

struct VAEConfig {
    int image_size = 64;
    int latent_channels = 4;
    int ch_full = 16;   // channels at full resolution
    int ch_half = 48;   // at H/2
    int ch_quarter = 64;  // at H/4 (latent resolution)
    double kl_weight = 1e-3;

    int factor() const { return 4; }
    int latent_size() const { return image_size / factor(); }
    nlohmann::json to_json() const;
    static VAEConfig from_json(const nlohmann::json& j);
};

// Decoder stages are shared with the inpainting-specialized decoder, which
// injects pixel-branch features after selected stages.
class Decoder {
public:
    Decoder() = default;
    Decoder(const VAEConfig& cfg, Rng& rng);

    // inject, when present, holds three feature maps added after the
    // quarter/half/full-resolution stages: [1,ch_quarter,ls,ls],
    // [1,ch_half,2ls,2ls], [1,ch_full,4ls,4ls].
    ag::Var forward(const ag::Var& z, const std::vector<ag::Var>* inject = nullptr) const;
    void collect(const std::string& prefix, nn::NamedParams& np) const;

private:
    nn::Conv2d conv_in_, conv_q_, conv_h_, conv_f_, conv_out_;
    nn::GroupNorm gn_in_, gn_q_, gn_h_, gn_f_;
};

class VAE {
public:
    VAE(const VAEConfig& cfg, uint64_t init_seed);

    struct EncodeResult {
        Tensor mean, logvar, sample;  // [C,h,w]
    };
    // noise == nullptr takes the posterior mean.
    EncodeResult encode(const Tensor& image, Rng* noise) const;
    Tensor decode(const Tensor& z) const;

    // graph-building variants for training
    void encode_graph(const ag::Var& image, ag::Var& mean, ag::Var& logvar) const;
    ag::Var decode_graph(const ag::Var& z) const;

    const VAEConfig& config() const { return cfg_; }
    const Decoder& decoder() const { return dec_; }
    nn::NamedParams params() const;
    nn::NamedParams encoder_params() const;
    nn::NamedParams decoder_params() const;

    Checkpoint to_checkpoint(int64_t step) const;
    static VAE from_checkpoint(const Checkpoint& ck);

private:
    VAEConfig cfg_;
    nn::Conv2d e_conv1_, e_conv2_, e_conv3_, e_conv4_, e_out_;
    nn::GroupNorm e_gn1_, e_gn2_, e_gn3_, e_gn4_;
    Decoder dec_;
};

struct VAETrainConfig {
    int steps = 600;
    int batch = 4;
    double lr = 1e-3;
    uint64_t seed = 0;
    std::string log_csv;
};

using ImageSource = std::function<Tensor(uint64_t)>;

// Returns mean loss over the final 10% of steps.
double train_vae(VAE& model, const VAETrainConfig& tc, const ImageSource& images);

// Mean decode(encode_mean(x)) PSNR in dB over held-out images ([0,1] scale).
double eval_roundtrip_psnr(const VAE& model, const ImageSource& images, int n);

// 1 / std of flattened posterior means over a sample of images; multiplies
// raw latents so the diffusion model sees roughly unit-scale inputs.
double estimate_latent_scale(const VAE& model, const ImageSource& images, int n);

}  // namespace patchwork::vae
