// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <json.hpp>

#include "patchwork/checkpoint.hpp"
#include "patchwork/nn.hpp"

namespace patchwork::unet {

struct UNetConfig {
    int latent_size = 16;
    int latent_channels = 4;
    int base = 48;        // channels at latent resolution
    int mid = 96;         // channels at half resolution
    int tdim = 64;        // sinusoidal timestep embedding width
    int heads = 4;
    int cond_dim = 48;    // cross-attention context dimension
    int cond_tokens = 64; // rows in a condition matrix

    int in_channels() const { return 2 * latent_channels + 1; }
    void validate() const;
    nlohmann::json to_json() const;
    static UNetConfig from_json(const nlohmann::json& j);
};

// Residual block with a timestep-embedding channel bias between the convs.
struct ResBlock {
    int in = 0, out = 0;
    nn::GroupNorm gn1, gn2;
    nn::Conv2d conv1, conv2, skip;
    nn::Linear temb;
    bool has_skip = false;

    ResBlock() = default;
    ResBlock(int in_ch, int out_ch, int tdim, Rng& rng);
    ag::Var forward(const ag::Var& x, const ag::Var& t_emb) const;
    void collect(const std::string& p, nn::NamedParams& np) const;
};

// Noise predictor over the concatenated [z_t; z0_masked; M_lat] input with
// cross-attention conditioning at half resolution.
class UNet {
public:
    UNet() = default;
    UNet(const UNetConfig& cfg, uint64_t init_seed);

    // x: [1, in_channels, ls, ls]; cond: [cond_tokens, cond_dim] or nullptr
    // for the learned null condition.
    ag::Var forward(const ag::Var& x, int t, const ag::Var* cond = nullptr) const;

    // convenience: packs inputs and returns the predicted noise [c, ls, ls]
    Tensor predict_eps(const Tensor& z_t, const Tensor& z0_masked, const Tensor& m_lat, int t,
                       const Tensor* cond = nullptr) const;
    ag::Var pack_input(const Tensor& z_t, const Tensor& z0_masked, const Tensor& m_lat) const;

    const UNetConfig& config() const { return cfg_; }
    const ag::Var& null_cond() const { return null_cond_; }
    nn::NamedParams params() const;
    Checkpoint to_checkpoint(int64_t step) const;
    static UNet from_checkpoint(const Checkpoint& ck);

private:
    UNetConfig cfg_;
    nn::Conv2d conv_in_, down_, conv_up_, conv_out_;
    ResBlock rb1_, rb2_, rb3_, rb4_, rb5_;
    nn::TransformerBlock xattn1_, xattn2_;
    nn::Linear t1_, t2_;
    nn::GroupNorm gn_out_;
    ag::Var null_cond_;
};

}  // namespace patchwork::unet
