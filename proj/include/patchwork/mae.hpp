// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <json.hpp>
#include <string>

#include "patchwork/checkpoint.hpp"
#include "patchwork/maskgen.hpp"
#include "patchwork/nn.hpp"

namespace patchwork::mae {

struct MAEConfig {
    int image_size = 64;
    int patch = 8;
    int enc_dim = 96;
    int enc_depth = 2;
    int dec_dim = 64;
    int dec_depth = 2;
    int heads = 4;
    bool norm_per_patch = false;  // normalize reconstruction targets per patch
    // "decoder_penultimate" (post-norm features before the prediction head)
    // or "decoder_input" (scattered tokens before the decoder blocks)
    std::string prior_tap = "decoder_penultimate";

    int grid() const { return image_size / patch; }
    int tokens() const { return grid() * grid(); }
    int patch_dim() const { return patch * patch * 3; }
    void validate() const;

    nlohmann::json to_json() const;
    static MAEConfig from_json(const nlohmann::json& j);
};

// Miniature masked auto-encoder: linear patch embedding, transformer
// encoder over visible patches only, transformer decoder over the full
// grid with a learned mask token.
class MAE {
public:
    MAE(const MAEConfig& cfg, uint64_t init_seed);

    struct ForwardResult {
        ag::Var loss;            // masked-patch MSE
        Tensor reconstruction;   // [3,H,W], every patch predicted
    };

    // `image` may be a param Var when gradients w.r.t. pixels are wanted.
    ForwardResult forward(const ag::Var& image, const maskgen::PatchMask& pm) const;
    ForwardResult forward(const Tensor& image, const maskgen::PatchMask& pm) const;

    // Full-grid token features for the prior; pm may have zero flags (full
    // image prior).
    Tensor extract_prior(const Tensor& masked_image, const maskgen::PatchMask& pm) const;

    // Ground truth pasted over visible patches.
    Tensor composite(const Tensor& image, const Tensor& reconstruction,
                     const maskgen::PatchMask& pm) const;

    const MAEConfig& config() const { return cfg_; }
    int prior_dim() const { return cfg_.dec_dim; }
    nn::NamedParams params() const;

    Checkpoint to_checkpoint(int64_t step) const;
    static MAE from_checkpoint(const Checkpoint& ck);

private:
    ag::Var token_features(const ag::Var& image, const maskgen::PatchMask& pm, bool stop_at_tap,
                           ag::Var* pred_out) const;

    MAEConfig cfg_;
    nn::Linear enc_embed_;
    ag::Var enc_pos_;
    std::vector<nn::TransformerBlock> enc_blocks_;
    nn::LayerNorm enc_norm_;
    nn::Linear dec_embed_;
    ag::Var mask_token_;
    ag::Var dec_pos_;
    std::vector<nn::TransformerBlock> dec_blocks_;
    nn::LayerNorm dec_norm_;
    nn::Linear pred_head_;
};

struct MAETrainConfig {
    int steps = 400;
    int batch = 8;
    double lr = 1e-3;
    uint64_t seed = 0;
    // pretrain: uniform random 75% patch masking
    // finetune: maskgen training mixture + patch-mask enlargement to 75%
    enum class Policy { pretrain_uniform, finetune_inpaint } policy = Policy::pretrain_uniform;
    maskgen::MaskMixtureConfig mask_cfg;
    double enlarge_ratio = 0.75;
    std::string log_csv;  // optional training-curve log (step,loss,lr)
};

using ImageSource = std::function<Tensor(uint64_t index)>;

// Returns the mean loss of the final 10% of steps.
double train_mae(MAE& model, const MAETrainConfig& tc, const ImageSource& images);

// Held-out masked-patch MSE under the fine-tuning mask policy.
double eval_masked_mse(const MAE& model, const MAETrainConfig& tc, const ImageSource& images,
                       int n_samples, uint64_t seed);

}  // namespace patchwork::mae
