// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "patchwork/backbone.hpp"
#include "patchwork/mae.hpp"

namespace patchwork::align {

struct AlignmentConfig {
    int in_dim = 64;     // prior feature width
    int cond_dim = 48;   // backbone cross-attention width
    int tokens = 64;     // token count, preserved end to end
    int num_blocks = 4;
    int heads = 4;
    // linear_only: projection only; attn1: one self-attention block;
    // self_x4: num_blocks self-attention blocks; cross_x4: learned queries
    // cross-attending to the projected prior in every block
    std::string variant = "self_x4";
    bool positional = true;  // learnable positional encodings on the tokens
    double p_start = 1.0;    // full-image-prior probability schedule
    double p_end = 0.1;
    int p_decay_steps = 2000;

    int effective_blocks() const;
    void validate() const;
    nlohmann::json to_json() const;
    static AlignmentConfig from_json(const nlohmann::json& j);
};

// Linear decay from p_start to p_end over p_decay_steps, then constant.
double p_schedule(int64_t step, const AlignmentConfig& cfg);

// Maps prior tokens into the backbone's condition space.
class Alignment {
public:
    Alignment(const AlignmentConfig& cfg, uint64_t init_seed);

    ag::Var align_graph(const ag::Var& prior) const;
    Tensor align(const Tensor& prior) const;

    // square projection becomes the identity; requires in_dim == cond_dim
    void init_identity();

    const AlignmentConfig& config() const { return cfg_; }
    nn::NamedParams params() const;
    Checkpoint to_checkpoint(int64_t step) const;
    static Alignment from_checkpoint(const Checkpoint& ck);

private:
    AlignmentConfig cfg_;
    nn::Linear proj_;
    ag::Var pos_;      // empty unless cfg.positional
    ag::Var queries_;  // cross variant only
    std::vector<nn::TransformerBlock> blocks_;
};

struct AlignTrainConfig {
    int steps = 300;
    int batch = 4;
    double lr = 1e-4;  // conservative default; the aggressive published-style
                       // rate is available via the CLI flag
    uint64_t seed = 0;
    maskgen::MaskMixtureConfig mask_cfg;
    std::string log_csv;
};

using ImageSource = std::function<Tensor(uint64_t)>;

// Trains the alignment module against the frozen prior network and frozen
// backbone. Both upstream models are frozen in place; a gradient reaching
// either is a hard error.
backbone::TrainCurve train_alignment(Alignment& model, mae::MAE& prior_net,
                                     backbone::Backbone& bb, const AlignTrainConfig& tc,
                                     const ImageSource& images);

// Prior-extraction input policy shared by training and inference: the full
// image with an all-visible patch mask, or the masked image with the pixel
// mask lifted to patch granularity (keeping at least one patch visible).
maskgen::PatchMask prior_patch_mask(const Tensor& mask, int patch, bool full_image);

}  // namespace patchwork::align
