// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "patchwork/alignment.hpp"
#include "patchwork/config.hpp"
#include "patchwork/decoder.hpp"
#include "patchwork/metrics.hpp"

namespace patchwork::pipe {

// One run directory holds one resolution profile and one seed; stages write
// checkpoints plus provenance JSON into it.
struct RunConfig {
    std::string out_dir = "runs/default";
    uint64_t seed = 0;
    int image_size = 64;  // desk profile; full-scale 512 is rejected
    int n_images = 64;    // procedural training pool size

    // diffusion schedule
    int schedule_steps = 1000;
    double beta_start = 1e-4, beta_end = 2e-2;

    // stage budgets
    int vae_steps = 600, vae_batch = 4;
    double vae_lr = 1e-3;
    int backbone_steps = 400, backbone_batch = 4;
    double backbone_lr = 1e-3;
    int mae_pretrain_steps = 200, mae_finetune_steps = 200, mae_batch = 8;
    double mae_lr = 1e-3;
    int align_steps = 300, align_batch = 4;
    double align_lr = 1e-4;
    std::string align_variant = "self_x4";
    int decoder_steps = 300, decoder_batch = 4;
    double decoder_lr = 1e-3;
    double decoder_masked_weight = 2.0;

    // model widths (desk-scale defaults)
    int vae_latent_channels = 4, vae_ch_full = 16, vae_ch_half = 48, vae_ch_quarter = 64;
    double vae_kl_weight = 1e-3;
    int unet_base = 48, unet_mid = 96, unet_tdim = 64, unet_heads = 4, unet_cond_dim = 48;
    int mae_patch = 8, mae_enc_dim = 96, mae_enc_depth = 2, mae_dec_dim = 64, mae_dec_depth = 2,
        mae_heads = 4;
    int align_blocks = 4, align_heads = 4;

    backbone::SamplerConfig sampler;

    static RunConfig from_kv(const KvConfig& kv);
    void validate() const;

    vae::VAEConfig vae_config() const;
    unet::UNetConfig unet_config() const;
    mae::MAEConfig mae_config() const;
    align::AlignmentConfig align_config() const;

    // deterministic procedural training pool
    Tensor train_image(uint64_t index) const;

    std::string checkpoint_path(const std::string& stage) const;
};

// Stages: "vae", "backbone", "mae", "alignment", "decoder". Runs exactly one
// stage, enforcing the dependency DAG and the frozen-backbone record; returns
// the checkpoint path. A lock file serializes stages per run directory.
std::string run_stage(const RunConfig& cfg, const std::string& stage);

struct InpaintOptions {
    backbone::SamplerConfig sampler;
    bool paste_unmasked = false;
};

// Masked image -> prior -> condition -> DDIM -> conditioned decode. Writes
// the PNG plus <out>.json provenance (seed, steps, checkpoint hashes).
std::string inpaint(const RunConfig& cfg, const std::string& image_path,
                    const std::string& mask_path, const std::string& out_path,
                    const InpaintOptions& opt);

struct AblationRow {
    std::string name;
    std::map<std::string, double> metrics;
};

struct AblationReport {
    std::string preset;
    uint64_t seed = 0;
    std::vector<AblationRow> rows;
};

// Presets: "alignment" (four condition-adapter variants under the shared
// frozen backbone) and "decoder" (vanilla / color-aug-only / fully trained).
// Every variant uses identical seeds and data; report written as JSON + CSV.
AblationReport ablate(const RunConfig& cfg, const std::string& preset);

// Builds a procedural eval set (4 styles x per_source_k records), inpaints
// every record, scores the outputs, and writes report.json / report.csv
// under bench_dir. Deterministic for a fixed RunConfig.
met::MetricReport benchmark(const RunConfig& cfg, int per_source_k, const std::string& bench_dir);

}  // namespace patchwork::pipe
