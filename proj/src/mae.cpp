// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#include "patchwork/mae.hpp"

#include <cmath>
#include <fstream>

namespace patchwork::mae {

using ag::Var;

void MAEConfig::validate() const {
    if (image_size % patch != 0) throw std::invalid_argument("MAE: image_size not divisible by patch");
    if (enc_dim % heads != 0 || dec_dim % heads != 0)
        throw std::invalid_argument("MAE: dims not divisible by heads");
    if (prior_tap != "decoder_penultimate" && prior_tap != "decoder_input")
        throw std::invalid_argument("MAE: unknown prior_tap '" + prior_tap + "'");
}

nlohmann::json MAEConfig::to_json() const {
    return {{"image_size", image_size}, {"patch", patch},       {"enc_dim", enc_dim},
            {"enc_depth", enc_depth},   {"dec_dim", dec_dim},   {"dec_depth", dec_depth},
            {"heads", heads},           {"norm_per_patch", norm_per_patch},
            {"prior_tap", prior_tap}};
}

MAEConfig MAEConfig::from_json(const nlohmann::json& j) {
    MAEConfig c;
    c.image_size = j.at("image_size");
    c.patch = j.at("patch");
    c.enc_dim = j.at("enc_dim");
    c.enc_depth = j.at("enc_depth");
    c.dec_dim = j.at("dec_dim");
    c.dec_depth = j.at("dec_depth");
    c.heads = j.at("heads");
    c.norm_per_patch = j.at("norm_per_patch");
    c.prior_tap = j.at("prior_tap");
    return c;
}

MAE::MAE(const MAEConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(Rng::derive(init_seed, 0x3aeULL));
    int l = cfg_.tokens();
    enc_embed_ = nn::Linear(cfg_.patch_dim(), cfg_.enc_dim, rng);
    enc_pos_ = nn::make_weight(rng, {l, cfg_.enc_dim}, 0.02);
    for (int i = 0; i < cfg_.enc_depth; ++i) enc_blocks_.emplace_back(cfg_.enc_dim, cfg_.heads, rng);
    enc_norm_ = nn::LayerNorm(cfg_.enc_dim);
    dec_embed_ = nn::Linear(cfg_.enc_dim, cfg_.dec_dim, rng);
    mask_token_ = nn::make_weight(rng, {cfg_.dec_dim}, 0.02);
    dec_pos_ = nn::make_weight(rng, {l, cfg_.dec_dim}, 0.02);
    for (int i = 0; i < cfg_.dec_depth; ++i) dec_blocks_.emplace_back(cfg_.dec_dim, cfg_.heads, rng);
    dec_norm_ = nn::LayerNorm(cfg_.dec_dim);
    pred_head_ = nn::Linear(cfg_.dec_dim, cfg_.patch_dim(), rng);
}

nn::NamedParams MAE::params() const {
    nn::NamedParams np;
    enc_embed_.collect("enc_embed", np);
    np.emplace_back("enc_pos", enc_pos_);
    for (size_t i = 0; i < enc_blocks_.size(); ++i)
        enc_blocks_[i].collect("enc_block" + std::to_string(i), np);
    enc_norm_.collect("enc_norm", np);
    dec_embed_.collect("dec_embed", np);
    np.emplace_back("mask_token", mask_token_);
    np.emplace_back("dec_pos", dec_pos_);
    for (size_t i = 0; i < dec_blocks_.size(); ++i)
        dec_blocks_[i].collect("dec_block" + std::to_string(i), np);
    dec_norm_.collect("dec_norm", np);
    pred_head_.collect("pred_head", np);
    return np;
}

Var MAE::token_features(const Var& image, const maskgen::PatchMask& pm, bool stop_at_tap,
                        Var* pred_out) const {
    if (pm.size() != cfg_.tokens())
        throw std::invalid_argument("MAE: patch mask size " + std::to_string(pm.size()) +
                                    " does not match token grid " + std::to_string(cfg_.tokens()));
    std::vector<int> visible = pm.visible_indices();
    if (visible.empty())
        throw std::invalid_argument("MAE: encoder needs at least one visible patch");

    Var tokens = ag::image_to_patches(image, cfg_.patch);
    // the encoder path only ever touches visible rows
    Var vis_tokens = ag::gather_rows(tokens, visible);
    Var x = ag::add(enc_embed_.forward(vis_tokens), ag::gather_rows(enc_pos_, visible));
    for (const auto& blk : enc_blocks_) x = blk.forward(x);
    x = enc_norm_.forward(x);

    Var d = dec_embed_.forward(x);
    Var base = ag::broadcast_row(mask_token_, cfg_.tokens());
    Var full = ag::add(ag::scatter_rows(base, d, visible), dec_pos_);
    if (stop_at_tap && cfg_.prior_tap == "decoder_input") return full;
    for (const auto& blk : dec_blocks_) full = blk.forward(full);
    full = dec_norm_.forward(full);
    if (stop_at_tap) return full;
    Var pred = pred_head_.forward(full);
    if (pred_out) *pred_out = pred;
    return full;
}

MAE::ForwardResult MAE::forward(const Var& image, const maskgen::PatchMask& pm) const {
    std::vector<int> masked = pm.masked_indices();
    if (masked.empty())
        throw std::invalid_argument("MAE: loss needs at least one masked patch");
    Var pred;
    token_features(image, pm, false, &pred);

    // targets are detached: the loss sees masked pixels only as constants
    Tensor target_full = ag::image_to_patches(ag::constant(image->val), cfg_.patch)->val;
    Tensor target({static_cast<int>(masked.size()), cfg_.patch_dim()});
    for (size_t i = 0; i < masked.size(); ++i)
        target.mat().row(static_cast<int>(i)) = target_full.mat().row(masked[i]);
    if (cfg_.norm_per_patch) {
        for (int r = 0; r < target.dim(0); ++r) {
            double m = target.mat().row(r).mean();
            double sd = std::sqrt((target.mat().row(r).array() - m).square().mean() + 1e-6);
            target.mat().row(r) = ((target.mat().row(r).array() - m) / sd).matrix();
        }
    }
    Var pred_masked = ag::gather_rows(pred, masked);
    Var loss = ag::mse_loss(pred_masked, target);

    ForwardResult res;
    res.loss = loss;
    res.reconstruction =
        ag::patches_to_image(ag::constant(pred->val), 3, cfg_.image_size, cfg_.image_size,
                             cfg_.patch)->val;
    return res;
}

MAE::ForwardResult MAE::forward(const Tensor& image, const maskgen::PatchMask& pm) const {
    return forward(ag::constant(image), pm);
}

Tensor MAE::extract_prior(const Tensor& masked_image, const maskgen::PatchMask& pm) const {
    if (masked_image.dim(1) != cfg_.image_size || masked_image.dim(2) != cfg_.image_size)
        throw std::invalid_argument("MAE: image size does not match checkpoint config");
    Var feats = token_features(ag::constant(masked_image), pm, true, nullptr);
    if (!feats->val.all_finite()) throw std::runtime_error("MAE prior contains non-finite values");
    return feats->val;
}

Tensor MAE::composite(const Tensor& image, const Tensor& reconstruction,
                      const maskgen::PatchMask& pm) const {
    int p = cfg_.patch, hw = cfg_.image_size;
    Tensor out = reconstruction;
    for (int gy = 0; gy < pm.grid_h; ++gy)
        for (int gx = 0; gx < pm.grid_w; ++gx) {
            if (pm.flags[static_cast<size_t>(gy) * pm.grid_w + gx]) continue;
            for (int c = 0; c < 3; ++c)
                for (int y = gy * p; y < (gy + 1) * p; ++y)
                    for (int x = gx * p; x < (gx + 1) * p; ++x)
                        out.at((static_cast<int64_t>(c) * hw + y) * hw + x) =
                            image.at((static_cast<int64_t>(c) * hw + y) * hw + x);
        }
    return out;
}

Checkpoint MAE::to_checkpoint(int64_t step) const {
    return checkpoint_from_params("mae", cfg_.to_json(), step, params());
}

MAE MAE::from_checkpoint(const Checkpoint& ck) {
    if (ck.module_id != "mae")
        throw std::runtime_error("expected a mae checkpoint, got '" + ck.module_id + "'");
    MAE m(MAEConfig::from_json(ck.config), 0);
    nn::NamedParams np = m.params();
    load_params(np, ck);
    return m;
}

namespace {

maskgen::PatchMask sample_policy_mask(const MAETrainConfig& tc, const MAEConfig& mc, Rng& rng) {
    if (tc.policy == MAETrainConfig::Policy::pretrain_uniform) {
        maskgen::PatchMask pm;
        pm.grid_h = pm.grid_w = mc.grid();
        pm.flags.assign(static_cast<size_t>(pm.size()), 0);
        return maskgen::enlarge_to_ratio(pm, tc.enlarge_ratio, rng);
    }
    Tensor m = maskgen::sample_training_mask(tc.mask_cfg, rng, mc.image_size, mc.image_size);
    maskgen::PatchMask pm = maskgen::to_patch_mask(m, mc.patch);
    if (pm.count() == 0) pm.flags[0] = 1;  // degenerate empty pixel mask
    pm = maskgen::enlarge_to_ratio(pm, tc.enlarge_ratio, rng);
    if (static_cast<int>(pm.count()) == pm.size()) pm.flags[0] = 0;  // keep one visible token
    return pm;
}

}  // namespace

double train_mae(MAE& model, const MAETrainConfig& tc, const ImageSource& images) {
    nn::NamedParams np = model.params();
    std::vector<Var> ps = nn::values(np);
    nn::AdamW opt(ps, tc.lr, 0.9, 0.999, 1e-8, 1e-4);
    Rng rng(Rng::derive(tc.seed, 0x3ae7ULL));
    std::ofstream log;
    if (!tc.log_csv.empty()) {
        log.open(tc.log_csv);
        log << "step,loss,lr\n";
    }
    double tail_sum = 0.0;
    int tail_n = 0;
    int tail_start = tc.steps - std::max(1, tc.steps / 10);
    uint64_t img_idx = 0;
    for (int step = 0; step < tc.steps; ++step) {
        opt.zero_grad();
        double loss_val = 0.0;
        std::vector<Var> losses;
        for (int b = 0; b < tc.batch; ++b) {
            Tensor im = images(img_idx++);
            maskgen::PatchMask pm = sample_policy_mask(tc, model.config(), rng);
            auto res = model.forward(im, pm);
            losses.push_back(res.loss);
        }
        Var total = losses[0];
        for (size_t i = 1; i < losses.size(); ++i) total = ag::add(total, losses[i]);
        total = ag::mul_scalar(total, 1.0 / losses.size());
        loss_val = total->val.item();
        if (!std::isfinite(loss_val)) throw std::runtime_error("MAE training diverged (non-finite loss)");
        ag::backward(total);
        opt.step();
        if (log.is_open()) log << step << "," << loss_val << "," << opt.lr() << "\n";
        if (step >= tail_start) {
            tail_sum += loss_val;
            ++tail_n;
        }
    }
    return tail_n ? tail_sum / tail_n : 0.0;
}

double eval_masked_mse(const MAE& model, const MAETrainConfig& tc, const ImageSource& images,
                       int n_samples, uint64_t seed) {
    Rng rng(Rng::derive(seed, 0xe7a1ULL));
    double sum = 0.0;
    for (int i = 0; i < n_samples; ++i) {
        Tensor im = images(static_cast<uint64_t>(i));
        maskgen::PatchMask pm = sample_policy_mask(tc, model.config(), rng);
        auto res = model.forward(im, pm);
        sum += res.loss->val.item();
    }
    return sum / n_samples;
}

}  // namespace patchwork::mae
