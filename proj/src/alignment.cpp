// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#include "patchwork/alignment.hpp"

#include <fstream>

#include "patchwork/image.hpp"

namespace patchwork::align {

using ag::Var;

int AlignmentConfig::effective_blocks() const {
    if (variant == "linear_only") return 0;
    if (variant == "attn1") return 1;
    return num_blocks;
}

void AlignmentConfig::validate() const {
    if (variant != "linear_only" && variant != "attn1" && variant != "self_x4" &&
        variant != "cross_x4")
        throw std::invalid_argument("alignment: unknown variant '" + variant + "'");
    if (num_blocks < 0) throw std::invalid_argument("alignment: num_blocks < 0");
    if (effective_blocks() > 0 && cond_dim % heads != 0)
        throw std::invalid_argument("alignment: cond_dim not divisible by heads");
    if (!(p_start >= p_end && p_end >= 0.0 && p_start <= 1.0))
        throw std::invalid_argument("alignment: bad p schedule bounds");
    if (p_decay_steps < 1) throw std::invalid_argument("alignment: p_decay_steps < 1");
}

nlohmann::json AlignmentConfig::to_json() const {
    return {{"in_dim", in_dim},       {"cond_dim", cond_dim},
            {"tokens", tokens},       {"num_blocks", num_blocks},
            {"heads", heads},         {"variant", variant},
            {"positional", positional},
            {"p_start", p_start},     {"p_end", p_end},
            {"p_decay_steps", p_decay_steps}};
}

AlignmentConfig AlignmentConfig::from_json(const nlohmann::json& j) {
    AlignmentConfig c;
    c.in_dim = j.at("in_dim");
    c.cond_dim = j.at("cond_dim");
    c.tokens = j.at("tokens");
    c.num_blocks = j.at("num_blocks");
    c.heads = j.at("heads");
    c.variant = j.at("variant");
    c.positional = j.at("positional");
    c.p_start = j.at("p_start");
    c.p_end = j.at("p_end");
    c.p_decay_steps = j.at("p_decay_steps");
    return c;
}

double p_schedule(int64_t step, const AlignmentConfig& cfg) {
    if (step >= cfg.p_decay_steps) return cfg.p_end;
    double f = static_cast<double>(step) / cfg.p_decay_steps;
    double p = cfg.p_start + (cfg.p_end - cfg.p_start) * f;
    return std::min(cfg.p_start, std::max(cfg.p_end, p));
}

Alignment::Alignment(const AlignmentConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(Rng::derive(init_seed, 0xa115ULL));
    proj_ = nn::Linear(cfg_.in_dim, cfg_.cond_dim, rng);
    bool cross = cfg_.variant == "cross_x4";
    // positional encodings only make sense ahead of attention blocks
    if (cfg_.positional && !cross && cfg_.effective_blocks() > 0)
        pos_ = nn::make_weight(rng, {cfg_.tokens, cfg_.cond_dim}, 0.02);
    if (cross) queries_ = nn::make_weight(rng, {cfg_.tokens, cfg_.cond_dim}, 0.02);
    for (int i = 0; i < cfg_.effective_blocks(); ++i)
        blocks_.emplace_back(cfg_.cond_dim, cfg_.heads, rng,
                             cross ? cfg_.cond_dim : -1);
}

void Alignment::init_identity() {
    if (cfg_.in_dim != cfg_.cond_dim)
        throw std::logic_error("alignment: identity init needs a square projection");
    proj_.w->val.array().setZero();
    for (int i = 0; i < cfg_.in_dim; ++i) proj_.w->val.mat()(i, i) = 1.0;
    proj_.b->val.array().setZero();
}

Var Alignment::align_graph(const Var& prior) const {
    if (prior->val.dims() != Shape{cfg_.tokens, cfg_.in_dim})
        throw std::invalid_argument("alignment: prior shape " + shape_str(prior->val.dims()) +
                                    " does not match config");
    Var x = proj_.forward(prior);
    if (cfg_.variant == "cross_x4") {
        Var q = queries_;
        for (const auto& blk : blocks_) q = blk.forward_cross(q, x);
        return q;
    }
    if (pos_) x = ag::add(x, pos_);
    for (const auto& blk : blocks_) x = blk.forward(x);
    return x;
}

Tensor Alignment::align(const Tensor& prior) const {
    Tensor out = align_graph(ag::constant(prior))->val;
    if (!out.all_finite()) throw std::runtime_error("alignment produced non-finite condition");
    return out;
}

nn::NamedParams Alignment::params() const {
    nn::NamedParams np;
    proj_.collect("proj", np);
    if (pos_) np.emplace_back("pos", pos_);
    if (queries_) np.emplace_back("queries", queries_);
    for (size_t i = 0; i < blocks_.size(); ++i)
        blocks_[i].collect("block" + std::to_string(i), np);
    return np;
}

Checkpoint Alignment::to_checkpoint(int64_t step) const {
    return checkpoint_from_params("alignment", cfg_.to_json(), step, params());
}

Alignment Alignment::from_checkpoint(const Checkpoint& ck) {
    if (ck.module_id != "alignment")
        throw std::runtime_error("expected an alignment checkpoint, got '" + ck.module_id + "'");
    Alignment m(AlignmentConfig::from_json(ck.config), 0);
    nn::NamedParams np = m.params();
    load_params(np, ck);
    return m;
}

maskgen::PatchMask prior_patch_mask(const Tensor& mask, int patch, bool full_image) {
    int grid = mask.dim(0) / patch;
    if (full_image) {
        maskgen::PatchMask pm;
        pm.grid_h = pm.grid_w = grid;
        pm.flags.assign(static_cast<size_t>(grid) * grid, 0);
        return pm;
    }
    maskgen::PatchMask pm = maskgen::to_patch_mask(mask, patch);
    if (static_cast<int>(pm.count()) == pm.size()) pm.flags[0] = 0;
    return pm;
}

backbone::TrainCurve train_alignment(Alignment& model, mae::MAE& prior_net,
                                     backbone::Backbone& bb, const AlignTrainConfig& tc,
                                     const ImageSource& images) {
    nn::NamedParams prior_np = prior_net.params();
    nn::freeze(prior_np);
    bb.freeze();
    uint64_t prior_hash = params_hash(prior_np);
    uint64_t bb_hash = bb.param_hash();

    nn::NamedParams np = model.params();
    std::vector<Var> ps = nn::values(np);
    nn::AdamW opt(ps, tc.lr, 0.9, 0.999, 1e-8, 1e-5);
    Rng rng(Rng::derive(tc.seed, 0xa119ULL));
    std::ofstream log;
    if (!tc.log_csv.empty()) {
        log.open(tc.log_csv);
        log << "step,loss,p,lr\n";
    }
    const NoiseSchedule& sched = bb.schedule();
    int hw = bb.vae().config().image_size;
    int c = bb.vae().config().latent_channels, ls = bb.vae().config().latent_size();
    int patch = prior_net.config().patch;
    backbone::TrainCurve curve;
    int head_end = std::max(1, tc.steps / 10);
    int tail_start = tc.steps - std::max(1, tc.steps / 10);
    int head_n = 0, tail_n = 0;
    uint64_t img_idx = 0;
    for (int step = 0; step < tc.steps; ++step) {
        opt.zero_grad();
        double p = p_schedule(step, model.config());
        std::vector<Var> losses;
        for (int b = 0; b < tc.batch; ++b) {
            Tensor im = images(img_idx++);
            Tensor mask = maskgen::sample_training_mask(tc.mask_cfg, rng, hw, hw);
            Tensor masked = img::apply_mask(im, mask);
            bool full = rng.uniform() < p;
            maskgen::PatchMask pm = prior_patch_mask(mask, patch, full);
            Tensor prior = prior_net.extract_prior(full ? im : masked, pm);
            Var cond = model.align_graph(ag::constant(prior));

            Tensor z0 = bb.encode_latent(im);
            Tensor z0m = bb.encode_latent(masked);
            Tensor m_lat = bb.latent_mask(mask);
            int t = rng.uniform_int(0, sched.steps - 1);
            Tensor eps({c, ls, ls});
            for (int64_t i = 0; i < eps.numel(); ++i) eps.at(i) = rng.normal();
            Tensor z_t = sched.add_noise(z0, eps, t);
            Var pred = bb.unet().forward(bb.unet().pack_input(z_t, z0m, m_lat), t, &cond);
            losses.push_back(ag::mse_loss(pred, Tensor({1, c, ls, ls}, eps.array())));
        }
        Var total = losses[0];
        for (size_t i = 1; i < losses.size(); ++i) total = ag::add(total, losses[i]);
        total = ag::mul_scalar(total, 1.0 / losses.size());
        double loss_val = total->val.item();
        if (!std::isfinite(loss_val))
            throw std::runtime_error("alignment training diverged (non-finite loss)");
        ag::backward(total);
        opt.step();
        if (log.is_open()) log << step << "," << loss_val << "," << p << "," << opt.lr() << "\n";
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

    // freeze contract: any gradient on the frozen models is a hard error
    for (const auto& [name, par] : prior_np)
        if (par->grad.numel() != 0)
            throw std::logic_error("gradient reached frozen prior parameter " + name);
    if (params_hash(prior_np) != prior_hash)
        throw std::logic_error("frozen prior network changed during alignment training");
    if (bb.param_hash() != bb_hash)
        throw std::logic_error("frozen backbone changed during alignment training");
    return curve;
}

}  // namespace patchwork::align
