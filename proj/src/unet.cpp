// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#include "patchwork/unet.hpp"

namespace patchwork::unet {

using ag::Var;

void UNetConfig::validate() const {
    if (latent_size % 2 != 0) throw std::invalid_argument("UNet: latent_size must be even");
    if (base % 8 != 0 || mid % 8 != 0)
        throw std::invalid_argument("UNet: channel counts must be divisible by the norm groups");
    if (mid % heads != 0) throw std::invalid_argument("UNet: mid not divisible by heads");
}

nlohmann::json UNetConfig::to_json() const {
    return {{"latent_size", latent_size}, {"latent_channels", latent_channels},
            {"base", base},               {"mid", mid},
            {"tdim", tdim},               {"heads", heads},
            {"cond_dim", cond_dim},       {"cond_tokens", cond_tokens}};
}

UNetConfig UNetConfig::from_json(const nlohmann::json& j) {
    UNetConfig c;
    c.latent_size = j.at("latent_size");
    c.latent_channels = j.at("latent_channels");
    c.base = j.at("base");
    c.mid = j.at("mid");
    c.tdim = j.at("tdim");
    c.heads = j.at("heads");
    c.cond_dim = j.at("cond_dim");
    c.cond_tokens = j.at("cond_tokens");
    return c;
}

ResBlock::ResBlock(int in_ch, int out_ch, int tdim, Rng& rng)
    : in(in_ch), out(out_ch),
      gn1(in_ch, 8), gn2(out_ch, 8),
      conv1(in_ch, out_ch, 3, 1, 1, rng),
      conv2(out_ch, out_ch, 3, 1, 1, rng),
      temb(tdim, out_ch, rng),
      has_skip(in_ch != out_ch) {
    if (has_skip) skip = nn::Conv2d(in_ch, out_ch, 1, 1, 0, rng);
}

Var ResBlock::forward(const Var& x, const Var& t_emb) const {
    Var h = conv1.forward(ag::silu(gn1.forward(x)));
    Var bias = ag::reshape(temb.forward(t_emb), {out});
    h = ag::add_channel_bias(h, bias);
    h = conv2.forward(ag::silu(gn2.forward(h)));
    return ag::add(h, has_skip ? skip.forward(x) : x);
}

void ResBlock::collect(const std::string& p, nn::NamedParams& np) const {
    gn1.collect(p + ".gn1", np);
    conv1.collect(p + ".conv1", np);
    temb.collect(p + ".temb", np);
    gn2.collect(p + ".gn2", np);
    conv2.collect(p + ".conv2", np);
    if (has_skip) skip.collect(p + ".skip", np);
}

UNet::UNet(const UNetConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(Rng::derive(init_seed, 0x07e7ULL));
    conv_in_ = nn::Conv2d(cfg_.in_channels(), cfg_.base, 3, 1, 1, rng);
    rb1_ = ResBlock(cfg_.base, cfg_.base, cfg_.tdim, rng);
    down_ = nn::Conv2d(cfg_.base, cfg_.mid, 3, 2, 1, rng);
    rb2_ = ResBlock(cfg_.mid, cfg_.mid, cfg_.tdim, rng);
    xattn1_ = nn::TransformerBlock(cfg_.mid, cfg_.heads, rng, cfg_.cond_dim);
    rb3_ = ResBlock(cfg_.mid, cfg_.mid, cfg_.tdim, rng);
    xattn2_ = nn::TransformerBlock(cfg_.mid, cfg_.heads, rng, cfg_.cond_dim);
    rb4_ = ResBlock(cfg_.mid, cfg_.mid, cfg_.tdim, rng);
    conv_up_ = nn::Conv2d(cfg_.mid, cfg_.base, 3, 1, 1, rng);
    rb5_ = ResBlock(2 * cfg_.base, cfg_.base, cfg_.tdim, rng);
    gn_out_ = nn::GroupNorm(cfg_.base, 8);
    // zero-init the final conv: the network starts by predicting zero noise
    conv_out_ = nn::Conv2d::zero_init(cfg_.base, cfg_.latent_channels, 3, 1, 1);
    t1_ = nn::Linear(cfg_.tdim, cfg_.tdim, rng);
    t2_ = nn::Linear(cfg_.tdim, cfg_.tdim, rng);
    null_cond_ = nn::make_weight(rng, {cfg_.cond_tokens, cfg_.cond_dim}, 0.02);
}

Var UNet::forward(const Var& x, int t, const Var* cond) const {
    if (x->val.dims() != Shape{1, cfg_.in_channels(), cfg_.latent_size, cfg_.latent_size})
        throw std::invalid_argument("UNet: bad input shape " + shape_str(x->val.dims()));
    const Var& c = cond ? *cond : null_cond_;
    if (c->val.dims() != Shape{cfg_.cond_tokens, cfg_.cond_dim})
        throw std::invalid_argument("UNet: bad condition shape " + shape_str(c->val.dims()));

    Var te = ag::reshape(ag::constant(nn::timestep_embedding(t, cfg_.tdim)), {1, cfg_.tdim});
    te = t2_.forward(ag::silu(t1_.forward(te)));

    int ls = cfg_.latent_size, hs = ls / 2;
    Var x0 = conv_in_.forward(x);
    Var x1 = rb1_.forward(x0, te);
    Var h = down_.forward(x1);
    h = rb2_.forward(h, te);
    Var rows = ag::chw_to_rows(h);
    h = ag::rows_to_chw(xattn1_.forward_cross(rows, c), cfg_.mid, hs, hs);
    h = rb3_.forward(h, te);
    rows = ag::chw_to_rows(h);
    h = ag::rows_to_chw(xattn2_.forward_cross(rows, c), cfg_.mid, hs, hs);
    h = rb4_.forward(h, te);
    h = conv_up_.forward(ag::upsample_nearest2(h));
    Var cat = ag::rows_to_chw(
        ag::concat_cols({ag::chw_to_rows(h), ag::chw_to_rows(x1)}), 2 * cfg_.base, ls, ls);
    h = rb5_.forward(cat, te);
    return conv_out_.forward(ag::silu(gn_out_.forward(h)));
}

Var UNet::pack_input(const Tensor& z_t, const Tensor& z0_masked, const Tensor& m_lat) const {
    int c = cfg_.latent_channels, ls = cfg_.latent_size;
    if (z_t.dims() != Shape{c, ls, ls} || z0_masked.dims() != Shape{c, ls, ls})
        throw std::invalid_argument("UNet: latent shape mismatch");
    if (m_lat.dims() != Shape{ls, ls})
        throw std::invalid_argument("UNet: latent mask shape mismatch");
    Tensor packed({1, cfg_.in_channels(), ls, ls});
    int64_t plane = static_cast<int64_t>(ls) * ls;
    for (int64_t i = 0; i < c * plane; ++i) packed.at(i) = z_t.at(i);
    for (int64_t i = 0; i < c * plane; ++i) packed.at(c * plane + i) = z0_masked.at(i);
    for (int64_t i = 0; i < plane; ++i) packed.at(2 * c * plane + i) = m_lat.at(i);
    return ag::constant(std::move(packed));
}

Tensor UNet::predict_eps(const Tensor& z_t, const Tensor& z0_masked, const Tensor& m_lat, int t,
                         const Tensor* cond) const {
    Var c;
    if (cond) c = ag::constant(*cond);
    Var out = forward(pack_input(z_t, z0_masked, m_lat), t, cond ? &c : nullptr);
    int ch = cfg_.latent_channels, ls = cfg_.latent_size;
    Tensor eps({ch, ls, ls}, out->val.array());
    if (!eps.all_finite()) throw std::runtime_error("UNet produced non-finite noise estimate");
    return eps;
}

nn::NamedParams UNet::params() const {
    nn::NamedParams np;
    conv_in_.collect("conv_in", np);
    rb1_.collect("rb1", np);
    down_.collect("down", np);
    rb2_.collect("rb2", np);
    xattn1_.collect("xattn1", np);
    rb3_.collect("rb3", np);
    xattn2_.collect("xattn2", np);
    rb4_.collect("rb4", np);
    conv_up_.collect("conv_up", np);
    rb5_.collect("rb5", np);
    gn_out_.collect("gn_out", np);
    conv_out_.collect("conv_out", np);
    t1_.collect("t1", np);
    t2_.collect("t2", np);
    np.emplace_back("null_cond", null_cond_);
    return np;
}

Checkpoint UNet::to_checkpoint(int64_t step) const {
    return checkpoint_from_params("unet", cfg_.to_json(), step, params());
}

UNet UNet::from_checkpoint(const Checkpoint& ck) {
    if (ck.module_id != "unet")
        throw std::runtime_error("expected a unet checkpoint, got '" + ck.module_id + "'");
    UNet m(UNetConfig::from_json(ck.config), 0);
    nn::NamedParams np = m.params();
    load_params(np, ck);
    return m;
}

}  // namespace patchwork::unet
