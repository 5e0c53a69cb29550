// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "patchwork/autograd.hpp"
#include "patchwork/rng.hpp"

namespace patchwork::nn {

using ag::Var;

using NamedParams = std::vector<std::pair<std::string, Var>>;

inline Var make_weight(Rng& rng, Shape dims, double std) {
    Tensor t(dims);
    for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.normal() * std;
    return ag::param(std::move(t));
}

inline Var make_zeros_param(Shape dims) { return ag::param(Tensor(std::move(dims))); }
inline Var make_const_param(Shape dims, double v) { return ag::param(Tensor::full(std::move(dims), v)); }

struct Linear {
    int in = 0, out = 0;
    Var w, b;

    Linear() = default;
    Linear(int in_dim, int out_dim, Rng& rng) : in(in_dim), out(out_dim) {
        w = make_weight(rng, {in, out}, 1.0 / std::sqrt(static_cast<double>(in)));
        b = make_zeros_param({out});
    }
    Var forward(const Var& x) const { return ag::add_bias_rows(ag::matmul(x, w), b); }
    void collect(const std::string& p, NamedParams& np) const {
        np.emplace_back(p + ".w", w);
        np.emplace_back(p + ".b", b);
    }
};

struct LayerNorm {
    Var g, b;
    LayerNorm() = default;
    explicit LayerNorm(int dim) {
        g = make_const_param({dim}, 1.0);
        b = make_zeros_param({dim});
    }
    Var forward(const Var& x) const { return ag::layer_norm(x, g, b); }
    void collect(const std::string& p, NamedParams& np) const {
        np.emplace_back(p + ".g", g);
        np.emplace_back(p + ".b", b);
    }
};

struct Conv2d {
    int in = 0, out = 0, k = 3, stride = 1, pad = 1;
    Var w, b;

    Conv2d() = default;
    Conv2d(int in_ch, int out_ch, int kernel, int stride_, int pad_, Rng& rng)
        : in(in_ch), out(out_ch), k(kernel), stride(stride_), pad(pad_) {
        w = make_weight(rng, {out, in, k, k}, std::sqrt(2.0 / (in * k * k)));
        b = make_zeros_param({out});
    }
    static Conv2d zero_init(int in_ch, int out_ch, int kernel, int stride_, int pad_) {
        Conv2d c;
        c.in = in_ch;
        c.out = out_ch;
        c.k = kernel;
        c.stride = stride_;
        c.pad = pad_;
        c.w = make_zeros_param({out_ch, in_ch, kernel, kernel});
        c.b = make_zeros_param({out_ch});
        return c;
    }
    Var forward(const Var& x) const { return ag::conv2d(x, w, b, stride, pad); }
    void collect(const std::string& p, NamedParams& np) const {
        np.emplace_back(p + ".w", w);
        np.emplace_back(p + ".b", b);
    }
};

struct GroupNorm {
    int groups = 8;
    Var g, b;
    GroupNorm() = default;
    GroupNorm(int channels, int groups_) : groups(groups_) {
        g = make_const_param({channels}, 1.0);
        b = make_zeros_param({channels});
    }
    Var forward(const Var& x) const { return ag::group_norm(x, groups, g, b); }
    void collect(const std::string& p, NamedParams& np) const {
        np.emplace_back(p + ".g", g);
        np.emplace_back(p + ".b", b);
    }
};

// Multi-head attention over token matrices [N, D]; cross-attention when a
// context is supplied (keys/values from ctx).
struct MultiHeadAttention {
    int dim = 0, heads = 1, ctx_dim = 0;
    Linear q, k, v, o;

    MultiHeadAttention() = default;
    MultiHeadAttention(int d, int h, Rng& rng, int ctx_d = -1)
        : dim(d), heads(h), ctx_dim(ctx_d < 0 ? d : ctx_d) {
        q = Linear(dim, dim, rng);
        k = Linear(ctx_dim, dim, rng);
        v = Linear(ctx_dim, dim, rng);
        o = Linear(dim, dim, rng);
    }
    Var forward(const Var& x, const Var& ctx) const;
    Var forward(const Var& x) const { return forward(x, x); }
    void collect(const std::string& p, NamedParams& np) const {
        q.collect(p + ".q", np);
        k.collect(p + ".k", np);
        v.collect(p + ".v", np);
        o.collect(p + ".o", np);
    }
};

// Pre-norm transformer block: x + attn(ln1 x), then x + mlp(ln2 x).
struct TransformerBlock {
    LayerNorm ln1, ln2;
    MultiHeadAttention attn;
    Linear fc1, fc2;

    TransformerBlock() = default;
    TransformerBlock(int dim, int heads, Rng& rng, int ctx_dim = -1)
        : ln1(dim), ln2(dim), attn(dim, heads, rng, ctx_dim),
          fc1(dim, 4 * dim, rng), fc2(4 * dim, dim, rng) {}

    Var forward(const Var& x) const {
        Var h = ag::add(x, attn.forward(ln1.forward(x)));
        return ag::add(h, fc2.forward(ag::silu(fc1.forward(ln2.forward(h)))));
    }
    // cross variant: queries from x, keys/values from ctx
    Var forward_cross(const Var& x, const Var& ctx) const {
        Var h = ag::add(x, attn.forward(ln1.forward(x), ctx));
        return ag::add(h, fc2.forward(ag::silu(fc1.forward(ln2.forward(h)))));
    }
    void collect(const std::string& p, NamedParams& np) const {
        ln1.collect(p + ".ln1", np);
        ln2.collect(p + ".ln2", np);
        attn.collect(p + ".attn", np);
        fc1.collect(p + ".fc1", np);
        fc2.collect(p + ".fc2", np);
    }
};

// AdamW with decoupled weight decay. Moment state is keyed by parameter
// position, so the parameter list must be stable across steps.
class AdamW {
public:
    explicit AdamW(std::vector<Var> params, double lr = 1e-3, double beta1 = 0.9,
                   double beta2 = 0.999, double eps = 1e-8, double weight_decay = 0.0);
    void step();
    void zero_grad() { ag::zero_grad(params_); }
    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

private:
    std::vector<Var> params_;
    std::vector<Eigen::ArrayXd> m_, v_;
    double lr_, beta1_, beta2_, eps_, wd_;
    int64_t t_ = 0;
};

// Sinusoidal embedding of a discrete timestep.
Tensor timestep_embedding(int t, int dim);

// Frozen parameters stop requesting gradients entirely, so backprop can
// never accumulate into them; freeze contracts are additionally checked by
// hashing values before/after downstream stages.
inline void freeze(const NamedParams& np) {
    for (const auto& [k, v] : np) {
        v->requires_grad = false;
        v->grad = Tensor();
    }
}

inline std::vector<Var> values(const NamedParams& np) {
    std::vector<Var> out;
    out.reserve(np.size());
    for (const auto& [k, v] : np) out.push_back(v);
    return out;
}

}  // namespace patchwork::nn
