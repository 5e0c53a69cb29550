// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#include "patchwork/nn.hpp"

#include <cmath>

namespace patchwork::nn {

Var MultiHeadAttention::forward(const Var& x, const Var& ctx) const {
    Var qs = q.forward(x);
    Var ks = k.forward(ctx);
    Var vs = v.forward(ctx);
    int dh = dim / heads;
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> head_out;
    head_out.reserve(heads);
    for (int h = 0; h < heads; ++h) {
        Var qh = ag::slice_cols(qs, h * dh, dh);
        Var kh = ag::slice_cols(ks, h * dh, dh);
        Var vh = ag::slice_cols(vs, h * dh, dh);
        Var att = ag::softmax_rows(ag::mul_scalar(ag::matmul(qh, ag::transpose(kh)), scale));
        head_out.push_back(ag::matmul(att, vh));
    }
    return o.forward(ag::concat_cols(head_out));
}

AdamW::AdamW(std::vector<Var> params, double lr, double beta1, double beta2, double eps,
             double weight_decay)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
      wd_(weight_decay) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(Eigen::ArrayXd::Zero(p->val.numel()));
        v_.emplace_back(Eigen::ArrayXd::Zero(p->val.numel()));
    }
}

void AdamW::step() {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        if (p->grad.numel() == 0) continue;
        const Eigen::ArrayXd& g = p->grad.array();
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.square();
        Eigen::ArrayXd mhat = m_[i] / bc1;
        Eigen::ArrayXd vhat = v_[i] / bc2;
        if (wd_ > 0.0) p->val.array() -= lr_ * wd_ * p->val.array();
        p->val.array() -= lr_ * mhat / (vhat.sqrt() + eps_);
    }
}

Tensor timestep_embedding(int t, int dim) {
    Tensor e({dim});
    int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
        e.at(i) = std::sin(t * freq);
        e.at(half + i) = std::cos(t * freq);
    }
    return e;
}

}  // namespace patchwork::nn
