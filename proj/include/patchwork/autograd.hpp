// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "patchwork/tensor.hpp"

namespace patchwork::ag {

// Reverse-mode tape node. Graphs are built per training step and freed when
// the last Var referencing them goes out of scope; parameters are long-lived
// leaves shared across steps.
struct Node {
    Tensor val;
    Tensor grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    Tensor& grad_buf() {
        if (grad.numel() == 0) grad = Tensor(val.dims());
        return grad;
    }
};

using Var = std::shared_ptr<Node>;

Var constant(Tensor t);
Var param(Tensor t);

// Runs backprop from a scalar root; accumulates into .grad of every
// requires_grad node reachable from it.
void backward(const Var& root);
void zero_grad(const std::vector<Var>& params);

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var square(const Var& a);
Var exp(const Var& a);
Var abs(const Var& a);
Var silu(const Var& a);

// ---- shape / indexing ----
Var reshape(const Var& a, Shape dims);
Var transpose(const Var& a);                       // 2-D
Var slice_cols(const Var& a, int c0, int len);     // 2-D
Var concat_cols(const std::vector<Var>& parts);    // 2-D
Var gather_rows(const Var& a, std::vector<int> idx);
Var scatter_rows(const Var& base, const Var& src, std::vector<int> idx);
Var broadcast_row(const Var& row, int n);          // [d] -> [n,d]

// ---- linear algebra ----
Var matmul(const Var& a, const Var& b);
Var add_bias_rows(const Var& x, const Var& b);     // [n,d] + [d]
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6);
Var softmax_rows(const Var& x);

// ---- reductions ----
Var sum_all(const Var& a);
Var mean_all(const Var& a);

// ---- image ops (NCHW) ----
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var upsample_nearest2(const Var& x);
Var group_norm(const Var& x, int groups, const Var& gamma, const Var& beta, double eps = 1e-6);
Var add_channel_bias(const Var& x, const Var& b);  // [N,C,H,W] + [C]
Var chw_to_rows(const Var& x);                     // [1,C,H,W] -> [H*W, C]
Var rows_to_chw(const Var& x, int c, int h, int w);
Var image_to_patches(const Var& img, int patch);   // [C,H,W] -> [L, patch*patch*C]
Var patches_to_image(const Var& rows, int c, int h, int w, int patch);

// ---- losses ----
Var mse_loss(const Var& pred, const Tensor& target);
Var l1_loss(const Var& pred, const Tensor& target);

}  // namespace patchwork::ag
