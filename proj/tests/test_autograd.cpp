// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "grad_check.hpp"
#include "patchwork/nn.hpp"
#include "patchwork/rng.hpp"

using namespace patchwork;
using ag::Var;

namespace {

Tensor random_tensor(Shape dims, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(dims));
    for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.normal() * scale;
    return t;
}

}  // namespace

TEST_CASE("elementwise and reduction gradients") {
    Rng rng(1);
    Var a = ag::param(random_tensor({3, 4}, rng));
    Var b = ag::param(random_tensor({3, 4}, rng));
    auto f = [&] {
        Var h = ag::mul(ag::add(a, b), ag::sub(a, ag::mul_scalar(b, 0.5)));
        h = ag::add(ag::silu(h), ag::square(ag::add_scalar(h, 0.3)));
        return ag::mean_all(ag::add(h, ag::exp(ag::mul_scalar(h, 0.1))));
    };
    CHECK(testutil::max_grad_rel_err(f, {a, b}) < 1e-6);
}

TEST_CASE("matmul, bias, layernorm, softmax gradients") {
    Rng rng(2);
    Var x = ag::param(random_tensor({5, 6}, rng));
    Var w = ag::param(random_tensor({6, 4}, rng, 0.5));
    Var bias = ag::param(random_tensor({4}, rng, 0.1));
    Var g = ag::param(Tensor::full({4}, 1.0));
    Var be = ag::param(random_tensor({4}, rng, 0.1));
    auto f = [&] {
        Var h = ag::add_bias_rows(ag::matmul(x, w), bias);
        h = ag::layer_norm(h, g, be);
        h = ag::softmax_rows(h);
        return ag::sum_all(ag::square(h));
    };
    CHECK(testutil::max_grad_rel_err(f, {x, w, bias, g, be}) < 1e-5);
}

TEST_CASE("gather/scatter/broadcast/concat gradients") {
    Rng rng(3);
    Var x = ag::param(random_tensor({6, 3}, rng));
    Var row = ag::param(random_tensor({3}, rng));
    Var src = ag::param(random_tensor({2, 3}, rng));
    auto f = [&] {
        Var base = ag::broadcast_row(row, 6);
        Var sc = ag::scatter_rows(base, src, {1, 4});
        Var gt = ag::gather_rows(ag::add(sc, x), {0, 1, 4, 5});
        Var cc = ag::concat_cols({gt, ag::mul_scalar(gt, -0.5)});
        return ag::mean_all(ag::square(cc));
    };
    CHECK(testutil::max_grad_rel_err(f, {x, row, src}) < 1e-6);
}

TEST_CASE("conv2d, groupnorm, upsample, channel-bias gradients") {
    Rng rng(4);
    Var x = ag::param(random_tensor({2, 3, 6, 6}, rng));
    Var w1 = ag::param(random_tensor({4, 3, 3, 3}, rng, 0.3));
    Var b1 = ag::param(random_tensor({4}, rng, 0.1));
    Var gg = ag::param(Tensor::full({4}, 1.0));
    Var gb = ag::param(random_tensor({4}, rng, 0.1));
    Var cb = ag::param(random_tensor({4}, rng, 0.2));
    Var w2 = ag::param(random_tensor({2, 4, 3, 3}, rng, 0.3));
    Var b2 = ag::param(random_tensor({2}, rng, 0.1));
    auto f = [&] {
        Var h = ag::conv2d(x, w1, b1, 2, 1);           // 6x6 -> 3x3
        h = ag::group_norm(h, 2, gg, gb);
        h = ag::add_channel_bias(h, cb);
        h = ag::silu(h);
        h = ag::upsample_nearest2(h);                  // 3x3 -> 6x6
        h = ag::conv2d(h, w2, b2, 1, 1);
        return ag::mean_all(ag::square(h));
    };
    CHECK(testutil::max_grad_rel_err(f, {x, w1, b1, gg, gb, cb, w2, b2}) < 1e-5);
}

TEST_CASE("patch and token reshaping gradients") {
    Rng rng(5);
    Var img = ag::param(random_tensor({3, 4, 4}, rng));
    auto f = [&] {
        Var rows = ag::image_to_patches(img, 2);       // [4, 12]
        Var back = ag::patches_to_image(rows, 3, 4, 4, 2);
        Var fourd = ag::reshape(back, {1, 3, 4, 4});
        Var tok = ag::chw_to_rows(fourd);              // [16, 3]
        Var chw = ag::rows_to_chw(tok, 3, 4, 4);
        return ag::mean_all(ag::square(ag::add(chw, fourd)));
    };
    CHECK(testutil::max_grad_rel_err(f, {img}) < 1e-6);
}

TEST_CASE("patchify/unpatchify is an exact round trip") {
    Rng rng(6);
    Var img = ag::constant(random_tensor({3, 8, 8}, rng));
    Var rows = ag::image_to_patches(img, 4);
    CHECK(rows->val.dim(0) == 4);
    CHECK(rows->val.dim(1) == 48);
    Var back = ag::patches_to_image(rows, 3, 8, 8, 4);
    CHECK((back->val.array() - img->val.array()).abs().maxCoeff() == 0.0);
}

TEST_CASE("transformer block gradient") {
    Rng rng(7);
    nn::TransformerBlock blk(8, 2, rng);
    Var x = ag::param(random_tensor({4, 8}, rng, 0.7));
    nn::NamedParams np;
    blk.collect("blk", np);
    std::vector<Var> leaves = nn::values(np);
    leaves.push_back(x);
    auto f = [&] { return ag::mean_all(ag::square(blk.forward(x))); };
    CHECK(testutil::max_grad_rel_err(f, leaves) < 1e-4);
}

TEST_CASE("cross-attention block gradient") {
    Rng rng(8);
    nn::TransformerBlock blk(8, 2, rng, 6);
    Var x = ag::param(random_tensor({4, 8}, rng, 0.7));
    Var ctx = ag::param(random_tensor({5, 6}, rng, 0.7));
    nn::NamedParams np;
    blk.collect("blk", np);
    std::vector<Var> leaves = nn::values(np);
    leaves.push_back(x);
    leaves.push_back(ctx);
    auto f = [&] { return ag::mean_all(ag::square(blk.forward_cross(x, ctx))); };
    CHECK(testutil::max_grad_rel_err(f, leaves) < 1e-4);
}

TEST_CASE("adamw reduces a quadratic") {
    Rng rng(9);
    Var p = ag::param(random_tensor({8}, rng));
    Tensor target = random_tensor({8}, rng);
    nn::AdamW opt({p}, 0.05);
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 200; ++i) {
        opt.zero_grad();
        Var loss = ag::mse_loss(p, target);
        if (i == 0) first = loss->val.item();
        last = loss->val.item();
        ag::backward(loss);
        opt.step();
    }
    CHECK(last < first * 1e-3);
}
