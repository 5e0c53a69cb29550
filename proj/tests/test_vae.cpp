// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "grad_check.hpp"
#include "patchwork/dataset.hpp"
#include "patchwork/vae.hpp"

using namespace patchwork;

namespace {

vae::VAEConfig tiny_cfg(int image_size = 16) {
    vae::VAEConfig c;
    c.image_size = image_size;
    c.latent_channels = 2;
    c.ch_full = 8;
    c.ch_half = 8;
    c.ch_quarter = 8;
    return c;
}

}  // namespace

TEST_CASE("vae: encode/decode shapes and determinism") {
    auto cfg = tiny_cfg();
    vae::VAE m(cfg, 3);
    Tensor im = data::toy_image(1, cfg.image_size);

    auto enc = m.encode(im, nullptr);
    int ls = cfg.latent_size();
    CHECK(ls == 4);
    CHECK(enc.mean.dims() == Shape{2, ls, ls});
    CHECK(enc.logvar.dims() == Shape{2, ls, ls});
    // mean path: sample equals posterior mean
    for (int64_t i = 0; i < enc.mean.numel(); ++i) CHECK(enc.sample.at(i) == enc.mean.at(i));

    Tensor rec1 = m.decode(enc.mean);
    Tensor rec2 = m.decode(enc.mean);
    CHECK(rec1.dims() == Shape{3, cfg.image_size, cfg.image_size});
    for (int64_t i = 0; i < rec1.numel(); ++i) CHECK(rec1.at(i) == rec2.at(i));

    // stochastic path differs from the mean but stays finite
    Rng noise(99);
    auto enc2 = m.encode(im, &noise);
    CHECK(enc2.sample.all_finite());
    double diff = (enc2.sample.array() - enc2.mean.array()).abs().sum();
    CHECK(diff > 0.0);
}

TEST_CASE("vae: reparameterized sample matches mean + std * eps oracle") {
    auto cfg = tiny_cfg();
    vae::VAE m(cfg, 5);
    Tensor im = data::toy_image(7, cfg.image_size);
    Rng a(123), b(123);
    auto enc = m.encode(im, &a);
    auto ref = m.encode(im, nullptr);
    for (int64_t i = 0; i < enc.sample.numel(); ++i) {
        double eps = b.normal();
        double want = ref.mean.at(i) + std::exp(0.5 * ref.logvar.at(i)) * eps;
        CHECK(enc.sample.at(i) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("vae: analytic gradients match finite differences") {
    auto cfg = tiny_cfg(8);
    vae::VAE m(cfg, 11);
    Tensor im = data::toy_image(4, 8);
    Tensor eps({1, cfg.latent_channels, 2, 2});
    Rng rng(7);
    for (int64_t i = 0; i < eps.numel(); ++i) eps.at(i) = rng.normal();

    auto loss_fn = [&] {
        ag::Var mean, logvar;
        m.encode_graph(ag::constant(im), mean, logvar);
        ag::Var z = ag::add(mean, ag::mul(ag::exp(ag::mul_scalar(logvar, 0.5)), ag::constant(eps)));
        ag::Var recon = m.decode_graph(z);
        ag::Var kl = ag::mean_all(ag::mul_scalar(
            ag::sub(ag::add(ag::square(mean), ag::exp(logvar)), ag::add_scalar(logvar, 1.0)), 0.5));
        return ag::add(ag::mse_loss(recon, im), ag::mul_scalar(kl, cfg.kl_weight));
    };
    double err = testutil::max_grad_rel_err(loss_fn, nn::values(m.params()));
    CHECK(err < 1e-3);
}

TEST_CASE("vae: checkpoint round trip is bit-exact") {
    auto cfg = tiny_cfg();
    vae::VAE m(cfg, 13);
    Checkpoint ck = m.to_checkpoint(9);
    CHECK(ck.module_id == "vae");
    vae::VAE m2 = vae::VAE::from_checkpoint(ck);
    CHECK(params_hash(m.params()) == params_hash(m2.params()));
    Tensor im = data::toy_image(2, cfg.image_size);
    Tensor r1 = m.decode(m.encode(im, nullptr).mean);
    Tensor r2 = m2.decode(m2.encode(im, nullptr).mean);
    for (int64_t i = 0; i < r1.numel(); ++i) CHECK(r1.at(i) == r2.at(i));
}

TEST_CASE("vae: short training improves reconstruction") {
    auto cfg = tiny_cfg();
    vae::VAE m(cfg, 17);
    auto images = [&](uint64_t i) { return data::toy_image(50 + i % 4, cfg.image_size); };

    double before = vae::eval_roundtrip_psnr(m, images, 4);
    vae::VAETrainConfig tc;
    tc.steps = 60;
    tc.batch = 2;
    tc.lr = 2e-3;
    tc.seed = 2;
    vae::train_vae(m, tc, images);
    double after = vae::eval_roundtrip_psnr(m, images, 4);
    CHECK(after > before + 2.0);  // at least 2 dB gained
}

TEST_CASE("vae: training is deterministic for a fixed seed") {
    auto cfg = tiny_cfg();
    auto images = [&](uint64_t i) { return data::toy_image(80 + i % 3, cfg.image_size); };
    vae::VAETrainConfig tc;
    tc.steps = 8;
    tc.batch = 2;
    tc.seed = 4;
    vae::VAE a(cfg, 21), b(cfg, 21);
    vae::train_vae(a, tc, images);
    vae::train_vae(b, tc, images);
    CHECK(params_hash(a.params()) == params_hash(b.params()));
}

TEST_CASE("vae: latent scale estimate is positive and deterministic") {
    auto cfg = tiny_cfg();
    vae::VAE m(cfg, 23);
    auto images = [&](uint64_t i) { return data::toy_image(10 + i, cfg.image_size); };
    double s1 = vae::estimate_latent_scale(m, images, 6);
    double s2 = vae::estimate_latent_scale(m, images, 6);
    CHECK(s1 > 0.0);
    CHECK(s1 == s2);
}
