// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#include "patchwork/dataset.hpp"

#include <cmath>

#include "patchwork/rng.hpp"

namespace patchwork::data {

namespace {

inline double soft_edge(double signed_dist, double width) {
    return 1.0 / (1.0 + std::exp(signed_dist / width));
}

void add_disc(Tensor& im, int size, double cx, double cy, double r, const double color[3],
              double edge) {
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double d = std::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy)) - r;
            double a = soft_edge(d, edge);
            if (a < 1e-4) continue;
            for (int c = 0; c < 3; ++c) {
                double& px = im.at((static_cast<int64_t>(c) * size + y) * size + x);
                px = (1.0 - a) * px + a * color[c];
            }
        }
}

}  // namespace

Tensor toy_image(uint64_t seed, int size, int style) {
    Rng rng(Rng::derive(seed, 0xda7a));
    if (style < 0) style = static_cast<int>(rng.next_u64() % kNumStyles);
    Tensor im({3, size, size});

    if (style == 1) {
        // diagonal stripes: smooth sinusoidal bands in two random colors
        double c1[3], c2[3];
        for (int c = 0; c < 3; ++c) {
            c1[c] = rng.uniform(-0.8, 0.8);
            c2[c] = rng.uniform(-0.8, 0.8);
        }
        double angle = rng.uniform(0.0, 3.14159);
        double freq = rng.uniform(1.5, 4.0) * 2.0 * 3.14159 / size;
        double ca = std::cos(angle), sa = std::sin(angle);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                double t = 0.5 + 0.5 * std::sin((x * ca + y * sa) * freq);
                for (int c = 0; c < 3; ++c)
                    im.at((static_cast<int64_t>(c) * size + y) * size + x) =
                        (1 - t) * c1[c] + t * c2[c];
            }
        return im;
    }

    if (style == 3) {
        // horizon split with soft boundary plus one disc
        double top[3], bot[3];
        for (int c = 0; c < 3; ++c) {
            top[c] = rng.uniform(-0.8, 0.8);
            bot[c] = rng.uniform(-0.8, 0.8);
        }
        double horizon = rng.uniform(0.3, 0.7) * size;
        double width = rng.uniform(0.02, 0.08) * size;
        for (int y = 0; y < size; ++y) {
            double a = soft_edge(y - horizon, width);
            for (int x = 0; x < size; ++x)
                for (int c = 0; c < 3; ++c)
                    im.at((static_cast<int64_t>(c) * size + y) * size + x) =
                        a * top[c] + (1 - a) * bot[c];
        }
        double color[3];
        for (int c = 0; c < 3; ++c) color[c] = rng.uniform(-0.9, 0.9);
        add_disc(im, size, rng.uniform(0.2, 0.8) * size, rng.uniform(0.1, 0.5) * size,
                 rng.uniform(0.06, 0.16) * size, color, 0.02 * size);
        return im;
    }

    // styles 0 and 2: low-frequency sinusoid background
    for (int c = 0; c < 3; ++c) {
        double a1 = rng.uniform(0.2, 0.6), a2 = rng.uniform(0.1, 0.4);
        double fx1 = rng.uniform(0.5, 1.5) * 2 * 3.14159 / size;
        double fy1 = rng.uniform(0.5, 1.5) * 2 * 3.14159 / size;
        double fx2 = rng.uniform(1.0, 2.5) * 2 * 3.14159 / size;
        double fy2 = rng.uniform(1.0, 2.5) * 2 * 3.14159 / size;
        double p1 = rng.uniform(0.0, 6.28), p2 = rng.uniform(0.0, 6.28);
        double off = rng.uniform(-0.3, 0.3);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                im.at((static_cast<int64_t>(c) * size + y) * size + x) =
                    off + a1 * std::sin(fx1 * x + fy1 * y + p1) +
                    a2 * std::sin(fx2 * x - fy2 * y + p2);
    }

    int n_shapes = style == 2 ? rng.uniform_int(2, 4) : rng.uniform_int(1, 2);
    for (int s = 0; s < n_shapes; ++s) {
        double color[3];
        for (int c = 0; c < 3; ++c) color[c] = rng.uniform(-0.9, 0.9);
        add_disc(im, size, rng.uniform(0.1, 0.9) * size, rng.uniform(0.1, 0.9) * size,
                 rng.uniform(0.08, 0.22) * size, color, rng.uniform(0.015, 0.05) * size);
    }

    im.array() = im.array().max(-0.97).min(0.97);
    return im;
}

}  // namespace patchwork::data
