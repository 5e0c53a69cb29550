// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "patchwork/tensor.hpp"

namespace patchwork {

// Linear variance schedule with cumulative products, beta strictly
// increasing in (0,1) and alpha_bar strictly decreasing.
struct NoiseSchedule {
    int steps = 1000;
    std::vector<double> beta, alpha, alpha_bar;

    static NoiseSchedule linear(int steps = 1000, double beta_start = 1e-4, double beta_end = 2e-2);

    // z_t = sqrt(alpha_bar[t]) z0 + sqrt(1 - alpha_bar[t]) eps
    Tensor add_noise(const Tensor& z0, const Tensor& eps, int t) const;

    void validate() const;
};

}  // namespace patchwork
