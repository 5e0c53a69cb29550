// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#include "patchwork/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace patchwork {

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
    NoiseSchedule s;
    s.steps = steps;
    s.beta.resize(steps);
    s.alpha.resize(steps);
    s.alpha_bar.resize(steps);
    double prod = 1.0;
    for (int t = 0; t < steps; ++t) {
        double b = steps == 1 ? beta_start
                              : beta_start + (beta_end - beta_start) * t / (steps - 1);
        s.beta[t] = b;
        s.alpha[t] = 1.0 - b;
        prod *= s.alpha[t];
        s.alpha_bar[t] = prod;
    }
    s.validate();
    return s;
}

void NoiseSchedule::validate() const {
    if (steps < 1 || static_cast<int>(beta.size()) != steps) throw std::logic_error("bad schedule");
    for (int t = 0; t < steps; ++t) {
        if (!(beta[t] > 0.0 && beta[t] < 1.0)) throw std::logic_error("beta out of (0,1)");
        if (t > 0 && !(beta[t] > beta[t - 1])) throw std::logic_error("beta not increasing");
        if (!(alpha_bar[t] > 0.0 && alpha_bar[t] <= 1.0)) throw std::logic_error("alpha_bar range");
        if (t > 0 && !(alpha_bar[t] < alpha_bar[t - 1]))
            throw std::logic_error("alpha_bar not decreasing");
    }
}

Tensor NoiseSchedule::add_noise(const Tensor& z0, const Tensor& eps, int t) const {
    if (t < 0 || t >= steps) throw std::out_of_range("add_noise: t out of [0, T)");
    double a = std::sqrt(alpha_bar[t]), b = std::sqrt(1.0 - alpha_bar[t]);
    return Tensor(z0.dims(), a * z0.array() + b * eps.array());
}

}  // namespace patchwork
