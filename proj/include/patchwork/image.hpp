// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "patchwork/tensor.hpp"

namespace patchwork::img {

// Images are [3,H,W] tensors in [-1,1]; the [0,1] convention exists only at
// file boundaries and inside the metric kernels. Masks are [H,W] in {0,1}
// with 1 = pixel to synthesize.

Tensor read_png(const std::string& path);            // -> [3,H,W] in [-1,1]
void write_png(const std::string& path, const Tensor& image);
Tensor read_mask_png(const std::string& path);       // -> [H,W] in {0,1}
void write_mask_png(const std::string& path, const Tensor& mask);

inline Tensor to_unit(const Tensor& im) { return Tensor(im.dims(), (im.array() + 1.0) * 0.5); }
inline Tensor from_unit(const Tensor& im) { return Tensor(im.dims(), im.array() * 2.0 - 1.0); }
inline Tensor clamp(const Tensor& im, double lo, double hi) {
    return Tensor(im.dims(), im.array().max(lo).min(hi));
}

Tensor resize_bilinear(const Tensor& image, int out_h, int out_w);
Tensor center_crop_square(const Tensor& image);

// Zeroes masked pixels ([-1,1] zero = mid gray).
Tensor apply_mask(const Tensor& image, const Tensor& mask);

// Max-pool downsample of a mask by an integer factor: a low-res cell is
// masked iff any covered pixel is masked.
Tensor downsample_mask_any(const Tensor& mask, int factor);

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v);
void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b);

}  // namespace patchwork::img
