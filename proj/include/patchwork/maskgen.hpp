// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "patchwork/rng.hpp"
#include "patchwork/tensor.hpp"

namespace patchwork::maskgen {

struct MaskGenError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class MaskFamily { object, comod, lama, rect, rect_complement };
const char* family_name(MaskFamily f);

// Brush/stroke parameter ranges, relative to min(H, W) where noted.
struct BrushParams {
    // Co-Mod style: a union of rectangles and medium strokes
    int comod_rects_min = 1, comod_rects_max = 3;
    int comod_strokes_min = 2, comod_strokes_max = 5;
    double comod_width_min = 0.02, comod_width_max = 0.06;
    // LaMa style: wide polyline strokes
    int lama_strokes_min = 1, lama_strokes_max = 4;
    int lama_vertices_min = 4, lama_vertices_max = 8;
    double lama_width_min = 0.05, lama_width_max = 0.15;
};

struct MaskMixtureConfig {
    double w_object = 0.50;
    double w_comod = 0.20;
    double w_lama = 0.20;
    double w_rect = 0.05;
    double w_rect_complement = 0.05;
    double union_chance = 0.25;
    double ratio_min = 0.1;
    double ratio_max = 0.75;
    uint64_t seed = 0;
    BrushParams brush;
    // optional real object silhouettes; empty = procedural polygons
    std::vector<std::string> object_mask_files;

    void validate() const;
    // the evaluation mixture: rectangle families dropped, weights
    // renormalized, ratio bounds widened to [0.2, 0.8]
    MaskMixtureConfig eval_variant() const;
};

// Per-mask record for the stats sidecar and the generators' parameter log.
struct MaskInfo {
    MaskFamily family = MaskFamily::object;
    double ratio = 0.0;
    bool union_comod = false;
    bool union_lama = false;
    int attempts = 1;
    int stroke_count = 0;
    std::vector<double> stroke_widths;  // pixels
};

// ---- single-family samplers ----
Tensor sample_object_mask(Rng& rng, int height, int width);
Tensor sample_comod_mask(Rng& rng, int height, int width, const BrushParams& bp = {},
                         MaskInfo* log = nullptr);
Tensor sample_lama_mask(Rng& rng, int height, int width, const BrushParams& bp = {},
                        MaskInfo* log = nullptr);
Tensor sample_rect_mask(Rng& rng, int height, int width, double ratio_min = 0.05,
                        double ratio_max = 0.75);
Tensor sample_complement_rect_mask(Rng& rng, int height, int width, double ratio_min = 0.05,
                                   double ratio_max = 0.75);

// ---- mixture samplers ----
Tensor sample_training_mask(const MaskMixtureConfig& cfg, Rng& rng, int height, int width,
                            MaskInfo* info = nullptr);
Tensor sample_eval_mask(Rng& rng, int height, int width, MaskInfo* info = nullptr,
                        const MaskMixtureConfig& base = {});

// ---- patch masks ----
struct PatchMask {
    int grid_h = 0, grid_w = 0;
    std::vector<uint8_t> flags;  // row-major, 1 = masked patch

    int size() const { return grid_h * grid_w; }
    int count() const;
    double ratio() const { return size() ? static_cast<double>(count()) / size() : 0.0; }
    std::vector<int> masked_indices() const;
    std::vector<int> visible_indices() const;
};

PatchMask to_patch_mask(const Tensor& mask, int patch_size);
PatchMask enlarge_to_ratio(const PatchMask& pm, double target_ratio, Rng& rng);

Tensor subtract_foreground(const Tensor& mask, const Tensor& segmentation);

double mask_ratio(const Tensor& mask);
bool mask_is_connected(const Tensor& mask);  // 4-connectivity of masked pixels

}  // namespace patchwork::maskgen
