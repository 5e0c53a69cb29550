// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "patchwork/tensor.hpp"

namespace patchwork::data {

// Procedural toy corpus: smooth multi-texture scenes at desk-scale
// resolution. Deterministic in (seed, size, style).
//
// Styles (used as synthetic curation "sources"):
//   0 gradient fields with soft discs
//   1 diagonal stripes
//   2 soft blobs on flat background
//   3 horizon split (two-tone) with a disc
// style < 0 picks a style from the seed.
Tensor toy_image(uint64_t seed, int size, int style = -1);

inline constexpr int kNumStyles = 4;

}  // namespace patchwork::data
