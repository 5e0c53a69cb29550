// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "patchwork/nn.hpp"
#include "patchwork/tensor.hpp"

namespace patchwork {

// Binary parameter container: magic + JSON header (module id, config echo,
// tensor names/shapes, content hash) followed by raw little-endian doubles.
struct Checkpoint {
    std::string module_id;
    nlohmann::json config;
    int64_t step = 0;
    std::vector<std::pair<std::string, Tensor>> tensors;

    uint64_t content_hash() const;
    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

    const Tensor& tensor(const std::string& name) const;
    bool has_tensor(const std::string& name) const;
};

uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ULL);

// Hash over current parameter values, in registry order. Used by the freeze
// contracts.
uint64_t params_hash(const nn::NamedParams& params);

Checkpoint checkpoint_from_params(std::string module_id, nlohmann::json config, int64_t step,
                                  const nn::NamedParams& params);

// Copies checkpoint tensors into live parameters by name; every parameter
// must be present with a matching shape.
void load_params(nn::NamedParams& params, const Checkpoint& ck);

}  // namespace patchwork
