// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#include "patchwork/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace patchwork {

namespace {
constexpr char kMagic[4] = {'P', 'W', 'C', 'K'};
constexpr uint32_t kVersion = 1;
}  // namespace

uint64_t fnv1a64(const void* data, size_t len, uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t Checkpoint::content_hash() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [name, t] : tensors) {
        h = fnv1a64(name.data(), name.size(), h);
        h = fnv1a64(t.data(), static_cast<size_t>(t.numel()) * sizeof(double), h);
    }
    return h;
}

uint64_t params_hash(const nn::NamedParams& params) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [name, v] : params) {
        h = fnv1a64(name.data(), name.size(), h);
        h = fnv1a64(v->val.data(), static_cast<size_t>(v->val.numel()) * sizeof(double), h);
    }
    return h;
}

void Checkpoint::save(const std::string& path) const {
    nlohmann::json header;
    header["module_id"] = module_id;
    header["config"] = config;
    header["step"] = step;
    header["content_hash"] = content_hash();
    nlohmann::json tl = nlohmann::json::array();
    for (const auto& [name, t] : tensors) tl.push_back({{"name", name}, {"shape", t.dims()}});
    header["tensors"] = tl;
    std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
    f.write(kMagic, 4);
    uint32_t ver = kVersion;
    f.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
    uint64_t hlen = hs.size();
    f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, t] : tensors)
        f.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!f) throw std::runtime_error("write failed for checkpoint: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    uint32_t ver = 0;
    f.read(reinterpret_cast<char*>(&ver), sizeof(ver));
    if (ver != kVersion) throw std::runtime_error("unsupported checkpoint version in " + path);
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string hs(hlen, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(hlen));
    nlohmann::json header = nlohmann::json::parse(hs);

    Checkpoint ck;
    ck.module_id = header.at("module_id").get<std::string>();
    ck.config = header.at("config");
    ck.step = header.at("step").get<int64_t>();
    for (const auto& e : header.at("tensors")) {
        Shape shape = e.at("shape").get<Shape>();
        Tensor t(shape);
        f.read(reinterpret_cast<char*>(t.data()),
               static_cast<std::streamsize>(t.numel() * sizeof(double)));
        ck.tensors.emplace_back(e.at("name").get<std::string>(), std::move(t));
    }
    if (!f) throw std::runtime_error("truncated checkpoint: " + path);
    uint64_t expect = header.at("content_hash").get<uint64_t>();
    if (ck.content_hash() != expect)
        throw std::runtime_error("checkpoint hash mismatch (corrupt file): " + path);
    return ck;
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw std::out_of_range("checkpoint " + module_id + " has no tensor '" + name + "'");
}

bool Checkpoint::has_tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return true;
    return false;
}

Checkpoint checkpoint_from_params(std::string module_id, nlohmann::json config, int64_t step,
                                  const nn::NamedParams& params) {
    Checkpoint ck;
    ck.module_id = std::move(module_id);
    ck.config = std::move(config);
    ck.step = step;
    for (const auto& [name, v] : params) ck.tensors.emplace_back(name, v->val);
    return ck;
}

void load_params(nn::NamedParams& params, const Checkpoint& ck) {
    for (auto& [name, v] : params) {
        const Tensor& t = ck.tensor(name);
        if (t.dims() != v->val.dims())
            throw std::runtime_error("checkpoint tensor '" + name + "' shape " + shape_str(t.dims()) +
                                     " does not match parameter shape " + shape_str(v->val.dims()));
        v->val = t;
    }
}

}  // namespace patchwork
