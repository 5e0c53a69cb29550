// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

namespace patchwork {

// Flat key-value configuration. File format: one `key = value` per line,
// `#` starts a comment, keys use dotted sections (e.g. `vae.steps`).
// Command-line overrides use the same `key=value` syntax.
class KvConfig {
public:
    KvConfig() = default;

    static KvConfig from_file(const std::string& path);
    void merge_file(const std::string& path);
    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    void merge_override(const std::string& key_eq_value);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::string get_str(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    long long get_i64(const std::string& key, long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace patchwork
