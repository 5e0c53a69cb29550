// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "patchwork/maskgen.hpp"
#include "patchwork/tensor.hpp"

namespace patchwork::cur {

using Embedder = std::function<Eigen::VectorXd(const Tensor& image)>;

// Fixed Gaussian random projection of the bilinearly downsampled pixels;
// deterministic for a given seed.
Embedder make_random_projection_embedder(int out_dim = 256, int down = 32, uint64_t seed = 0);

// Rows in input order; images whose embedder call throws are skipped and
// their indices recorded.
Eigen::MatrixXd embed(const std::vector<Tensor>& images, const Embedder& embedder,
                      std::vector<int>* skipped = nullptr);

struct ClusterResult {
    std::vector<int> labels;    // per-point cluster id in [0, K)
    Eigen::MatrixXd centroids;  // K x d, mean of members
};

// Repeatedly splits the cluster with the largest within-cluster SSE (or the
// largest cardinality) by restarted 2-means until K clusters exist.
ClusterResult bisecting_kmeans(const Eigen::MatrixXd& F, int K, uint64_t seed,
                               int split_trials = 4, bool split_by_sse = true);

double total_sse(const Eigen::MatrixXd& F, const ClusterResult& c);

// Per cluster: member closest to the centroid, ties broken by lowest index.
std::vector<int> select_representatives(const Eigen::MatrixXd& F, const ClusterResult& c);

// Largest center square, then bilinear resize to size x size.
Tensor center_crop_resize(const Tensor& image, int size);

struct Source {
    std::string name;
    std::vector<Tensor> images;
    // optional foreground segmentations (parallel to images, [H,W] in {0,1});
    // when present the eval masks get the foreground subtracted
    std::vector<Tensor> foregrounds;
};

struct EvalRecord {
    std::string image_path, mask_path, source, domain;
    int source_index = 0;  // index into the source's image list
    double ratio = 0.0;
};

struct EvalSetConfig {
    int per_source_k = 25;
    int size = 64;
    uint64_t seed = 0;
    int embed_dim = 256;
    maskgen::MaskMixtureConfig mask_cfg;  // eval_variant() is applied internally
    std::string out_dir;
};

// Embeds, clusters, picks representatives, crops/resizes, samples one eval
// mask per record, writes PNGs plus a JSONL manifest, and returns records.
std::vector<EvalRecord> build_eval_set(const std::vector<Source>& sources,
                                       const EvalSetConfig& cfg);

std::vector<EvalRecord> read_manifest(const std::string& path);

}  // namespace patchwork::cur
