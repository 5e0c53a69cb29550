// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#include "patchwork/curation.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <memory>

#include "patchwork/image.hpp"
#include "patchwork/rng.hpp"

namespace patchwork::cur {

namespace fs = std::filesystem;

Embedder make_random_projection_embedder(int out_dim, int down, uint64_t seed) {
    int in_dim = 3 * down * down;
    auto proj = std::make_shared<Eigen::MatrixXd>(out_dim, in_dim);
    Rng rng(Rng::derive(seed, 0xe3bedULL));
    double scale = 1.0 / std::sqrt(static_cast<double>(out_dim));
    for (int r = 0; r < out_dim; ++r)
        for (int c = 0; c < in_dim; ++c) (*proj)(r, c) = rng.normal() * scale;
    return [proj, down, in_dim](const Tensor& image) -> Eigen::VectorXd {
        Tensor small = img::resize_bilinear(image, down, down);
        if (small.numel() != in_dim) throw std::runtime_error("embedder: bad image shape");
        Eigen::VectorXd x(in_dim);
        for (int64_t i = 0; i < in_dim; ++i) x(i) = small.at(i);
        return *proj * x;
    };
}

Eigen::MatrixXd embed(const std::vector<Tensor>& images, const Embedder& embedder,
                      std::vector<int>* skipped) {
    std::vector<Eigen::VectorXd> rows;
    rows.reserve(images.size());
    for (size_t i = 0; i < images.size(); ++i) {
        try {
            rows.push_back(embedder(images[i]));
        } catch (const std::exception&) {
            if (skipped) skipped->push_back(static_cast<int>(i));
        }
    }
    if (rows.empty()) return Eigen::MatrixXd(0, 0);
    Eigen::MatrixXd F(static_cast<int>(rows.size()), rows[0].size());
    for (size_t i = 0; i < rows.size(); ++i) F.row(static_cast<int>(i)) = rows[i];
    if (!F.allFinite()) throw std::runtime_error("embed: non-finite features");
    return F;
}

namespace {

double cluster_sse(const Eigen::MatrixXd& F, const std::vector<int>& members) {
    if (members.empty()) return 0.0;
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(F.cols());
    for (int i : members) mean += F.row(i);
    mean /= static_cast<double>(members.size());
    double sse = 0.0;
    for (int i : members) sse += (F.row(i) - mean).squaredNorm();
    return sse;
}

// restarted Lloyd 2-means on a subset; returns the two member lists
std::pair<std::vector<int>, std::vector<int>> two_means(const Eigen::MatrixXd& F,
                                                        const std::vector<int>& members,
                                                        Rng& rng, int trials) {
    double best_sse = std::numeric_limits<double>::infinity();
    std::pair<std::vector<int>, std::vector<int>> best;
    int n = static_cast<int>(members.size());
    const int kMaxAttempts = 10;
    for (int trial = 0; trial < trials; ++trial) {
        for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
            int a = rng.uniform_int(0, n - 1);
            int b = rng.uniform_int(0, n - 1);
            if (a == b) continue;
            Eigen::RowVectorXd c0 = F.row(members[a]), c1 = F.row(members[b]);
            std::vector<int> side(n, 0);
            for (int iter = 0; iter < 100; ++iter) {
                bool changed = false;
                for (int i = 0; i < n; ++i) {
                    double d0 = (F.row(members[i]) - c0).squaredNorm();
                    double d1 = (F.row(members[i]) - c1).squaredNorm();
                    int s = d1 < d0 ? 1 : 0;
                    if (s != side[i]) {
                        side[i] = s;
                        changed = true;
                    }
                }
                Eigen::RowVectorXd s0 = Eigen::RowVectorXd::Zero(F.cols()), s1 = s0;
                int n0 = 0, n1 = 0;
                for (int i = 0; i < n; ++i) {
                    if (side[i]) {
                        s1 += F.row(members[i]);
                        ++n1;
                    } else {
                        s0 += F.row(members[i]);
                        ++n0;
                    }
                }
                if (n0 == 0 || n1 == 0) break;
                c0 = s0 / n0;
                c1 = s1 / n1;
                if (!changed) break;
            }
            std::vector<int> left, right;
            for (int i = 0; i < n; ++i) (side[i] ? right : left).push_back(members[i]);
            if (left.empty() || right.empty()) continue;  // degenerate, retry
            double sse = cluster_sse(F, left) + cluster_sse(F, right);
            if (sse < best_sse) {
                best_sse = sse;
                best = {left, right};
            }
            break;
        }
    }
    if (best.first.empty())
        throw std::runtime_error("bisecting k-means: could not split a cluster (identical points?)");
    return best;
}

// crop/resize for [H,W] {0,1} masks: reshape to one channel, bilinear
// resample, re-binarize
Tensor crop_resize_mask(const Tensor& mask, int size) {
    Tensor m1 = mask.reshaped({1, mask.dim(0), mask.dim(1)});
    Tensor small = img::resize_bilinear(img::center_crop_square(m1), size, size);
    Tensor out({size, size});
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) = small.at(i) > 0.5 ? 1.0 : 0.0;
    return out;
}

}  // namespace

ClusterResult bisecting_kmeans(const Eigen::MatrixXd& F, int K, uint64_t seed, int split_trials,
                               bool split_by_sse) {
    int n = static_cast<int>(F.rows());
    if (K < 1) throw std::invalid_argument("bisecting k-means: K must be >= 1");
    if (n < K) throw std::invalid_argument("bisecting k-means: fewer points than clusters");
    Rng rng(Rng::derive(seed, 0xb15eULL));

    std::vector<std::vector<int>> clusters(1);
    clusters[0].resize(n);
    for (int i = 0; i < n; ++i) clusters[0][i] = i;

    while (static_cast<int>(clusters.size()) < K) {
        // candidate order: by SSE (or size), only clusters with >= 2 points
        int pick = -1;
        double best_score = -1.0;
        for (size_t c = 0; c < clusters.size(); ++c) {
            if (clusters[c].size() < 2) continue;
            double score = split_by_sse ? cluster_sse(F, clusters[c])
                                        : static_cast<double>(clusters[c].size());
            if (score > best_score) {
                best_score = score;
                pick = static_cast<int>(c);
            }
        }
        if (pick < 0) throw std::runtime_error("bisecting k-means: no splittable cluster left");
        auto [left, right] = two_means(F, clusters[static_cast<size_t>(pick)], rng, split_trials);
        clusters[static_cast<size_t>(pick)] = left;
        clusters.push_back(right);
    }

    ClusterResult res;
    res.labels.assign(n, -1);
    res.centroids = Eigen::MatrixXd::Zero(K, F.cols());
    for (int c = 0; c < K; ++c) {
        for (int i : clusters[static_cast<size_t>(c)]) {
            res.labels[static_cast<size_t>(i)] = c;
            res.centroids.row(c) += F.row(i);
        }
        res.centroids.row(c) /= static_cast<double>(clusters[static_cast<size_t>(c)].size());
    }
    return res;
}

double total_sse(const Eigen::MatrixXd& F, const ClusterResult& c) {
    double sse = 0.0;
    for (int i = 0; i < F.rows(); ++i)
        sse += (F.row(i) - c.centroids.row(c.labels[static_cast<size_t>(i)])).squaredNorm();
    return sse;
}

std::vector<int> select_representatives(const Eigen::MatrixXd& F, const ClusterResult& c) {
    int K = static_cast<int>(c.centroids.rows());
    std::vector<int> best(K, -1);
    std::vector<double> best_d(K, std::numeric_limits<double>::infinity());
    for (int i = 0; i < F.rows(); ++i) {
        int l = c.labels[static_cast<size_t>(i)];
        double d = (F.row(i) - c.centroids.row(l)).squaredNorm();
        if (d < best_d[l]) {  // strict: ties keep the lowest index
            best_d[l] = d;
            best[l] = i;
        }
    }
    for (int k = 0; k < K; ++k)
        if (best[k] < 0) throw std::runtime_error("select_representatives: empty cluster");
    return best;
}

Tensor center_crop_resize(const Tensor& image, int size) {
    return img::resize_bilinear(img::center_crop_square(image), size, size);
}

std::vector<EvalRecord> build_eval_set(const std::vector<Source>& sources,
                                       const EvalSetConfig& cfg) {
    if (cfg.out_dir.empty()) throw std::invalid_argument("build_eval_set: out_dir required");
    fs::create_directories(cfg.out_dir);
    maskgen::MaskMixtureConfig eval_cfg = cfg.mask_cfg.eval_variant();
    Embedder embedder = make_random_projection_embedder(cfg.embed_dim, 32, cfg.seed);

    std::vector<EvalRecord> records;
    for (size_t s = 0; s < sources.size(); ++s) {
        const Source& src = sources[s];
        if (static_cast<int>(src.images.size()) < cfg.per_source_k)
            throw std::runtime_error("build_eval_set: source '" + src.name + "' has " +
                                     std::to_string(src.images.size()) + " images, needs " +
                                     std::to_string(cfg.per_source_k));
        if (!src.foregrounds.empty() && src.foregrounds.size() != src.images.size())
            throw std::runtime_error("build_eval_set: source '" + src.name +
                                     "' segmentation count mismatch");
        Eigen::MatrixXd F = embed(src.images, embedder);
        ClusterResult cl = bisecting_kmeans(F, cfg.per_source_k, Rng::derive(cfg.seed, s));
        std::vector<int> reps = select_representatives(F, cl);

        for (size_t k = 0; k < reps.size(); ++k) {
            int idx = reps[k];
            Tensor image = center_crop_resize(src.images[static_cast<size_t>(idx)], cfg.size);
            Rng mrng(Rng::derive(Rng::derive(cfg.seed, 0x5a1eULL + s), k));
            Tensor mask = maskgen::sample_eval_mask(mrng, cfg.size, cfg.size, nullptr, eval_cfg);
            std::string domain = "default";
            if (!src.foregrounds.empty()) {
                Tensor fg = crop_resize_mask(src.foregrounds[static_cast<size_t>(idx)], cfg.size);
                mask = maskgen::subtract_foreground(mask, fg);
                domain = "background";
            }
            EvalRecord rec;
            rec.source = src.name;
            rec.domain = domain;
            rec.source_index = idx;
            rec.ratio = maskgen::mask_ratio(mask);
            std::string stem = src.name + "_" + std::to_string(k);
            rec.image_path = (fs::path(cfg.out_dir) / (stem + ".png")).string();
            rec.mask_path = (fs::path(cfg.out_dir) / (stem + "_mask.png")).string();
            img::write_png(rec.image_path, image);
            img::write_mask_png(rec.mask_path, mask);
            records.push_back(std::move(rec));
        }
    }

    std::ofstream out(fs::path(cfg.out_dir) / "manifest.jsonl");
    nlohmann::json echo = {{"per_source_k", cfg.per_source_k}, {"size", cfg.size},
                           {"seed", cfg.seed},                 {"embed_dim", cfg.embed_dim},
                           {"embedder", "random-projection-v1"}};
    out << nlohmann::json{{"config", echo}}.dump() << "\n";
    for (const auto& r : records) {
        nlohmann::json j = {{"image_path", r.image_path}, {"mask_path", r.mask_path},
                            {"source", r.source},         {"domain", r.domain},
                            {"source_index", r.source_index}, {"ratio", r.ratio}};
        out << j.dump() << "\n";
    }
    return records;
}

std::vector<EvalRecord> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path);
    std::vector<EvalRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        if (j.contains("config")) continue;
        EvalRecord r;
        r.image_path = j.at("image_path");
        r.mask_path = j.at("mask_path");
        r.source = j.at("source");
        r.domain = j.at("domain");
        r.source_index = j.at("source_index");
        r.ratio = j.at("ratio");
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace patchwork::cur
