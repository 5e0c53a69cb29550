// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#include "patchwork/maskgen.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "patchwork/image.hpp"

namespace patchwork::maskgen {

namespace {

void check_dims(int h, int w, int min_dim = 1) {
    if (h < min_dim || w < min_dim)
        throw MaskGenError("mask dimensions " + std::to_string(h) + "x" + std::to_string(w) +
                           " below minimum " + std::to_string(min_dim));
}

void fill_rect(Tensor& m, int y0, int x0, int y1, int x1) {
    int h = m.dim(0), w = m.dim(1);
    y0 = std::clamp(y0, 0, h);
    y1 = std::clamp(y1, 0, h);
    x0 = std::clamp(x0, 0, w);
    x1 = std::clamp(x1, 0, w);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) m.at(static_cast<int64_t>(y) * w + x) = 1.0;
}

// capsule fill: all pixels within `radius` of segment (x0,y0)-(x1,y1)
void stamp_segment(Tensor& m, double y0, double x0, double y1, double x1, double radius) {
    int h = m.dim(0), w = m.dim(1);
    int ylo = std::clamp(static_cast<int>(std::floor(std::min(y0, y1) - radius)), 0, h - 1);
    int yhi = std::clamp(static_cast<int>(std::ceil(std::max(y0, y1) + radius)), 0, h - 1);
    int xlo = std::clamp(static_cast<int>(std::floor(std::min(x0, x1) - radius)), 0, w - 1);
    int xhi = std::clamp(static_cast<int>(std::ceil(std::max(x0, x1) + radius)), 0, w - 1);
    double dx = x1 - x0, dy = y1 - y0;
    double len2 = dx * dx + dy * dy;
    for (int y = ylo; y <= yhi; ++y)
        for (int x = xlo; x <= xhi; ++x) {
            double t = len2 > 0 ? ((x - x0) * dx + (y - y0) * dy) / len2 : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            double px = x0 + t * dx, py = y0 + t * dy;
            double d2 = (x - px) * (x - px) + (y - py) * (y - py);
            if (d2 <= radius * radius) m.at(static_cast<int64_t>(y) * m.dim(1) + x) = 1.0;
        }
}

// even-odd scanline fill of a closed polygon
void fill_polygon(Tensor& m, const std::vector<double>& ys, const std::vector<double>& xs) {
    int h = m.dim(0), w = m.dim(1);
    size_t n = ys.size();
    std::vector<double> hits;
    for (int y = 0; y < h; ++y) {
        double yc = y + 0.5;
        hits.clear();
        for (size_t i = 0; i < n; ++i) {
            size_t j = (i + 1) % n;
            double ya = ys[i], yb = ys[j];
            if ((ya <= yc && yb > yc) || (yb <= yc && ya > yc)) {
                double t = (yc - ya) / (yb - ya);
                hits.push_back(xs[i] + t * (xs[j] - xs[i]));
            }
        }
        std::sort(hits.begin(), hits.end());
        for (size_t i = 0; i + 1 < hits.size(); i += 2) {
            int x0 = std::clamp(static_cast<int>(std::ceil(hits[i] - 0.5)), 0, w);
            int x1 = std::clamp(static_cast<int>(std::ceil(hits[i + 1] - 0.5)), 0, w);
            for (int x = x0; x < x1; ++x) m.at(static_cast<int64_t>(y) * w + x) = 1.0;
        }
    }
}

void draw_polyline_strokes(Tensor& m, Rng& rng, int n_vertices, double step_min, double step_max,
                           double radius) {
    int h = m.dim(0), w = m.dim(1);
    double s = std::min(h, w);
    double y = rng.uniform(0.1, 0.9) * h;
    double x = rng.uniform(0.1, 0.9) * w;
    double angle = rng.uniform(0.0, 6.2831853);
    for (int v = 0; v < n_vertices; ++v) {
        angle += rng.uniform(-1.2, 1.2);
        double step = rng.uniform(step_min, step_max) * s;
        double ny = std::clamp(y + step * std::sin(angle), 0.0, static_cast<double>(h - 1));
        double nx = std::clamp(x + step * std::cos(angle), 0.0, static_cast<double>(w - 1));
        stamp_segment(m, y, x, ny, nx, radius);
        y = ny;
        x = nx;
    }
}

void rect_dims_for_ratio(Rng& rng, int h, int w, double ratio_min, double ratio_max, int& rh,
                         int& rw) {
    double target = rng.uniform(ratio_min, ratio_max);
    double aspect = rng.uniform(0.5, 2.0);
    double area = target * h * w;
    rh = std::clamp(static_cast<int>(std::round(std::sqrt(area * aspect))), 1, h);
    rw = std::clamp(static_cast<int>(std::round(area / rh)), 1, w);
    // re-balance after clamping so the area stays close to the target
    rh = std::clamp(static_cast<int>(std::round(area / rw)), 1, h);
}

Tensor load_object_silhouette(const MaskMixtureConfig& cfg, Rng& rng, int h, int w) {
    const std::string& path =
        cfg.object_mask_files[rng.uniform_int(0, static_cast<int>(cfg.object_mask_files.size()) - 1)];
    Tensor seg = img::read_mask_png(path);
    Tensor as_img = seg.reshaped({1, seg.dim(0), seg.dim(1)});
    Tensor resized = img::resize_bilinear(img::center_crop_square(as_img), h, w);
    Tensor m({h, w});
    for (int64_t i = 0; i < m.numel(); ++i) m.at(i) = resized.at(i) > 0.5 ? 1.0 : 0.0;
    return m;
}

Tensor draw_family(MaskFamily fam, const MaskMixtureConfig& cfg, Rng& rng, int h, int w,
                   MaskInfo* info) {
    switch (fam) {
        case MaskFamily::object: {
            Tensor m = cfg.object_mask_files.empty() ? sample_object_mask(rng, h, w)
                                                     : load_object_silhouette(cfg, rng, h, w);
            if (info) {
                info->union_comod = rng.bernoulli(cfg.union_chance);
                info->union_lama = rng.bernoulli(cfg.union_chance);
            }
            bool uc = info ? info->union_comod : rng.bernoulli(cfg.union_chance);
            bool ul = info ? info->union_lama : rng.bernoulli(cfg.union_chance);
            if (uc) {
                Tensor extra = sample_comod_mask(rng, h, w, cfg.brush);
                m.array() = m.array().max(extra.array());
            }
            if (ul) {
                Tensor extra = sample_lama_mask(rng, h, w, cfg.brush);
                m.array() = m.array().max(extra.array());
            }
            return m;
        }
        case MaskFamily::comod:
            return sample_comod_mask(rng, h, w, cfg.brush, info);
        case MaskFamily::lama:
            return sample_lama_mask(rng, h, w, cfg.brush, info);
        case MaskFamily::rect:
            return sample_rect_mask(rng, h, w, cfg.ratio_min, cfg.ratio_max);
        case MaskFamily::rect_complement:
            return sample_complement_rect_mask(rng, h, w, cfg.ratio_min, cfg.ratio_max);
    }
    throw MaskGenError("unknown mask family");
}

Tensor sample_mixture(const MaskMixtureConfig& cfg, Rng& rng, int h, int w, MaskInfo* info) {
    cfg.validate();
    check_dims(h, w, 32);
    double u = rng.uniform();
    MaskFamily fam;
    if (u < cfg.w_object)
        fam = MaskFamily::object;
    else if (u < cfg.w_object + cfg.w_comod)
        fam = MaskFamily::comod;
    else if (u < cfg.w_object + cfg.w_comod + cfg.w_lama)
        fam = MaskFamily::lama;
    else if (u < cfg.w_object + cfg.w_comod + cfg.w_lama + cfg.w_rect)
        fam = MaskFamily::rect;
    else
        fam = MaskFamily::rect_complement;

    // the family is fixed; only the mask within the family is resampled, so
    // family frequencies stay exactly multinomial
    constexpr int kMaxAttempts = 100;
    for (int attempt = 1; attempt <= kMaxAttempts; ++attempt) {
        MaskInfo local;
        local.family = fam;
        Tensor m = draw_family(fam, cfg, rng, h, w, &local);
        double r = mask_ratio(m);
        if (r >= cfg.ratio_min && r <= cfg.ratio_max) {
            if (info) {
                *info = local;
                info->ratio = r;
                info->attempts = attempt;
            }
            return m;
        }
    }
    throw MaskGenError("mask generation failed: family '" + std::string(family_name(fam)) +
                       "' produced no mask with ratio in [" + std::to_string(cfg.ratio_min) + ", " +
                       std::to_string(cfg.ratio_max) + "] after 100 attempts at " +
                       std::to_string(h) + "x" + std::to_string(w));
}

}  // namespace

const char* family_name(MaskFamily f) {
    switch (f) {
        case MaskFamily::object: return "object";
        case MaskFamily::comod: return "comod";
        case MaskFamily::lama: return "lama";
        case MaskFamily::rect: return "rect";
        case MaskFamily::rect_complement: return "rect_complement";
    }
    return "?";
}

void MaskMixtureConfig::validate() const {
    double sum = w_object + w_comod + w_lama + w_rect + w_rect_complement;
    if (w_object < 0 || w_comod < 0 || w_lama < 0 || w_rect < 0 || w_rect_complement < 0)
        throw MaskGenError("mixture weights must be nonnegative");
    if (std::abs(sum - 1.0) > 1e-9)
        throw MaskGenError("mixture weights must sum to 1, got " + std::to_string(sum));
    if (!(ratio_min >= 0.0 && ratio_min < ratio_max && ratio_max <= 1.0))
        throw MaskGenError("require 0 <= ratio_min < ratio_max <= 1");
    if (union_chance < 0.0 || union_chance > 1.0) throw MaskGenError("union_chance out of [0,1]");
}

MaskMixtureConfig MaskMixtureConfig::eval_variant() const {
    MaskMixtureConfig e = *this;
    double s = w_object + w_comod + w_lama;
    if (s <= 0) throw MaskGenError("eval mixture needs nonzero object/comod/lama weight");
    e.w_object = w_object / s;
    e.w_comod = w_comod / s;
    e.w_lama = w_lama / s;
    e.w_rect = 0.0;
    e.w_rect_complement = 0.0;
    e.ratio_min = 0.2;
    e.ratio_max = 0.8;
    return e;
}

Tensor sample_object_mask(Rng& rng, int height, int width) {
    check_dims(height, width, 32);
    Tensor m({height, width});
    double s = std::min(height, width);
    double cy = rng.uniform(0.3, 0.7) * height;
    double cx = rng.uniform(0.3, 0.7) * width;
    int k = rng.uniform_int(12, 20);
    double base_r = rng.uniform(0.18, 0.50) * s;
    std::vector<double> radii(k);
    for (int i = 0; i < k; ++i) radii[i] = base_r * rng.uniform(0.6, 1.4);
    // circular moving average smooths the boundary
    std::vector<double> smooth(k);
    for (int i = 0; i < k; ++i)
        smooth[i] = (radii[(i + k - 1) % k] + radii[i] + radii[(i + 1) % k]) / 3.0;
    std::vector<double> ys(k), xs(k);
    for (int i = 0; i < k; ++i) {
        double a = 2.0 * 3.14159265358979 * i / k;
        ys[i] = cy + smooth[i] * std::sin(a);
        xs[i] = cx + smooth[i] * std::cos(a);
    }
    fill_polygon(m, ys, xs);
    return m;
}

Tensor sample_comod_mask(Rng& rng, int height, int width, const BrushParams& bp, MaskInfo* log) {
    check_dims(height, width, 32);
    Tensor m({height, width});
    double s = std::min(height, width);
    int nr = rng.uniform_int(bp.comod_rects_min, bp.comod_rects_max);
    for (int i = 0; i < nr; ++i) {
        int rh = static_cast<int>(rng.uniform(0.15, 0.5) * height);
        int rw = static_cast<int>(rng.uniform(0.15, 0.5) * width);
        int y0 = rng.uniform_int(0, std::max(0, height - rh));
        int x0 = rng.uniform_int(0, std::max(0, width - rw));
        fill_rect(m, y0, x0, y0 + rh, x0 + rw);
    }
    int ns = rng.uniform_int(bp.comod_strokes_min, bp.comod_strokes_max);
    for (int i = 0; i < ns; ++i) {
        double radius = rng.uniform(bp.comod_width_min, bp.comod_width_max) * s * 0.5;
        if (log) {
            ++log->stroke_count;
            log->stroke_widths.push_back(radius * 2.0);
        }
        draw_polyline_strokes(m, rng, rng.uniform_int(3, 6), 0.10, 0.25, radius);
    }
    return m;
}

Tensor sample_lama_mask(Rng& rng, int height, int width, const BrushParams& bp, MaskInfo* log) {
    check_dims(height, width, 32);
    Tensor m({height, width});
    double s = std::min(height, width);
    int ns = rng.uniform_int(bp.lama_strokes_min, bp.lama_strokes_max);
    for (int i = 0; i < ns; ++i) {
        double radius = rng.uniform(bp.lama_width_min, bp.lama_width_max) * s * 0.5;
        if (log) {
            ++log->stroke_count;
            log->stroke_widths.push_back(radius * 2.0);
        }
        draw_polyline_strokes(m, rng, rng.uniform_int(bp.lama_vertices_min, bp.lama_vertices_max),
                              0.15, 0.35, radius);
    }
    return m;
}

Tensor sample_rect_mask(Rng& rng, int height, int width, double ratio_min, double ratio_max) {
    check_dims(height, width, 32);
    Tensor m({height, width});
    int rh, rw;
    rect_dims_for_ratio(rng, height, width, ratio_min, ratio_max, rh, rw);
    int y0 = rng.uniform_int(0, height - rh);
    int x0 = rng.uniform_int(0, width - rw);
    fill_rect(m, y0, x0, y0 + rh, x0 + rw);
    return m;
}

Tensor sample_complement_rect_mask(Rng& rng, int height, int width, double ratio_min,
                                   double ratio_max) {
    check_dims(height, width, 32);
    Tensor m = Tensor::full({height, width}, 1.0);
    int rh, rw;
    // the kept rectangle covers 1 - target of the frame
    rect_dims_for_ratio(rng, height, width, 1.0 - ratio_max, 1.0 - ratio_min, rh, rw);
    int y0 = rng.uniform_int(0, height - rh);
    int x0 = rng.uniform_int(0, width - rw);
    for (int y = y0; y < y0 + rh; ++y)
        for (int x = x0; x < x0 + rw; ++x) m.at(static_cast<int64_t>(y) * width + x) = 0.0;
    return m;
}

Tensor sample_training_mask(const MaskMixtureConfig& cfg, Rng& rng, int height, int width,
                            MaskInfo* info) {
    return sample_mixture(cfg, rng, height, width, info);
}

Tensor sample_eval_mask(Rng& rng, int height, int width, MaskInfo* info,
                        const MaskMixtureConfig& base) {
    return sample_mixture(base.eval_variant(), rng, height, width, info);
}

int PatchMask::count() const {
    int c = 0;
    for (uint8_t f : flags) c += f;
    return c;
}

std::vector<int> PatchMask::masked_indices() const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
        if (flags[i]) out.push_back(i);
    return out;
}

std::vector<int> PatchMask::visible_indices() const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
        if (!flags[i]) out.push_back(i);
    return out;
}

PatchMask to_patch_mask(const Tensor& mask, int patch_size) {
    int h = mask.dim(0), w = mask.dim(1);
    if (patch_size <= 0 || h % patch_size != 0 || w % patch_size != 0)
        throw MaskGenError("to_patch_mask: " + std::to_string(h) + "x" + std::to_string(w) +
                           " not divisible by patch size " + std::to_string(patch_size));
    PatchMask pm;
    pm.grid_h = h / patch_size;
    pm.grid_w = w / patch_size;
    pm.flags.assign(static_cast<size_t>(pm.grid_h) * pm.grid_w, 0);
    // a patch is masked iff it contains at least one masked pixel
    for (int gy = 0; gy < pm.grid_h; ++gy)
        for (int gx = 0; gx < pm.grid_w; ++gx) {
            bool any = false;
            for (int y = gy * patch_size; y < (gy + 1) * patch_size && !any; ++y)
                for (int x = gx * patch_size; x < (gx + 1) * patch_size; ++x)
                    if (mask.at(static_cast<int64_t>(y) * w + x) > 0.5) {
                        any = true;
                        break;
                    }
            pm.flags[static_cast<size_t>(gy) * pm.grid_w + gx] = any ? 1 : 0;
        }
    return pm;
}

PatchMask enlarge_to_ratio(const PatchMask& pm, double target_ratio, Rng& rng) {
    if (!(target_ratio > 0.0 && target_ratio <= 1.0))
        throw MaskGenError("enlarge_to_ratio: target must be in (0, 1]");
    int l = pm.size();
    int target = static_cast<int>(std::ceil(target_ratio * l));
    int have = pm.count();
    if (have >= target) return pm;
    PatchMask out = pm;
    std::vector<int> candidates = pm.visible_indices();
    // Fisher-Yates prefix shuffle picks the extra patches uniformly
    int need = target - have;
    for (int i = 0; i < need; ++i) {
        int j = rng.uniform_int(i, static_cast<int>(candidates.size()) - 1);
        std::swap(candidates[i], candidates[j]);
        out.flags[candidates[i]] = 1;
    }
    return out;
}

Tensor subtract_foreground(const Tensor& mask, const Tensor& segmentation) {
    if (mask.dims() != segmentation.dims())
        throw MaskGenError("subtract_foreground: shape mismatch " + shape_str(mask.dims()) +
                           " vs " + shape_str(segmentation.dims()));
    Tensor out = mask;
    for (int64_t i = 0; i < out.numel(); ++i)
        if (segmentation.at(i) > 0.5) out.at(i) = 0.0;
    return out;
}

double mask_ratio(const Tensor& mask) {
    return mask.array().sum() / static_cast<double>(mask.numel());
}

bool mask_is_connected(const Tensor& mask) {
    int h = mask.dim(0), w = mask.dim(1);
    std::vector<uint8_t> seen(static_cast<size_t>(h) * w, 0);
    int64_t total = 0, start = -1;
    for (int64_t i = 0; i < mask.numel(); ++i)
        if (mask.at(i) > 0.5) {
            ++total;
            if (start < 0) start = i;
        }
    if (total == 0) return true;
    std::deque<int64_t> q{start};
    seen[start] = 1;
    int64_t reached = 0;
    while (!q.empty()) {
        int64_t p = q.front();
        q.pop_front();
        ++reached;
        int y = static_cast<int>(p / w), x = static_cast<int>(p % w);
        const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
        for (int d = 0; d < 4; ++d) {
            int ny = y + dy[d], nx = x + dx[d];
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            int64_t np = static_cast<int64_t>(ny) * w + nx;
            if (!seen[np] && mask.at(np) > 0.5) {
                seen[np] = 1;
                q.push_back(np);
            }
        }
    }
    return reached == total;
}

}  // namespace patchwork::maskgen
