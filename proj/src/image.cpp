// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#include "patchwork/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

namespace patchwork::img {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void read_png_raw(const std::string& path, std::vector<unsigned char>& pixels, int& w, int& h,
                  int& channels) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open PNG for reading: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("libpng failed reading " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    w = static_cast<int>(png_get_image_width(png, info));
    h = static_cast<int>(png_get_image_height(png, info));
    png_byte color = png_get_color_type(png, info);
    png_byte depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    channels = static_cast<int>(png_get_channels(png, info));
    pixels.resize(static_cast<size_t>(w) * h * channels);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) rows[y] = pixels.data() + static_cast<size_t>(y) * w * channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
}

void write_png_raw(const std::string& path, const std::vector<unsigned char>& pixels, int w, int h,
                   int channels) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot open PNG for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng failed writing " + path);
    }
    png_init_io(png, fp.get());
    int color = channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, w, h, 8, color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y)
        rows[y] = const_cast<png_bytep>(pixels.data() + static_cast<size_t>(y) * w * channels);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

Tensor read_png(const std::string& path) {
    std::vector<unsigned char> px;
    int w, h, ch;
    read_png_raw(path, px, w, h, ch);
    Tensor out({3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                unsigned char v = ch == 1 ? px[static_cast<size_t>(y) * w + x]
                                          : px[(static_cast<size_t>(y) * w + x) * ch + c];
                out.at((static_cast<int64_t>(c) * h + y) * w + x) = v / 255.0 * 2.0 - 1.0;
            }
    return out;
}

void write_png(const std::string& path, const Tensor& image) {
    if (image.ndim() != 3 || image.dim(0) != 3) throw std::invalid_argument("write_png: expects [3,H,W]");
    int h = image.dim(1), w = image.dim(2);
    std::vector<unsigned char> px(static_cast<size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = (image.at((static_cast<int64_t>(c) * h + y) * w + x) + 1.0) * 0.5;
                v = std::min(1.0, std::max(0.0, v));
                px[(static_cast<size_t>(y) * w + x) * 3 + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0));
            }
    write_png_raw(path, px, w, h, 3);
}

Tensor read_mask_png(const std::string& path) {
    std::vector<unsigned char> px;
    int w, h, ch;
    read_png_raw(path, px, w, h, ch);
    Tensor out({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            unsigned char v = px[(static_cast<size_t>(y) * w + x) * ch];
            out.at(static_cast<int64_t>(y) * w + x) = v >= 128 ? 1.0 : 0.0;
        }
    return out;
}

void write_mask_png(const std::string& path, const Tensor& mask) {
    if (mask.ndim() != 2) throw std::invalid_argument("write_mask_png: expects [H,W]");
    int h = mask.dim(0), w = mask.dim(1);
    std::vector<unsigned char> px(static_cast<size_t>(w) * h);
    for (int64_t i = 0; i < mask.numel(); ++i) px[i] = mask.at(i) > 0.5 ? 255 : 0;
    write_png_raw(path, px, w, h, 1);
}

Tensor resize_bilinear(const Tensor& image, int out_h, int out_w) {
    int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    Tensor out({c, out_h, out_w});
    for (int ch = 0; ch < c; ++ch)
        for (int oy = 0; oy < out_h; ++oy) {
            double sy = (oy + 0.5) * h / out_h - 0.5;
            int y0 = static_cast<int>(std::floor(sy));
            double fy = sy - y0;
            int y0c = std::min(std::max(y0, 0), h - 1);
            int y1c = std::min(std::max(y0 + 1, 0), h - 1);
            for (int ox = 0; ox < out_w; ++ox) {
                double sx = (ox + 0.5) * w / out_w - 0.5;
                int x0 = static_cast<int>(std::floor(sx));
                double fx = sx - x0;
                int x0c = std::min(std::max(x0, 0), w - 1);
                int x1c = std::min(std::max(x0 + 1, 0), w - 1);
                auto px = [&](int y, int x) {
                    return image.at((static_cast<int64_t>(ch) * h + y) * w + x);
                };
                double v = (1 - fy) * ((1 - fx) * px(y0c, x0c) + fx * px(y0c, x1c)) +
                           fy * ((1 - fx) * px(y1c, x0c) + fx * px(y1c, x1c));
                out.at((static_cast<int64_t>(ch) * out_h + oy) * out_w + ox) = v;
            }
        }
    return out;
}

Tensor center_crop_square(const Tensor& image) {
    int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    int side = std::min(h, w);
    int y0 = (h - side) / 2, x0 = (w - side) / 2;
    Tensor out({c, side, side});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x)
                out.at((static_cast<int64_t>(ch) * side + y) * side + x) =
                    image.at((static_cast<int64_t>(ch) * h + y0 + y) * w + x0 + x);
    return out;
}

Tensor apply_mask(const Tensor& image, const Tensor& mask) {
    int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    if (mask.dim(0) != h || mask.dim(1) != w)
        throw std::invalid_argument("apply_mask: mask shape " + shape_str(mask.dims()) +
                                    " does not match image " + shape_str(image.dims()));
    Tensor out = image;
    for (int ch = 0; ch < c; ++ch)
        for (int64_t p = 0; p < static_cast<int64_t>(h) * w; ++p)
            if (mask.at(p) > 0.5) out.at(static_cast<int64_t>(ch) * h * w + p) = 0.0;
    return out;
}

Tensor downsample_mask_any(const Tensor& mask, int factor) {
    int h = mask.dim(0), w = mask.dim(1);
    if (h % factor != 0 || w % factor != 0)
        throw std::invalid_argument("downsample_mask_any: dims not divisible by factor");
    int oh = h / factor, ow = w / factor;
    Tensor out({oh, ow});
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double v = 0.0;
            for (int dy = 0; dy < factor && v == 0.0; ++dy)
                for (int dx = 0; dx < factor; ++dx)
                    if (mask.at(static_cast<int64_t>(y * factor + dy) * w + x * factor + dx) > 0.5) {
                        v = 1.0;
                        break;
                    }
            out.at(static_cast<int64_t>(y) * ow + x) = v;
        }
    return out;
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    v = mx;
    double d = mx - mn;
    s = mx <= 0.0 ? 0.0 : d / mx;
    if (d <= 0.0) {
        h = 0.0;
        return;
    }
    if (mx == r)
        h = (g - b) / d + (g < b ? 6.0 : 0.0);
    else if (mx == g)
        h = (b - r) / d + 2.0;
    else
        h = (r - g) / d + 4.0;
    h /= 6.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    h = h - std::floor(h);
    double hf = h * 6.0;
    int i = static_cast<int>(hf) % 6;
    double f = hf - std::floor(hf);
    double p = v * (1.0 - s), q = v * (1.0 - s * f), t = v * (1.0 - s * (1.0 - f));
    switch (i) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

}  // namespace patchwork::img
