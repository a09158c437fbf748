/*
 * Copyright 2026 The FakeFormer Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "fakeformer/error.hpp"
#include "fakeformer/tensor.hpp"

namespace ff {

/// Interleaved row-major image with values in [0, 1]; 1 or 3 channels.
struct Image {
    int64_t height = 0;
    int64_t width = 0;
    int64_t channels = 0;
    std::vector<double> pix;

    static Image make(int64_t h, int64_t w, int64_t c, double fill = 0.0) {
        if (h <= 0 || w <= 0 || (c != 1 && c != 3))
            throw DimensionError("image: need positive dims and 1 or 3 channels");
        Image im;
        im.height = h;
        im.width = w;
        im.channels = c;
        im.pix.assign(static_cast<size_t>(h * w * c), fill);
        return im;
    }

    double& at(int64_t y, int64_t x, int64_t c) { return pix[(y * width + x) * channels + c]; }
    double at(int64_t y, int64_t x, int64_t c) const { return pix[(y * width + x) * channels + c]; }

    bool same_shape(const Image& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }

    void clamp01() {
        for (auto& v : pix) v = std::min(1.0, std::max(0.0, v));
    }
};

/// Rec. 601 luma; identity for single-channel input.
inline Image to_gray(const Image& im) {
    if (im.channels == 1) return im;
    Image g = Image::make(im.height, im.width, 1);
    for (int64_t y = 0; y < im.height; ++y)
        for (int64_t x = 0; x < im.width; ++x)
            g.at(y, x, 0) = 0.299 * im.at(y, x, 0) + 0.587 * im.at(y, x, 1) + 0.114 * im.at(y, x, 2);
    return g;
}

/// Bilinear sample with edge-clamped coordinates.
inline double bilinear_sample(const Image& im, double y, double x, int64_t c) {
    y = std::min(std::max(y, 0.0), static_cast<double>(im.height - 1));
    x = std::min(std::max(x, 0.0), static_cast<double>(im.width - 1));
    const int64_t y0 = static_cast<int64_t>(std::floor(y));
    const int64_t x0 = static_cast<int64_t>(std::floor(x));
    const int64_t y1 = std::min(y0 + 1, im.height - 1);
    const int64_t x1 = std::min(x0 + 1, im.width - 1);
    const double fy = y - static_cast<double>(y0);
    const double fx = x - static_cast<double>(x0);
    return im.at(y0, x0, c) * (1.0 - fy) * (1.0 - fx) + im.at(y0, x1, c) * (1.0 - fy) * fx +
           im.at(y1, x0, c) * fy * (1.0 - fx) + im.at(y1, x1, c) * fy * fx;
}

inline Image resize_bilinear(const Image& im, int64_t out_h, int64_t out_w) {
    Image out = Image::make(out_h, out_w, im.channels);
    // Align pixel centers of the two grids so identity sizes round-trip exactly.
    const double sy = out_h > 1 ? static_cast<double>(im.height - 1) / static_cast<double>(out_h - 1) : 0.0;
    const double sx = out_w > 1 ? static_cast<double>(im.width - 1) / static_cast<double>(out_w - 1) : 0.0;
    for (int64_t y = 0; y < out_h; ++y)
        for (int64_t x = 0; x < out_w; ++x)
            for (int64_t c = 0; c < im.channels; ++c)
                out.at(y, x, c) = bilinear_sample(im, y * sy, x * sx, c);
    return out;
}

/// Separable Gaussian blur; odd kernel derived from sigma when ksize == 0.
inline Image gaussian_blur(const Image& im, double sigma, int64_t ksize = 0) {
    if (sigma <= 0.0) return im;
    if (ksize == 0) ksize = std::max<int64_t>(3, 2 * static_cast<int64_t>(std::ceil(3.0 * sigma)) + 1);
    if (ksize % 2 == 0) throw DimensionError("gaussian_blur: kernel size must be odd");
    const int64_t r = ksize / 2;
    std::vector<double> k(static_cast<size_t>(ksize));
    double norm = 0.0;
    for (int64_t i = -r; i <= r; ++i) {
        k[i + r] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
        norm += k[i + r];
    }
    for (auto& v : k) v /= norm;
    Image tmp = Image::make(im.height, im.width, im.channels);
    for (int64_t y = 0; y < im.height; ++y)
        for (int64_t x = 0; x < im.width; ++x)
            for (int64_t c = 0; c < im.channels; ++c) {
                double acc = 0.0;
                for (int64_t i = -r; i <= r; ++i) {
                    const int64_t sx = std::min(std::max<int64_t>(x + i, 0), im.width - 1);
                    acc += k[i + r] * im.at(y, sx, c);
                }
                tmp.at(y, x, c) = acc;
            }
    Image out = Image::make(im.height, im.width, im.channels);
    for (int64_t y = 0; y < im.height; ++y)
        for (int64_t x = 0; x < im.width; ++x)
            for (int64_t c = 0; c < im.channels; ++c) {
                double acc = 0.0;
                for (int64_t i = -r; i <= r; ++i) {
                    const int64_t sy = std::min(std::max<int64_t>(y + i, 0), im.height - 1);
                    acc += k[i + r] * tmp.at(sy, x, c);
                }
                out.at(y, x, c) = acc;
            }
    return out;
}

/// Planar [C x H x W] tensor view of an image.
inline TensorPtr image_to_tensor(const Image& im) {
    auto t = Tensor::zeros({im.channels, im.height, im.width});
    for (int64_t c = 0; c < im.channels; ++c)
        for (int64_t y = 0; y < im.height; ++y)
            for (int64_t x = 0; x < im.width; ++x)
                t->data[(c * im.height + y) * im.width + x] = im.at(y, x, c);
    return t;
}

inline Image tensor_to_image(const Tensor& t) {
    if (t.dims.size() != 3) throw DimensionError("tensor_to_image: need [CxHxW]");
    Image im = Image::make(t.dims[1], t.dims[2], t.dims[0]);
    for (int64_t c = 0; c < im.channels; ++c)
        for (int64_t y = 0; y < im.height; ++y)
            for (int64_t x = 0; x < im.width; ++x)
                im.at(y, x, c) = t.data[(c * im.height + y) * im.width + x];
    return im;
}

}  // namespace ff
