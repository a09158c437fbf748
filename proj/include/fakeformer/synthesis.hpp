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

// Pseudo-fake synthesis: landmark hull masks, mask deformation, image
// blending, self-blended and cross-blended fake generation, and a procedural
// toy-face corpus so the pipeline runs without external data.

#include <array>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "fakeformer/error.hpp"
#include "fakeformer/image.hpp"
#include "fakeformer/rng.hpp"

namespace ff {

struct LandmarkSet {
    std::vector<std::pair<double, double>> points;  // (x, y) pixel coords
    int64_t height = 0;
    int64_t width = 0;
};

using BlendMask = Image;    // single channel, zero on the outermost ring
using BoundaryMap = Image;  // single channel, 4 * m * (1 - m)

struct PseudoFake {
    Image image;
    BlendMask mask;
    BoundaryMap boundary;
    uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Convex hull mask
// ---------------------------------------------------------------------------

namespace detail {

inline double cross_z(const std::pair<double, double>& o, const std::pair<double, double>& a,
                      const std::pair<double, double>& b) {
    return (a.first - o.first) * (b.second - o.second) -
           (a.second - o.second) * (b.first - o.first);
}

/// Monotone-chain convex hull, counter-clockwise in image coordinates
/// (y grows downward, so "counter-clockwise" here means screen-clockwise).
inline std::vector<std::pair<double, double>> convex_hull(
    std::vector<std::pair<double, double>> pts) {
    if (pts.size() < 3) throw SynthesisError("hull: need at least 3 landmarks");
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    const size_t n = pts.size();
    if (n < 3) throw SynthesisError("hull: need at least 3 distinct landmarks");
    std::vector<std::pair<double, double>> h(2 * n);
    size_t k = 0;
    for (size_t i = 0; i < n; ++i) {
        while (k >= 2 && cross_z(h[k - 2], h[k - 1], pts[i]) <= 0.0) --k;
        h[k++] = pts[i];
    }
    const size_t lower = k + 1;
    for (size_t i = n - 1; i-- > 0;) {
        while (k >= lower && cross_z(h[k - 2], h[k - 1], pts[i]) <= 0.0) --k;
        h[k++] = pts[i];
    }
    h.resize(k - 1);
    if (h.size() < 3) throw SynthesisError("hull: landmarks are collinear");
    return h;
}

}  // namespace detail

/// Binary mask of the landmark convex hull.  A pixel belongs to the mask when
/// its center lies inside (or exactly on) the hull polygon, found by scanline
/// span filling.  The outermost pixel ring is always zero.
inline BlendMask convex_hull_mask(const LandmarkSet& lms, int64_t h, int64_t w) {
    const auto poly = detail::convex_hull(lms.points);
    BlendMask mask = Image::make(h, w, 1);
    const size_t ne = poly.size();
    for (int64_t y = 1; y < h - 1; ++y) {
        const double fy = static_cast<double>(y);
        double x_lo = std::numeric_limits<double>::infinity();
        double x_hi = -std::numeric_limits<double>::infinity();
        bool hit = false;
        for (size_t e = 0; e < ne; ++e) {
            const auto& a = poly[e];
            const auto& b = poly[(e + 1) % ne];
            const double y0 = std::min(a.second, b.second);
            const double y1 = std::max(a.second, b.second);
            if (fy < y0 || fy > y1) continue;
            hit = true;
            if (a.second == b.second) {
                x_lo = std::min({x_lo, a.first, b.first});
                x_hi = std::max({x_hi, a.first, b.first});
            } else {
                const double t = (fy - a.second) / (b.second - a.second);
                const double x = a.first + t * (b.first - a.first);
                x_lo = std::min(x_lo, x);
                x_hi = std::max(x_hi, x);
            }
        }
        if (!hit) continue;
        const int64_t px0 = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(x_lo)));
        const int64_t px1 = std::min<int64_t>(w - 2, static_cast<int64_t>(std::floor(x_hi)));
        for (int64_t x = px0; x <= px1; ++x) mask.at(y, x, 0) = 1.0;
    }
    return mask;
}

// ---------------------------------------------------------------------------
// Mask deformation
// ---------------------------------------------------------------------------

struct DeformParams {
    double dx = 0.0, dy = 0.0;  // translation, pixels
    double scale = 1.0;         // about the image center
    int64_t elastic_cell = 16;  // node spacing of the displacement field
    int64_t elastic_ny = 0, elastic_nx = 0;
    std::vector<double> elastic_dx, elastic_dy;  // per-node displacements
    int64_t blur_ksize = 1;                      // 1 disables the blur
    double blur_sigma = 0.0;

    static DeformParams identity() { return {}; }

    static DeformParams random(Rng& rng, int64_t h, int64_t w) {
        DeformParams p;
        p.dx = rng.uniform(-4.0, 4.0);
        p.dy = rng.uniform(-4.0, 4.0);
        p.scale = rng.uniform(0.95, 1.05);
        p.elastic_cell = 16;
        p.elastic_ny = h / p.elastic_cell + 2;
        p.elastic_nx = w / p.elastic_cell + 2;
        p.elastic_dx.resize(static_cast<size_t>(p.elastic_ny * p.elastic_nx));
        p.elastic_dy.resize(static_cast<size_t>(p.elastic_ny * p.elastic_nx));
        for (auto& v : p.elastic_dx) v = rng.uniform(-4.0, 4.0);
        for (auto& v : p.elastic_dy) v = rng.uniform(-4.0, 4.0);
        // One neighbor-averaging pass keeps the field smooth so local area
        // distortion stays small while the 4 px amplitude cap still holds.
        auto smooth = [&](std::vector<double>& f) {
            std::vector<double> s(f.size());
            for (int64_t y = 0; y < p.elastic_ny; ++y)
                for (int64_t x = 0; x < p.elastic_nx; ++x) {
                    const auto at = [&](int64_t yy, int64_t xx) {
                        yy = std::min(std::max<int64_t>(yy, 0), p.elastic_ny - 1);
                        xx = std::min(std::max<int64_t>(xx, 0), p.elastic_nx - 1);
                        return f[yy * p.elastic_nx + xx];
                    };
                    s[y * p.elastic_nx + x] = 0.5 * at(y, x) + 0.125 * (at(y - 1, x) + at(y + 1, x) +
                                                                        at(y, x - 1) + at(y, x + 1));
                }
            f = std::move(s);
        };
        smooth(p.elastic_dx);
        smooth(p.elastic_dy);
        p.blur_ksize = 5 + 2 * rng.uniform_int(0, 5);  // {5,7,9,11,13,15}
        p.blur_sigma = static_cast<double>(p.blur_ksize) / 4.0;
        return p;
    }
};

/// Affine jitter, then a smooth elastic displacement, then a Gaussian blur.
/// With identity parameters the output is bit-identical to the input.
inline BlendMask deform_mask(const BlendMask& mask, const DeformParams& p) {
    if (mask.channels != 1) throw SynthesisError("deform_mask: expected single-channel mask");
    const int64_t h = mask.height, w = mask.width;
    const double cy = static_cast<double>(h - 1) / 2.0;
    const double cx = static_cast<double>(w - 1) / 2.0;

    auto elastic_at = [&](double y, double x, const std::vector<double>& node) {
        if (node.empty()) return 0.0;
        const double gy = y / static_cast<double>(p.elastic_cell);
        const double gx = x / static_cast<double>(p.elastic_cell);
        const int64_t y0 = std::min(std::max<int64_t>(static_cast<int64_t>(std::floor(gy)), 0),
                                    p.elastic_ny - 1);
        const int64_t x0 = std::min(std::max<int64_t>(static_cast<int64_t>(std::floor(gx)), 0),
                                    p.elastic_nx - 1);
        const int64_t y1 = std::min(y0 + 1, p.elastic_ny - 1);
        const int64_t x1 = std::min(x0 + 1, p.elastic_nx - 1);
        const double fy = gy - static_cast<double>(y0);
        const double fx = gx - static_cast<double>(x0);
        return node[y0 * p.elastic_nx + x0] * (1.0 - fy) * (1.0 - fx) +
               node[y0 * p.elastic_nx + x1] * (1.0 - fy) * fx +
               node[y1 * p.elastic_nx + x0] * fy * (1.0 - fx) +
               node[y1 * p.elastic_nx + x1] * fy * fx;
    };

    BlendMask out = Image::make(h, w, 1);
    for (int64_t y = 1; y < h - 1; ++y)
        for (int64_t x = 1; x < w - 1; ++x) {
            // Inverse of: translate then scale about the center.
            double sy = cy + (static_cast<double>(y) - p.dy - cy) / p.scale;
            double sx = cx + (static_cast<double>(x) - p.dx - cx) / p.scale;
            sy += elastic_at(static_cast<double>(y), static_cast<double>(x), p.elastic_dy);
            sx += elastic_at(static_cast<double>(y), static_cast<double>(x), p.elastic_dx);
            out.at(y, x, 0) = bilinear_sample(mask, sy, sx, 0);
        }
    if (p.blur_ksize > 1) {
        out = gaussian_blur(out, p.blur_sigma, p.blur_ksize);
        for (int64_t y = 0; y < h; ++y) {
            out.at(y, 0, 0) = 0.0;
            out.at(y, w - 1, 0) = 0.0;
        }
        for (int64_t x = 0; x < w; ++x) {
            out.at(0, x, 0) = 0.0;
            out.at(h - 1, x, 0) = 0.0;
        }
    }
    out.clamp01();
    return out;
}

// ---------------------------------------------------------------------------
// Blending
// ---------------------------------------------------------------------------

/// Per-channel convex combination: mask * fg + (1 - mask) * bg.
inline Image blend(const Image& fg, const Image& bg, const BlendMask& mask) {
    if (!fg.same_shape(bg) || fg.height != mask.height || fg.width != mask.width ||
        mask.channels != 1)
        throw DimensionError("blend: dimension mismatch");
    Image out = Image::make(fg.height, fg.width, fg.channels);
    for (int64_t y = 0; y < fg.height; ++y)
        for (int64_t x = 0; x < fg.width; ++x) {
            const double m = mask.at(y, x, 0);
            for (int64_t c = 0; c < fg.channels; ++c)
                out.at(y, x, c) = m * fg.at(y, x, c) + (1.0 - m) * bg.at(y, x, c);
        }
    return out;
}

/// 4 * m * (1 - m): zero where the mask is hard, peaking at 1 where m = 0.5.
inline BoundaryMap blending_boundary(const BlendMask& mask) {
    if (mask.channels != 1) throw DimensionError("blending_boundary: expected single channel");
    BoundaryMap b = Image::make(mask.height, mask.width, 1);
    for (size_t i = 0; i < mask.pix.size(); ++i) b.pix[i] = 4.0 * mask.pix[i] * (1.0 - mask.pix[i]);
    return b;
}

// ---------------------------------------------------------------------------
// Photometric and geometric jitter
// ---------------------------------------------------------------------------

struct PhotometricParams {
    double brightness = 1.0;  // multiplicative
    double contrast = 1.0;    // about the image mean
    double hue_shift = 0.0;   // fraction of the hue wheel

    static PhotometricParams identity() { return {}; }

    static PhotometricParams random(Rng& rng) {
        PhotometricParams p;
        p.brightness = rng.uniform(0.9, 1.1);
        p.contrast = rng.uniform(0.9, 1.1);
        p.hue_shift = rng.uniform(-0.1, 0.1);
        return p;
    }

    bool is_identity() const { return brightness == 1.0 && contrast == 1.0 && hue_shift == 0.0; }
};

namespace detail {

inline void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    v = mx;
    const double d = mx - mn;
    s = mx > 0.0 ? d / mx : 0.0;
    if (d == 0.0) {
        h = 0.0;
    } else if (mx == r) {
        h = std::fmod((g - b) / d, 6.0) / 6.0;
    } else if (mx == g) {
        h = ((b - r) / d + 2.0) / 6.0;
    } else {
        h = ((r - g) / d + 4.0) / 6.0;
    }
    if (h < 0.0) h += 1.0;
}

inline void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    const double hh = std::fmod(h < 0.0 ? h + 1.0 : h, 1.0) * 6.0;
    const int i = static_cast<int>(hh) % 6;
    const double f = hh - std::floor(hh);
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    switch (i) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

}  // namespace detail

inline Image apply_photometric(const Image& im, const PhotometricParams& p) {
    if (p.is_identity()) return im;
    Image out = im;
    if (p.hue_shift != 0.0 && im.channels == 3) {
        for (int64_t y = 0; y < im.height; ++y)
            for (int64_t x = 0; x < im.width; ++x) {
                double h, s, v;
                detail::rgb_to_hsv(out.at(y, x, 0), out.at(y, x, 1), out.at(y, x, 2), h, s, v);
                detail::hsv_to_rgb(h + p.hue_shift, s, v, out.at(y, x, 0), out.at(y, x, 1),
                                   out.at(y, x, 2));
            }
    }
    double mean = 0.0;
    for (double v : out.pix) mean += v;
    mean /= static_cast<double>(out.pix.size());
    for (auto& v : out.pix) v = (mean + (v - mean) * p.contrast) * p.brightness;
    out.clamp01();
    return out;
}

/// Translation plus uniform resize about the image center, bilinear.
/// Identity parameters return the input bit-exactly.
inline Image apply_geometric(const Image& im, double dx, double dy, double scale) {
    if (dx == 0.0 && dy == 0.0 && scale == 1.0) return im;
    Image out = Image::make(im.height, im.width, im.channels);
    const double cy = static_cast<double>(im.height - 1) / 2.0;
    const double cx = static_cast<double>(im.width - 1) / 2.0;
    for (int64_t y = 0; y < im.height; ++y)
        for (int64_t x = 0; x < im.width; ++x) {
            const double sy = cy + (static_cast<double>(y) - dy - cy) / scale;
            const double sx = cx + (static_cast<double>(x) - dx - cx) / scale;
            for (int64_t c = 0; c < im.channels; ++c)
                out.at(y, x, c) = bilinear_sample(im, sy, sx, c);
        }
    return out;
}

// ---------------------------------------------------------------------------
// Self-blending
// ---------------------------------------------------------------------------

struct SelfBlendParams {
    PhotometricParams source_photo;
    PhotometricParams target_photo;
    double src_dx = 0.0, src_dy = 0.0, src_scale = 1.0;
    DeformParams deform;
    std::optional<BlendMask> forced_mask;  // overrides the hull mask (tests)

    static SelfBlendParams identity() { return {}; }

    static SelfBlendParams random(Rng& rng, int64_t h, int64_t w) {
        SelfBlendParams p;
        p.source_photo = PhotometricParams::random(rng);
        p.target_photo = PhotometricParams::random(rng);
        p.src_dx = rng.uniform(-3.0, 3.0);
        p.src_dy = rng.uniform(-3.0, 3.0);
        p.src_scale = rng.uniform(0.98, 1.02);
        p.deform = DeformParams::random(rng, h, w);
        return p;
    }
};

/// Self-blended pseudo-fake: two jittered copies of one image blended through
/// the deformed landmark-hull mask.
inline PseudoFake make_self_blended(const Image& img, const LandmarkSet& lms,
                                    const SelfBlendParams& p, uint64_t seed = 0) {
    Image source = apply_photometric(img, p.source_photo);
    source = apply_geometric(source, p.src_dx, p.src_dy, p.src_scale);
    Image target = apply_photometric(img, p.target_photo);
    BlendMask mask =
        p.forced_mask ? *p.forced_mask
                      : deform_mask(convex_hull_mask(lms, img.height, img.width), p.deform);
    PseudoFake out;
    out.image = blend(source, target, mask);
    out.image.clamp01();
    out.mask = std::move(mask);
    out.boundary = blending_boundary(out.mask);
    out.seed = seed;
    return out;
}

inline PseudoFake make_self_blended(const Image& img, const LandmarkSet& lms, Rng& rng,
                                    uint64_t seed = 0) {
    return make_self_blended(img, lms, SelfBlendParams::random(rng, img.height, img.width), seed);
}

// ---------------------------------------------------------------------------
// Cross-identity blending
// ---------------------------------------------------------------------------

/// Least-squares affine fit (6 DoF) of src -> dst point sets, returned as a
/// row-major 2x3 matrix {a, b, tx, c, d, ty}.
inline std::array<double, 6> fit_affine(const std::vector<std::pair<double, double>>& src,
                                        const std::vector<std::pair<double, double>>& dst) {
    if (src.size() != dst.size() || src.size() < 3)
        throw SynthesisError("fit_affine: need >=3 point pairs of equal count");
    // Normal equations: G = sum [x,y,1]^T [x,y,1]; rhs per output coordinate.
    double g[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
    double rx[3] = {0, 0, 0}, ry[3] = {0, 0, 0};
    for (size_t i = 0; i < src.size(); ++i) {
        const double v[3] = {src[i].first, src[i].second, 1.0};
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) g[a][b] += v[a] * v[b];
            rx[a] += v[a] * dst[i].first;
            ry[a] += v[a] * dst[i].second;
        }
    }
    // Gaussian elimination with partial pivoting on [G | rx | ry].
    double m[3][5];
    for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) m[a][b] = g[a][b];
        m[a][3] = rx[a];
        m[a][4] = ry[a];
    }
    double scale_ref = 0.0;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) scale_ref = std::max(scale_ref, std::abs(m[a][b]));
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
        if (std::abs(m[piv][col]) < 1e-9 * std::max(1.0, scale_ref))
            throw SynthesisError("fit_affine: degenerate landmark configuration");
        if (piv != col)
            for (int b = 0; b < 5; ++b) std::swap(m[col][b], m[piv][b]);
        for (int r = 0; r < 3; ++r) {
            if (r == col) continue;
            const double f = m[r][col] / m[col][col];
            for (int b = col; b < 5; ++b) m[r][b] -= f * m[col][b];
        }
    }
    return {m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2],
            m[0][4] / m[0][0], m[1][4] / m[1][1], m[2][4] / m[2][2]};
}

/// Bilinear warp by the forward affine A (src -> dst); each output pixel is
/// sampled at A^{-1} * (x, y), edge-clamped.
inline Image warp_affine(const Image& im, const std::array<double, 6>& a) {
    const double det = a[0] * a[4] - a[1] * a[3];
    if (std::abs(det) < 1e-12) throw SynthesisError("warp_affine: singular transform");
    const double ia = a[4] / det, ib = -a[1] / det, ic = -a[3] / det, id = a[0] / det;
    Image out = Image::make(im.height, im.width, im.channels);
    for (int64_t y = 0; y < im.height; ++y)
        for (int64_t x = 0; x < im.width; ++x) {
            const double vx = static_cast<double>(x) - a[2];
            const double vy = static_cast<double>(y) - a[5];
            const double sx = ia * vx + ib * vy;
            const double sy = ic * vx + id * vy;
            for (int64_t c = 0; c < im.channels; ++c)
                out.at(y, x, c) = bilinear_sample(im, sy, sx, c);
        }
    return out;
}

/// Cross-identity pseudo-fake: the foreground face is warped onto the
/// background by the landmark affine fit and blended through the deformed
/// hull of the background landmarks.
inline PseudoFake make_cross_blended(const Image& fg, const LandmarkSet& fg_lms, const Image& bg,
                                     const LandmarkSet& bg_lms, Rng& rng, uint64_t seed = 0) {
    if (!fg.same_shape(bg)) throw DimensionError("make_cross_blended: image dims differ");
    const auto a = fit_affine(fg_lms.points, bg_lms.points);
    Image warped = warp_affine(fg, a);
    BlendMask mask = deform_mask(convex_hull_mask(bg_lms, bg.height, bg.width),
                                 DeformParams::random(rng, bg.height, bg.width));
    PseudoFake out;
    out.image = blend(warped, bg, mask);
    out.image.clamp01();
    out.mask = std::move(mask);
    out.boundary = blending_boundary(out.mask);
    out.seed = seed;
    return out;
}

// ---------------------------------------------------------------------------
// Procedural toy faces
// ---------------------------------------------------------------------------

namespace detail {

inline void fill_ellipse(Image& im, double cy, double cx, double ry, double rx, double r, double g,
                         double b, double softness = 1.5) {
    const int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(cy - ry - softness - 1));
    const int64_t y1 = std::min(im.height - 1, static_cast<int64_t>(cy + ry + softness + 1));
    const int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(cx - rx - softness - 1));
    const int64_t x1 = std::min(im.width - 1, static_cast<int64_t>(cx + rx + softness + 1));
    for (int64_t y = y0; y <= y1; ++y)
        for (int64_t x = x0; x <= x1; ++x) {
            const double ny = (static_cast<double>(y) - cy) / ry;
            const double nx = (static_cast<double>(x) - cx) / rx;
            const double d = std::sqrt(ny * ny + nx * nx);
            // Soft edge of roughly `softness` pixels.
            const double edge = softness / std::max(ry, rx);
            double alpha = 1.0;
            if (d > 1.0) alpha = std::max(0.0, 1.0 - (d - 1.0) / edge);
            if (alpha <= 0.0) continue;
            im.at(y, x, 0) = im.at(y, x, 0) * (1.0 - alpha) + r * alpha;
            im.at(y, x, 1) = im.at(y, x, 1) * (1.0 - alpha) + g * alpha;
            im.at(y, x, 2) = im.at(y, x, 2) * (1.0 - alpha) + b * alpha;
        }
}

}  // namespace detail

/// Procedurally rendered face-like image with a 68-point landmark layout.
/// Deterministic in (seed, size); landmarks always stay inside the frame.
inline std::pair<Image, LandmarkSet> gen_toy_face(uint64_t seed, int64_t size = 64) {
    Rng rng(derive_seed(seed, 0x746f7966616365ULL));  // namespace the stream
    const int64_t h = size, w = size;
    Image im = Image::make(h, w, 3);

    // Background: two-tone gradient plus low-amplitude sinusoidal texture.
    const double base_r = rng.uniform(0.1, 0.5), base_g = rng.uniform(0.1, 0.5),
                 base_b = rng.uniform(0.2, 0.6);
    const double fy = rng.uniform(0.02, 0.12), fx = rng.uniform(0.02, 0.12);
    const double py = rng.uniform(0.0, 6.28), px = rng.uniform(0.0, 6.28);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            const double tex = 0.06 * std::sin(fy * y + py) * std::cos(fx * x + px) +
                               0.04 * (static_cast<double>(y) / h);
            im.at(y, x, 0) = base_r + tex;
            im.at(y, x, 1) = base_g + tex;
            im.at(y, x, 2) = base_b + tex;
        }

    // Face ellipse with mild per-seed jitter of position, size, and tone.
    const double cy = h / 2.0 + rng.uniform(-2.0, 2.0);
    const double cx = w / 2.0 + rng.uniform(-2.0, 2.0);
    const double ry = rng.uniform(0.30, 0.38) * h;
    const double rx = rng.uniform(0.24, 0.32) * w;
    const double skin_r = rng.uniform(0.72, 0.92);
    const double skin_g = skin_r * rng.uniform(0.72, 0.84);
    const double skin_b = skin_g * rng.uniform(0.72, 0.86);
    detail::fill_ellipse(im, cy, cx, ry, rx, skin_r, skin_g, skin_b);

    // Eyes, pupils, brows, nose shading, mouth.
    const double eye_dy = -0.25 * ry, eye_dx = 0.42 * rx;
    const double eye_ry = 0.10 * ry + rng.uniform(-0.4, 0.4);
    const double eye_rx = 0.18 * rx + rng.uniform(-0.4, 0.4);
    for (int side = -1; side <= 1; side += 2) {
        const double ex = cx + side * eye_dx, ey = cy + eye_dy;
        detail::fill_ellipse(im, ey, ex, eye_ry, eye_rx, 0.95, 0.95, 0.95);
        detail::fill_ellipse(im, ey, ex, eye_ry * 0.55, eye_rx * 0.4, rng.uniform(0.05, 0.3),
                             rng.uniform(0.1, 0.35), rng.uniform(0.15, 0.5));
        detail::fill_ellipse(im, ey - eye_ry - 2.5, ex, 1.1, eye_rx * 1.1, skin_r * 0.45,
                             skin_g * 0.4, skin_b * 0.4);
    }
    detail::fill_ellipse(im, cy + 0.08 * ry, cx, 0.16 * ry, 0.07 * rx, skin_r * 0.88,
                         skin_g * 0.84, skin_b * 0.84);
    const double mouth_y = cy + 0.48 * ry, mouth_ry = 0.085 * ry, mouth_rx = 0.42 * rx;
    detail::fill_ellipse(im, mouth_y, cx, mouth_ry, mouth_rx, rng.uniform(0.55, 0.75),
                         rng.uniform(0.15, 0.3), rng.uniform(0.15, 0.3));

    // Pixel-level grain over the whole frame, like skin texture plus sensor
    // noise.  Besides looking less like clip art, it gives every frame a
    // crisp high-frequency baseline, so the slight smoothing that any
    // resampled or blended region carries becomes measurable.
    const double grain = rng.uniform(0.03, 0.06);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            const double n = rng.uniform(-grain, grain);
            for (int64_t c = 0; c < 3; ++c) im.at(y, x, c) += n;
        }
    im.clamp01();

    // 68-point layout: 17 jaw, 2x5 brows, 9 nose, 2x6 eyes, 20 mouth.
    LandmarkSet lms;
    lms.height = h;
    lms.width = w;
    auto push = [&](double x, double y) {
        x = std::min(std::max(x, 1.0), static_cast<double>(w - 2));
        y = std::min(std::max(y, 1.0), static_cast<double>(h - 2));
        lms.points.emplace_back(x, y);
    };
    for (int i = 0; i < 17; ++i) {  // left ear over the chin to the right ear
        const double t = M_PI * (1.0 - static_cast<double>(i) / 16.0);
        push(cx + rx * std::cos(t), cy + ry * std::sin(t));
    }
    for (int side = -1; side <= 1; side += 2)  // brows
        for (int i = 0; i < 5; ++i) {
            const double f = static_cast<double>(i) / 4.0;
            const double x = cx + side * (0.2 * rx + 0.5 * rx * f);
            const double y = cy - 0.45 * ry - 0.08 * ry * std::sin(M_PI * f);
            push(x, y);
        }
    for (int i = 0; i < 4; ++i)  // nose bridge
        push(cx, cy - 0.25 * ry + 0.14 * ry * i);
    for (int i = 0; i < 5; ++i)  // nose base
        push(cx + 0.15 * rx * (i - 2) / 2.0, cy + 0.22 * ry);
    for (int side = -1; side <= 1; side += 2)  // eye rings
        for (int i = 0; i < 6; ++i) {
            const double t = 2.0 * M_PI * i / 6.0;
            push(cx + side * eye_dx + eye_rx * std::cos(t), cy + eye_dy + eye_ry * std::sin(t));
        }
    for (int i = 0; i < 12; ++i) {  // outer lip ring
        const double t = 2.0 * M_PI * i / 12.0;
        push(cx + mouth_rx * std::cos(t), mouth_y + mouth_ry * std::sin(t));
    }
    for (int i = 0; i < 8; ++i) {  // inner lip ring
        const double t = 2.0 * M_PI * i / 8.0;
        push(cx + 0.6 * mouth_rx * std::cos(t), mouth_y + 0.6 * mouth_ry * std::sin(t));
    }
    return {std::move(im), std::move(lms)};
}

}  // namespace ff
