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

// Deliberately naive reimplementations of the performance-sensitive kernels.
// Each function here favors the most literal formulation possible (separate
// algorithms, not refactored shares of the production code) so the self-test
// command and the unit tests can cross-check the fast paths against them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "fakeformer/error.hpp"

namespace ff::ref {

/// Triple-loop matmul in ijk order, accumulating one output cell at a time.
inline std::vector<double> matmul(const std::vector<double>& a, int64_t m, int64_t k,
                                  const std::vector<double>& b, int64_t n) {
    std::vector<double> c(static_cast<size_t>(m * n), 0.0);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] = acc;
        }
    return c;
}

/// Row-wise softmax over a [rows x len] buffer, textbook three passes.
inline std::vector<double> softmax_rows(const std::vector<double>& x, int64_t rows, int64_t len) {
    std::vector<double> out(x.size());
    for (int64_t r = 0; r < rows; ++r) {
        double mx = x[r * len];
        for (int64_t i = 1; i < len; ++i) mx = std::max(mx, x[r * len + i]);
        double denom = 0.0;
        for (int64_t i = 0; i < len; ++i) denom += std::exp(x[r * len + i] - mx);
        for (int64_t i = 0; i < len; ++i) out[r * len + i] = std::exp(x[r * len + i] - mx) / denom;
    }
    return out;
}

/// Two-pass per-row normalization over a [rows x d] buffer.
inline std::vector<double> layer_norm_rows(const std::vector<double>& x, int64_t rows, int64_t d,
                                           const std::vector<double>& gamma,
                                           const std::vector<double>& beta, double eps) {
    std::vector<double> out(x.size());
    for (int64_t r = 0; r < rows; ++r) {
        double mu = 0.0;
        for (int64_t i = 0; i < d; ++i) mu += x[r * d + i];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t i = 0; i < d; ++i) var += (x[r * d + i] - mu) * (x[r * d + i] - mu);
        var /= static_cast<double>(d);
        for (int64_t i = 0; i < d; ++i)
            out[r * d + i] = (x[r * d + i] - mu) / std::sqrt(var + eps) * gamma[i] + beta[i];
    }
    return out;
}

/// Six nested loops, per-pixel bounds test, "same" zero padding, stride 1.
inline std::vector<double> conv2d_same(const std::vector<double>& x, int64_t cin, int64_t h,
                                       int64_t w, const std::vector<double>& kern, int64_t cout,
                                       int64_t k, const std::vector<double>& bias) {
    const int64_t r = k / 2;
    std::vector<double> out(static_cast<size_t>(cout * h * w), 0.0);
    for (int64_t o = 0; o < cout; ++o)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t xx = 0; xx < w; ++xx) {
                double acc = bias[o];
                for (int64_t c = 0; c < cin; ++c)
                    for (int64_t ky = 0; ky < k; ++ky)
                        for (int64_t kx = 0; kx < k; ++kx) {
                            const int64_t sy = y + ky - r, sx = xx + kx - r;
                            if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                            acc += x[(c * h + sy) * w + sx] * kern[((o * cin + c) * k + ky) * k + kx];
                        }
                out[(o * h + y) * w + xx] = acc;
            }
    return out;
}

/// Per-cell scan max over non-overlapping p x p blocks of an [h x w] map.
inline std::vector<double> block_max(const std::vector<double>& x, int64_t h, int64_t w, int64_t p) {
    const int64_t gh = h / p, gw = w / p;
    std::vector<double> out(static_cast<size_t>(gh * gw));
    for (int64_t gy = 0; gy < gh; ++gy)
        for (int64_t gx = 0; gx < gw; ++gx) {
            double best = -std::numeric_limits<double>::infinity();
            for (int64_t y = gy * p; y < (gy + 1) * p; ++y)
                for (int64_t xx = gx * p; xx < (gx + 1) * p; ++xx)
                    best = std::max(best, x[y * w + xx]);
            out[gy * gw + gx] = best;
        }
    return out;
}

inline std::vector<double> block_mean(const std::vector<double>& x, int64_t h, int64_t w,
                                      int64_t p) {
    const int64_t gh = h / p, gw = w / p;
    std::vector<double> out(static_cast<size_t>(gh * gw));
    for (int64_t gy = 0; gy < gh; ++gy)
        for (int64_t gx = 0; gx < gw; ++gx) {
            double acc = 0.0;
            for (int64_t y = gy * p; y < (gy + 1) * p; ++y)
                for (int64_t xx = gx * p; xx < (gx + 1) * p; ++xx) acc += x[y * w + xx];
            out[gy * gw + gx] = acc / static_cast<double>(p * p);
        }
    return out;
}

/// All cells of an aggregated grid whose value is within `tie_tol` of the
/// global maximum, found by a full scan.  Returned sorted by linear index.
inline std::vector<int64_t> argmax_cells(const std::vector<double>& grid, double tie_tol) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : grid) mx = std::max(mx, v);
    std::vector<int64_t> cells;
    for (int64_t i = 0; i < static_cast<int64_t>(grid.size()); ++i)
        if (grid[i] >= mx - tie_tol) cells.push_back(i);
    return cells;
}

/// O(n^2) probability that a positive outscores a negative, ties worth 1/2.
inline double auc_pair_count(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw MetricError("auc: size mismatch");
    double wins = 0.0;
    int64_t pairs = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    if (pairs == 0) throw MetricError("auc: need both classes");
    return wins / static_cast<double>(pairs);
}

/// Convex hull by gift wrapping (Jarvis march), counter-clockwise order.
/// Throws when all points are collinear.
inline std::vector<std::pair<double, double>> hull_gift_wrap(
    const std::vector<std::pair<double, double>>& pts) {
    if (pts.size() < 3) throw SynthesisError("hull: need at least 3 points");
    size_t start = 0;
    for (size_t i = 1; i < pts.size(); ++i)
        if (pts[i] < pts[start]) start = i;
    std::vector<std::pair<double, double>> hull;
    size_t cur = start;
    do {
        hull.push_back(pts[cur]);
        size_t next = (cur + 1) % pts.size();
        for (size_t i = 0; i < pts.size(); ++i) {
            const double cross = (pts[next].first - pts[cur].first) * (pts[i].second - pts[cur].second) -
                                 (pts[next].second - pts[cur].second) * (pts[i].first - pts[cur].first);
            const double d_next = (pts[next].first - pts[cur].first) * (pts[next].first - pts[cur].first) +
                                  (pts[next].second - pts[cur].second) * (pts[next].second - pts[cur].second);
            const double d_i = (pts[i].first - pts[cur].first) * (pts[i].first - pts[cur].first) +
                               (pts[i].second - pts[cur].second) * (pts[i].second - pts[cur].second);
            if (cross < 0.0 || (cross == 0.0 && d_i > d_next)) next = i;
        }
        cur = next;
        if (hull.size() > pts.size()) throw SynthesisError("hull: degenerate input");
    } while (cur != start);
    if (hull.size() < 3) throw SynthesisError("hull: all points collinear");
    return hull;
}

/// Half-plane membership test against a counter-clockwise convex polygon.
inline bool in_convex_poly(const std::vector<std::pair<double, double>>& poly, double x, double y) {
    for (size_t i = 0; i < poly.size(); ++i) {
        const auto& a = poly[i];
        const auto& b = poly[(i + 1) % poly.size()];
        const double cross = (b.first - a.first) * (y - a.second) - (b.second - a.second) * (x - a.first);
        if (cross < 0.0) return false;
    }
    return true;
}

/// Hull mask by per-pixel membership test; outermost ring forced to zero.
inline std::vector<double> hull_mask(const std::vector<std::pair<double, double>>& pts, int64_t h,
                                     int64_t w) {
    const auto poly = hull_gift_wrap(pts);
    std::vector<double> mask(static_cast<size_t>(h * w), 0.0);
    for (int64_t y = 1; y < h - 1; ++y)
        for (int64_t x = 1; x < w - 1; ++x)
            if (in_convex_poly(poly, static_cast<double>(x), static_cast<double>(y)))
                mask[y * w + x] = 1.0;
    return mask;
}

}  // namespace ff::ref
