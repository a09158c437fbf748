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

// From a blending boundary map to the set of most-vulnerable patches and the
// Gaussian target heatmap that supervises the attention head.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "fakeformer/error.hpp"
#include "fakeformer/image.hpp"
#include "fakeformer/synthesis.hpp"

namespace ff {

enum class AggregateMode { max, mean };

/// Grid coordinate of a patch: x = column, y = row, both 0-indexed.
struct GridCoord {
    int64_t x = 0;
    int64_t y = 0;
    friend bool operator==(const GridCoord&, const GridCoord&) = default;
    friend auto operator<=>(const GridCoord& a, const GridCoord& b) {
        if (auto c = a.y <=> b.y; c != 0) return c;
        return a.x <=> b.x;
    }
};

/// Non-overlapping P x P partition of a square map.
struct PatchGrid {
    int64_t patch = 0;  // P
    int64_t side = 0;   // sqrt(N)
    std::vector<double> blocks;  // [side*side][patch*patch], block-major

    const double* block(int64_t gy, int64_t gx) const {
        return blocks.data() + (gy * side + gx) * patch * patch;
    }
};

inline PatchGrid patchify(const BoundaryMap& bmap, int64_t patch) {
    if (bmap.channels != 1) throw DimensionError("patchify: expected single channel");
    if (patch <= 0 || bmap.height % patch != 0 || bmap.width % patch != 0 ||
        bmap.height != bmap.width)
        throw DimensionError("patchify: patch size must divide the square map dims");
    PatchGrid g;
    g.patch = patch;
    g.side = bmap.height / patch;
    g.blocks.resize(static_cast<size_t>(g.side * g.side * patch * patch));
    for (int64_t gy = 0; gy < g.side; ++gy)
        for (int64_t gx = 0; gx < g.side; ++gx) {
            double* dst = g.blocks.data() + (gy * g.side + gx) * patch * patch;
            for (int64_t y = 0; y < patch; ++y)
                for (int64_t x = 0; x < patch; ++x)
                    dst[y * patch + x] = bmap.at(gy * patch + y, gx * patch + x, 0);
        }
    return g;
}

/// Inverse of patchify; bit-exact round trip.
inline BoundaryMap reassemble(const PatchGrid& g) {
    BoundaryMap out = Image::make(g.side * g.patch, g.side * g.patch, 1);
    for (int64_t gy = 0; gy < g.side; ++gy)
        for (int64_t gx = 0; gx < g.side; ++gx) {
            const double* src = g.block(gy, gx);
            for (int64_t y = 0; y < g.patch; ++y)
                for (int64_t x = 0; x < g.patch; ++x)
                    out.at(gy * g.patch + y, gx * g.patch + x, 0) = src[y * g.patch + x];
        }
    return out;
}

inline double aggregate(const double* block, int64_t count, AggregateMode mode) {
    if (mode == AggregateMode::max) {
        double best = block[0];
        for (int64_t i = 1; i < count; ++i) best = std::max(best, block[i]);
        return best;
    }
    double acc = 0.0;
    for (int64_t i = 0; i < count; ++i) acc += block[i];
    return acc / static_cast<double>(count);
}

/// All grid cells whose aggregated boundary value ties the global maximum
/// within `tie_tol`; empty when the map is identically zero.
inline std::vector<GridCoord> vulnerable_patches(const BoundaryMap& bmap, int64_t patch,
                                                 AggregateMode mode, double tie_tol = 1e-12) {
    const PatchGrid g = patchify(bmap, patch);
    const int64_t cells = g.side * g.side, per = patch * patch;
    std::vector<double> agg(static_cast<size_t>(cells));
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t i = 0; i < cells; ++i) {
        agg[i] = aggregate(g.blocks.data() + i * per, per, mode);
        mx = std::max(mx, agg[i]);
    }
    if (mx <= 0.0) return {};
    std::vector<GridCoord> out;
    for (int64_t i = 0; i < cells; ++i)
        if (agg[i] >= mx - tie_tol) out.push_back({i % g.side, i / g.side});
    return out;
}

/// Unnormalized Gaussian bump centered on one grid cell; exactly 1 at p.
inline std::vector<double> gaussian_map(GridCoord p, int64_t side, double sigma = 1.0) {
    if (p.x < 0 || p.x >= side || p.y < 0 || p.y >= side)
        throw DimensionError("gaussian_map: center outside grid");
    std::vector<double> s(static_cast<size_t>(side * side));
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (int64_t y = 0; y < side; ++y)
        for (int64_t x = 0; x < side; ++x) {
            const double ddx = static_cast<double>(x - p.x), ddy = static_cast<double>(y - p.y);
            s[y * side + x] = std::exp(-(ddx * ddx + ddy * ddy) * inv);
        }
    return s;
}

/// Supervision target: zero map for real samples; for fakes, the pointwise
/// maximum of the Gaussian bumps of every vulnerable patch.  Smooth blend
/// masks cross the half level inside many patches whose aggregated boundary
/// values differ only at discretization noise, so callers that train on these
/// maps widen `tie_tol` to label that whole set instead of the single patch
/// that wins the rounding race.
inline std::vector<double> ground_truth_heatmap(bool is_real, const BoundaryMap& bmap,
                                                int64_t patch, AggregateMode mode,
                                                double sigma = 1.0, double tie_tol = 1e-12) {
    const int64_t side = bmap.height / patch;
    std::vector<double> s(static_cast<size_t>(side * side), 0.0);
    if (is_real) return s;
    for (const GridCoord& p : vulnerable_patches(bmap, patch, mode, tie_tol)) {
        const auto bump = gaussian_map(p, side, sigma);
        for (size_t i = 0; i < s.size(); ++i) s[i] = std::max(s[i], bump[i]);
    }
    return s;
}

}  // namespace ff
