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

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "fakeformer/reference.hpp"
#include "fakeformer/synthesis.hpp"

using namespace ff;

namespace {

Image random_image(Rng& rng, int64_t h, int64_t w, int64_t c = 3) {
    Image im = Image::make(h, w, c);
    for (auto& v : im.pix) v = rng.uniform();
    return im;
}

LandmarkSet square_landmarks(double lo, double hi, int64_t dim) {
    LandmarkSet lms;
    lms.height = dim;
    lms.width = dim;
    lms.points = {{lo, lo}, {hi, lo}, {hi, hi}, {lo, hi}};
    return lms;
}

}  // namespace

TEST_CASE("hull mask of a centered square is that filled square", "[synthesis]") {
    auto lms = square_landmarks(16.0, 48.0, 64);
    auto mask = convex_hull_mask(lms, 64, 64);
    int64_t ones = 0;
    for (int64_t y = 0; y < 64; ++y)
        for (int64_t x = 0; x < 64; ++x) {
            const bool inside = x >= 16 && x <= 48 && y >= 16 && y <= 48;
            REQUIRE(mask.at(y, x, 0) == (inside ? 1.0 : 0.0));
            ones += inside;
        }
    REQUIRE(ones == 33 * 33);
}

TEST_CASE("collinear landmarks are rejected", "[synthesis]") {
    LandmarkSet lms;
    lms.height = lms.width = 32;
    lms.points = {{5.0, 5.0}, {10.0, 10.0}, {20.0, 20.0}};
    REQUIRE_THROWS_AS(convex_hull_mask(lms, 32, 32), SynthesisError);
}

TEST_CASE("hull mask matches the half-plane oracle on random point sets", "[synthesis]") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        LandmarkSet lms;
        lms.height = lms.width = 64;
        for (int i = 0; i < 10; ++i)
            lms.points.emplace_back(rng.uniform(2.0, 61.0), rng.uniform(2.0, 61.0));
        auto mask = convex_hull_mask(lms, 64, 64);
        auto want = ref::hull_mask(lms.points, 64, 64);
        for (size_t i = 0; i < want.size(); ++i) REQUIRE(mask.pix[i] == want[i]);
    }
}

TEST_CASE("identity deform parameters leave the mask bit-identical", "[synthesis]") {
    auto mask = convex_hull_mask(square_landmarks(20.0, 44.0, 64), 64, 64);
    auto out = deform_mask(mask, DeformParams::identity());
    REQUIRE(out.pix == mask.pix);
}

TEST_CASE("deformed masks stay in range and roughly preserve area", "[synthesis]") {
    auto mask = convex_hull_mask(square_landmarks(16.0, 48.0, 64), 64, 64);
    double in_sum = 0.0;
    for (double v : mask.pix) in_sum += v;
    for (uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        auto out = deform_mask(mask, DeformParams::random(rng, 64, 64));
        double out_sum = 0.0;
        for (double v : out.pix) {
            REQUIRE(v >= 0.0);
            REQUIRE(v <= 1.0);
            out_sum += v;
        }
        REQUIRE(out_sum >= 0.8 * in_sum);
        REQUIRE(out_sum <= 1.2 * in_sum);
        // Border ring must stay clear.
        for (int64_t x = 0; x < 64; ++x) {
            REQUIRE(out.at(0, x, 0) == 0.0);
            REQUIRE(out.at(63, x, 0) == 0.0);
        }
    }
}

TEST_CASE("mask deformation is deterministic per seed", "[synthesis]") {
    auto mask = convex_hull_mask(square_landmarks(18.0, 46.0, 64), 64, 64);
    Rng r1(99), r2(99);
    auto a = deform_mask(mask, DeformParams::random(r1, 64, 64));
    auto b = deform_mask(mask, DeformParams::random(r2, 64, 64));
    REQUIRE(a.pix == b.pix);
}

TEST_CASE("blend endpoints and midpoint", "[synthesis]") {
    Rng rng(3);
    auto fg = random_image(rng, 16, 16);
    auto bg = random_image(rng, 16, 16);
    auto ones = Image::make(16, 16, 1, 1.0);
    auto zeros = Image::make(16, 16, 1, 0.0);
    auto half = Image::make(16, 16, 1, 0.5);

    REQUIRE(blend(fg, bg, ones).pix == fg.pix);
    REQUIRE(blend(fg, bg, zeros).pix == bg.pix);

    auto white = Image::make(16, 16, 3, 1.0);
    auto black = Image::make(16, 16, 3, 0.0);
    for (double v : blend(white, black, half).pix) REQUIRE(v == 0.5);

    auto mid = blend(fg, bg, half);
    for (size_t i = 0; i < mid.pix.size(); ++i) {
        REQUIRE(mid.pix[i] >= std::min(fg.pix[i], bg.pix[i]) - 1e-15);
        REQUIRE(mid.pix[i] <= std::max(fg.pix[i], bg.pix[i]) + 1e-15);
    }

    auto small = Image::make(8, 8, 3);
    REQUIRE_THROWS_AS(blend(fg, small, ones), DimensionError);
}

TEST_CASE("blending boundary values and symmetry", "[synthesis]") {
    auto m = Image::make(2, 2, 1);
    m.pix = {0.5, 0.0, 1.0, 0.25};
    auto b = blending_boundary(m);
    REQUIRE(b.pix[0] == 1.0);
    REQUIRE(b.pix[1] == 0.0);
    REQUIRE(b.pix[2] == 0.0);
    REQUIRE(b.pix[3] == 0.75);

    Rng rng(5);
    auto soft = Image::make(8, 8, 1);
    for (auto& v : soft.pix) v = rng.uniform();
    auto flipped = soft;
    for (auto& v : flipped.pix) v = 1.0 - v;
    auto b1 = blending_boundary(soft);
    auto b2 = blending_boundary(flipped);
    for (size_t i = 0; i < b1.pix.size(); ++i)
        REQUIRE(b1.pix[i] == Catch::Approx(b2.pix[i]).margin(1e-12));

    auto binary = convex_hull_mask(square_landmarks(2.0, 6.0, 8), 8, 8);
    for (double v : blending_boundary(binary).pix) REQUIRE(v == 0.0);
}

TEST_CASE("self-blend with identity transforms and a zero mask returns the input", "[synthesis]") {
    auto [img, lms] = gen_toy_face(1);
    auto p = SelfBlendParams::identity();
    p.forced_mask = Image::make(img.height, img.width, 1, 0.0);
    auto fake = make_self_blended(img, lms, p);
    REQUIRE(fake.image.pix == img.pix);
}

TEST_CASE("self-blend boundary respects the quadratic range", "[synthesis]") {
    auto [img, lms] = gen_toy_face(2);
    Rng rng(17);
    auto fake = make_self_blended(img, lms, rng);
    for (size_t i = 0; i < fake.boundary.pix.size(); ++i) {
        REQUIRE(fake.boundary.pix[i] <= 1.0);
        const double m = fake.mask.pix[i];
        if (m > 0.0 && m < 1.0) REQUIRE(fake.boundary.pix[i] > 0.0);
    }
}

TEST_CASE("self-blend is bit-reproducible per seed", "[synthesis]") {
    auto [img, lms] = gen_toy_face(3);
    Rng r1(7), r2(7);
    auto a = make_self_blended(img, lms, r1);
    auto b = make_self_blended(img, lms, r2);
    REQUIRE(a.image.pix == b.image.pix);
    REQUIRE(a.mask.pix == b.mask.pix);
    REQUIRE(a.boundary.pix == b.boundary.pix);
}

TEST_CASE("affine fit recovers identity and random transforms", "[synthesis]") {
    auto [img, lms] = gen_toy_face(4);
    auto id = fit_affine(lms.points, lms.points);
    const std::array<double, 6> want_id = {1, 0, 0, 0, 1, 0};
    for (int i = 0; i < 6; ++i) REQUIRE(std::abs(id[i] - want_id[i]) < 1e-10);

    Rng rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        const std::array<double, 6> a = {rng.uniform(0.8, 1.2),  rng.uniform(-0.2, 0.2),
                                         rng.uniform(-5.0, 5.0), rng.uniform(-0.2, 0.2),
                                         rng.uniform(0.8, 1.2),  rng.uniform(-5.0, 5.0)};
        std::vector<std::pair<double, double>> dst;
        for (auto& [x, y] : lms.points)
            dst.emplace_back(a[0] * x + a[1] * y + a[2], a[3] * x + a[4] * y + a[5]);
        auto got = fit_affine(lms.points, dst);
        for (int i = 0; i < 6; ++i) REQUIRE(std::abs(got[i] - a[i]) < 1e-8);
    }
}

TEST_CASE("degenerate landmark fit is rejected", "[synthesis]") {
    std::vector<std::pair<double, double>> line = {{0, 0}, {1, 1}, {2, 2}, {3, 3}};
    REQUIRE_THROWS_AS(fit_affine(line, line), SynthesisError);
}

TEST_CASE("cross-blend of an image with itself stays close to the input", "[synthesis]") {
    auto [img, lms] = gen_toy_face(5);
    Rng rng(31);
    auto fake = make_cross_blended(img, lms, img, lms, rng);
    for (size_t i = 0; i < img.pix.size(); ++i)
        REQUIRE(std::abs(fake.image.pix[i] - img.pix[i]) <= 1e-6);
}

TEST_CASE("toy faces are deterministic with in-bounds landmarks and sane hulls", "[synthesis]") {
    auto [ia, la] = gen_toy_face(42);
    auto [ib, lb] = gen_toy_face(42);
    REQUIRE(ia.pix == ib.pix);
    REQUIRE(la.points == lb.points);

    for (uint64_t seed = 0; seed < 1000; ++seed) {
        auto [img, lms] = gen_toy_face(seed);
        REQUIRE(lms.points.size() == 68);
        for (auto& [x, y] : lms.points) {
            REQUIRE(x >= 0.0);
            REQUIRE(x <= 63.0);
            REQUIRE(y >= 0.0);
            REQUIRE(y <= 63.0);
        }
        auto mask = convex_hull_mask(lms, 64, 64);
        double cover = 0.0;
        for (double v : mask.pix) cover += v;
        cover /= static_cast<double>(64 * 64);
        REQUIRE(cover >= 0.05);
        REQUIRE(cover <= 0.60);
    }
}
