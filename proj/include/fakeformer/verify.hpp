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

// Self-contained verification suite: finite-difference gradient checks for
// every differentiable op, a whole-model loss gradient check, and oracle
// comparisons for patch selection, metrics, and blending identities.  Used
// by the `verify` command; failures are reported, not thrown.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fakeformer/evaluation.hpp"
#include "fakeformer/gradcheck.hpp"
#include "fakeformer/model.hpp"
#include "fakeformer/reference.hpp"
#include "fakeformer/synthesis.hpp"
#include "fakeformer/training.hpp"
#include "fakeformer/vulnerability.hpp"

namespace ff {

struct VerifyCheck {
    std::string name;
    bool passed = false;
    double max_err = 0.0;
    std::string detail;
};

namespace detail {

inline TensorPtr rand_tensor(Rng& rng, Dims d, double lo = -1.0, double hi = 1.0) {
    auto t = Tensor::zeros(std::move(d));
    for (auto& v : t->data) v = rng.uniform(lo, hi);
    return t;
}

/// Values pushed away from `center` by at least `margin`, for ops with a
/// kink (relu, clamp) where finite differences straddle the non-smooth point.
inline TensorPtr rand_tensor_away(Rng& rng, Dims d, double center, double margin) {
    auto t = rand_tensor(rng, std::move(d));
    for (auto& v : t->data) {
        if (std::abs(v - center) < margin) v = center + (v >= center ? margin : -margin) * 2.0;
    }
    return t;
}

/// Fixed probe so that reductions see distinct per-coordinate weights;
/// otherwise permutation mistakes in a backward rule cancel out in sum().
inline TensorPtr probe_like(Rng& rng, const TensorPtr& x) {
    auto w = Tensor::zeros(x->dims);
    for (auto& v : w->data) v = rng.uniform(0.5, 1.5);
    return w;
}

inline VerifyCheck op_gradient_check(
    const std::string& name, int n_seeds,
    const std::function<std::pair<std::function<TensorPtr(Tape&)>, std::vector<TensorPtr>>(Rng&)>&
        make) {
    VerifyCheck c;
    c.name = "grad/" + name;
    c.passed = true;
    for (int s = 0; s < n_seeds; ++s) {
        Rng rng(derive_seed(0x76657269667921ULL, static_cast<uint64_t>(s),
                            std::hash<std::string>{}(name)));
        auto [fn, inputs] = make(rng);
        auto res = grad_check(fn, inputs);
        c.max_err = std::max(c.max_err, res.max_rel_err);
        if (!res.passed) {
            c.passed = false;
            c.detail = res.worst;
        }
    }
    return c;
}

}  // namespace detail

/// Gradient checks for every differentiable op in the tape vocabulary.
inline std::vector<VerifyCheck> verify_op_gradients(int n_seeds = 5) {
    using detail::probe_like;
    using detail::rand_tensor;
    using detail::rand_tensor_away;
    using Maker =
        std::function<std::pair<std::function<TensorPtr(Tape&)>, std::vector<TensorPtr>>(Rng&)>;

    std::vector<std::pair<std::string, Maker>> ops;
    ops.emplace_back("add", [&](Rng& rng) {
        auto a = rand_tensor(rng, {3, 4}), b = rand_tensor(rng, {3, 4});
        auto w = probe_like(rng, a);
        std::function<TensorPtr(Tape&)> fn = [=](Tape& t) { return sum(t, mul(t, add(t, a, b), w)); };
        return std::make_pair(fn, std::vector<TensorPtr>{a, b});
    });
    ops.emplace_back("sub", [&](Rng& rng) {
        auto a = rand_tensor(rng, {3, 4}), b = rand_tensor(rng, {3, 4});
        auto w = probe_like(rng, a);
        std::function<TensorPtr(Tape&)> fn = [=](Tape& t) { return sum(t, mul(t, sub(t, a, b), w)); };
        return std::make_pair(fn, std::vector<TensorPtr>{a, b});
    });
    ops.emplace_back("mul", [&](Rng& rng) {
        auto a = rand_tensor(rng, {3, 4}), b = rand_tensor(rng, {3, 4});
        auto w = probe_like(rng, a);
        std::function<TensorPtr(Tape&)> fn = [=](Tape& t) { return sum(t, mul(t, mul(t, a, b), w)); };
        return std::make_pair(fn, std::vector<TensorPtr>{a, b});
    });
    ops.emplace_back("add_scalar", [&](Rng& rng) {
        auto a = rand_tensor(rng, {3, 4});
        const double c = rng.uniform(-2.0, 2.0);
        auto w = probe_like(rng, a);
        std::function<TensorPtr(Tape&)> fn = [=](Tape& t) {
            return sum(t, mul(t, add_scalar(t, a, c), w));
        };
        return std::make_pair(fn, std::vector<TensorPtr>{a});
    });
    ops.emplace_back("mul_scalar", [&](Rng& rng) {
        auto a = rand_tensor(rng, {3, 4});
        const double c = rng.uniform(-2.0, 2.0);
        auto w = probe_like(rng, a);
        std::function<TensorPtr(Tape&)> fn = [=](Tape& t) {
            return sum(t, mul(t, mul_scalar(t, a, c), w));
        };
        return std::make_pair(fn, std::vector<TensorPtr>{a});
    });
    ops.emplace_back("add_bias", [&](Rng& rng) {
        auto x = rand_tensor(rng, {4, 5});
        auto b = rand_tensor(rng, {5});
        auto w = probe_like(rng, x);
        std::function<TensorPtr(Tape&)> fn = [=](Tape& t) {
            return sum(t, mul(t, add_bias(t, x, b), w));
        };
        return std::make_pair(fn, std::vector<TensorPtr>{x, b});
    });
    ops.emplace_back("matmul", [&](Rng& rng) {
        auto a = rand_tensor(rng, {3, 4}), b = rand_tensor(rng, {4, 2});
        auto w = rand_tensor(rng, {3, 2}, 0.5, 1.5);
        std::function<TensorPtr(Tape&)> fn = [=](Tape& t) {
            return sum(t, mul(t, matmul(t, a, b), w));
        };
        return std::make_pair(fn, std::vector<TensorPtr>{a, b});
    });
    ops.emplace_back("bmm", [&](Rng& rng) {
        auto a = rand_tensor(rng, {2, 3, 4}), b = rand_tensor(rng, {2, 4, 2});
        auto w = rand_tensor(rng, {2, 3, 2}, 0.5, 1.5);
        std::function<TensorPtr(Tape&)> fn = [=](Tape& t) {
            return sum(t, mul(t, bmm(t, a, b), w));
        };
        return std::make_pair(fn, std::vector<TensorPtr>{a, b});
    });
    ops.emplace_back("reshape", [&](Rng& rng) {
        auto a = rand_tensor(rng, {3, 4});
        auto w = rand_tensor(rng, {2, 6}, 0.5, 1.5);
        std::function<TensorPtr(Tape&)> fn = [=](Tape& t) {
            return sum(t, mul(t, reshape(t, a, {2, 6}), w));
        };
        return std::make_pair(fn, std::vector<TensorPtr>{a});
    });
    ops.emplace_back("transpose2d", [&](Rng& rng) {
        auto a = rand_tensor(rng, {3, 4});
        auto w = rand_tensor(rng, {4, 3}, 0.5, 1.5);
        std::function<TensorPtr(Tape&)> fn = [=](Tape& t) {
            return sum(t, mul(t, transpose2d(t, a), w));
        };
        return std::make_pair(fn, std::vector<TensorPtr>{a});
    });
    ops.emplace_back("permute", [&](Rng& rng) {
        auto a = rand_tensor(rng, {2, 3, 4});
        auto w = rand_tensor(rng, {4, 2, 3}, 0.5, 1.5);
        std::function<TensorPtr(Tape&)> fn = [=](Tape& t) {
            return sum(t, mul(t, permute(t, a, {2, 0, 1}), w));
        };
        return std::make_pair(fn, std::vector<TensorPtr>{a});
    });
    ops.emplace_back("concat", [&](Rng& rng) {
        auto a = rand_tensor(rng, {2, 3}), b = rand_tensor(rng, {3, 3});
        auto w = rand_tensor(rng, {5, 3}, 0.5, 1.5);
        std::function<TensorPtr(Tape&)> fn = [=](Tape& t) {
            return sum(t, mul(t, concat(t, {a, b}), w));
        };
        return std::make_pair(fn, std::vector<TensorPtr>{a, b});
    });
    ops.emplace_back("slice_rows", [&](Rng& rng) {
        auto a = rand_tensor(rng, {5, 3});
        auto w = rand_tensor(rng, {3, 3}, 0.5, 1.5);
        std::function<TensorPtr(Tape&)> fn = [=](Tape& t) {
            return sum(t, mul(t, slice_rows(t, a, 1, 4), w));
        };
        return std::make_pair(fn, std::vector<TensorPtr>{a});
    });
    ops.emplace_back("relu", [&](Rng& rng) {
        auto a = rand_tensor_away(rng, {3, 4}, 0.0, 0.05);
        auto w = probe_like(rng, a);
        std::function<TensorPtr(Tape&)> fn = [=](Tape& t) { return sum(t, mul(t, relu(t, a), w)); };
        return std::make_pair(fn, std::vector<TensorPtr>{a});
    });
    ops.emplace_back("gelu", [&](Rng& rng) {
        auto a = rand_tensor(rng, {3, 4}, -2.0, 2.0);
        auto w = probe_like(rng, a);
        std::function<TensorPtr(Tape&)> fn = [=](Tape& t) { return sum(t, mul(t, gelu(t, a), w)); };
        return std::make_pair(fn, std::vector<TensorPtr>{a});
    });
    ops.emplace_back("sigmoid", [&](Rng& rng) {
        auto a = rand_tensor(rng, {3, 4}, -3.0, 3.0);
        auto w = probe_like(rng, a);
        std::function<TensorPtr(Tape&)> fn = [=](Tape& t) {
            return sum(t, mul(t, sigmoid(t, a), w));
        };
        return std::make_pair(fn, std::vector<TensorPtr>{a});
    });
    ops.emplace_back("softplus", [&](Rng& rng) {
        auto a = rand_tensor(rng, {3, 4}, -3.0, 3.0);
        auto w = probe_like(rng, a);
        std::function<TensorPtr(Tape&)> fn = [=](Tape& t) {
            return sum(t, mul(t, softplus(t, a), w));
        };
        return std::make_pair(fn, std::vector<TensorPtr>{a});
    });
    ops.emplace_back("log", [&](Rng& rng) {
        auto a = rand_tensor(rng, {3, 4}, 0.2, 3.0);
        auto w = probe_like(rng, a);
        std::function<TensorPtr(Tape&)> fn = [=](Tape& t) { return sum(t, mul(t, log(t, a), w)); };
        return std::make_pair(fn, std::vector<TensorPtr>{a});
    });
    ops.emplace_back("pow_const", [&](Rng& rng) {
        auto a = rand_tensor(rng, {3, 4}, 0.3, 2.0);
        auto w = probe_like(rng, a);
        std::function<TensorPtr(Tape&)> fn = [=](Tape& t) {
            return sum(t, mul(t, pow_const(t, a, 2.5), w));
        };
        return std::make_pair(fn, std::vector<TensorPtr>{a});
    });
    ops.emplace_back("clamp", [&](Rng& rng) {
        auto a = rand_tensor(rng, {3, 4});
        for (auto& v : a->data) {
            if (std::abs(v - (-0.7)) < 0.05) v = -0.6;
            if (std::abs(v - 0.8) < 0.05) v = 0.9;
        }
        auto w = probe_like(rng, a);
        std::function<TensorPtr(Tape&)> fn = [=](Tape& t) {
            return sum(t, mul(t, clamp(t, a, -0.7, 0.8), w));
        };
        return std::make_pair(fn, std::vector<TensorPtr>{a});
    });
    ops.emplace_back("sum", [&](Rng& rng) {
        auto a = rand_tensor(rng, {3, 4});
        std::function<TensorPtr(Tape&)> fn = [=](Tape& t) { return sum(t, a); };
        return std::make_pair(fn, std::vector<TensorPtr>{a});
    });
    ops.emplace_back("mean", [&](Rng& rng) {
        auto a = rand_tensor(rng, {3, 4});
        std::function<TensorPtr(Tape&)> fn = [=](Tape& t) { return mean(t, a); };
        return std::make_pair(fn, std::vector<TensorPtr>{a});
    });
    ops.emplace_back("softmax", [&](Rng& rng) {
        auto a = rand_tensor(rng, {3, 5}, -2.0, 2.0);
        auto w = rand_tensor(rng, {3, 5}, 0.5, 1.5);
        std::function<TensorPtr(Tape&)> fn = [=](Tape& t) {
            return sum(t, mul(t, softmax(t, a, 1), w));
        };
        return std::make_pair(fn, std::vector<TensorPtr>{a});
    });
    ops.emplace_back("layer_norm", [&](Rng& rng) {
        auto x = rand_tensor(rng, {3, 6});
        auto g = rand_tensor(rng, {6}, 0.5, 1.5);
        auto b = rand_tensor(rng, {6}, -0.5, 0.5);
        auto w = rand_tensor(rng, {3, 6}, 0.5, 1.5);
        std::function<TensorPtr(Tape&)> fn = [=](Tape& t) {
            return sum(t, mul(t, layer_norm(t, x, g, b), w));
        };
        return std::make_pair(fn, std::vector<TensorPtr>{x, g, b});
    });
    ops.emplace_back("conv2d", [&](Rng& rng) {
        auto x = rand_tensor(rng, {2, 5, 5});
        auto w = rand_tensor(rng, {3, 2, 3, 3});
        auto b = rand_tensor(rng, {3});
        auto probe = rand_tensor(rng, {3, 5, 5}, 0.5, 1.5);
        std::function<TensorPtr(Tape&)> fn = [=](Tape& t) {
            return sum(t, mul(t, conv2d(t, x, w, b), probe));
        };
        return std::make_pair(fn, std::vector<TensorPtr>{x, w, b});
    });
    ops.emplace_back("batch_norm2d", [&](Rng& rng) {
        auto x = rand_tensor(rng, {2, 4, 4});
        auto g = rand_tensor(rng, {2}, 0.5, 1.5);
        auto b = rand_tensor(rng, {2}, -0.5, 0.5);
        auto rm = Tensor::zeros({2});
        auto rv = Tensor::full({2}, 1.0);
        auto w = rand_tensor(rng, {2, 4, 4}, 0.5, 1.5);
        std::function<TensorPtr(Tape&)> fn = [=](Tape& t) {
            return sum(t, mul(t, batch_norm2d(t, x, g, b, rm, rv, BnMode::train_fixed), w));
        };
        return std::make_pair(fn, std::vector<TensorPtr>{x, g, b});
    });
    ops.emplace_back("max_pool_patches", [&](Rng& rng) {
        auto x = rand_tensor(rng, {6, 6});
        auto w = rand_tensor(rng, {3, 3}, 0.5, 1.5);
        std::function<TensorPtr(Tape&)> fn = [=](Tape& t) {
            return sum(t, mul(t, max_pool_patches(t, x, 2), w));
        };
        return std::make_pair(fn, std::vector<TensorPtr>{x});
    });

    std::vector<VerifyCheck> checks;
    for (const auto& [name, make] : ops)
        checks.push_back(detail::op_gradient_check(name, n_seeds, make));
    return checks;
}

/// Finite-difference check of the combined training loss through the whole
/// model at a tiny configuration, sampling a few coordinates per tensor.
inline VerifyCheck verify_full_loss_gradient(int n_seeds = 5, double tol = 1e-3) {
    VerifyCheck c;
    c.name = "grad/full_loss_tiny_model";
    c.passed = true;
    for (int s = 0; s < n_seeds; ++s) {
        ModelConfig mcfg;
        mcfg.height = 16;
        mcfg.width = 16;
        mcfg.patch = 8;
        mcfg.layers = 1;
        mcfg.dim = 8;
        mcfg.mlp_dim = 16;
        mcfg.heads = 2;
        mcfg.att_hidden = 4;
        mcfg.seed = 1000 + static_cast<uint64_t>(s);
        auto params = init_params(mcfg);

        Rng rng(derive_seed(0x66756c6cULL, static_cast<uint64_t>(s)));
        auto img = Tensor::zeros({3, 16, 16});
        for (auto& v : img->data) v = rng.uniform(0.0, 1.0);

        std::vector<double> target(4, 0.0);
        target[static_cast<size_t>(rng.uniform_int(0, 3))] = 1.0;
        TrainConfig tcfg;
        tcfg.lambda = 2.0;

        std::vector<TensorPtr> inputs;
        for (const auto& e : params.named())
            if (e.trainable) inputs.push_back(e.tensor);
        inputs.push_back(img);

        auto fn = [&](Tape& tape) {
            auto out = forward(tape, params, img, BnMode::train_fixed);
            return total_loss(tape, out, 1, target, tcfg);
        };
        auto res = grad_check(fn, inputs, 1e-5, tol, &rng, 4);
        c.max_err = std::max(c.max_err, res.max_rel_err);
        if (!res.passed) {
            c.passed = false;
            c.detail = res.worst;
        }
    }
    return c;
}

/// Patch selection against the exhaustive oracle, both aggregation modes,
/// with engineered ties.
inline VerifyCheck verify_patch_oracle(int n_trials = 100) {
    VerifyCheck c;
    c.name = "oracle/vulnerable_patches";
    c.passed = true;
    for (int trial = 0; trial < n_trials; ++trial) {
        Rng rng(derive_seed(0x7061746368ULL, static_cast<uint64_t>(trial)));
        const int64_t patch = 4, grid = 4;
        BoundaryMap bmap = Image::make(patch * grid, patch * grid, 1);
        for (auto& v : bmap.pix) v = rng.uniform(0.0, 1.0);
        if (trial % 3 == 0) {
            // Copy one block over another so the maximum ties exactly.
            for (int64_t y = 0; y < patch; ++y)
                for (int64_t x = 0; x < patch; ++x)
                    bmap.at(y, x, 0) = bmap.at(y + patch, x + patch, 0);
        }
        for (auto mode : {AggregateMode::max, AggregateMode::mean}) {
            auto mine = vulnerable_patches(bmap, patch, mode);
            std::vector<int64_t> mine_linear;
            for (const auto& g : mine) mine_linear.push_back(g.y * grid + g.x);
            const auto agg = mode == AggregateMode::max
                                 ? ref::block_max(bmap.pix, bmap.height, bmap.width, patch)
                                 : ref::block_mean(bmap.pix, bmap.height, bmap.width, patch);
            const auto theirs = ref::argmax_cells(agg, 1e-12);
            if (mine_linear != theirs) {
                c.passed = false;
                c.max_err = 1.0;
                std::ostringstream os;
                os << "set mismatch on trial " << trial << " mode "
                   << (mode == AggregateMode::max ? "max" : "mean");
                c.detail = os.str();
            }
        }
    }
    return c;
}

/// AUC rank-sum vs pair counting, AP analytic cases, SSIM self-identity.
inline std::vector<VerifyCheck> verify_metric_oracles() {
    std::vector<VerifyCheck> out;
    {
        VerifyCheck c;
        c.name = "oracle/auc_pair_count";
        c.passed = true;
        for (int trial = 0; trial < 100; ++trial) {
            Rng rng(derive_seed(0x617563ULL, static_cast<uint64_t>(trial)));
            const int64_t n = rng.uniform_int(2, 120);
            std::vector<double> scores(n);
            std::vector<int> labels(n);
            for (int64_t i = 0; i < n; ++i) {
                scores[i] = std::floor(rng.uniform(0.0, 1.0) * 8.0) / 8.0;
                labels[i] = rng.bernoulli(0.5) ? 1 : 0;
            }
            labels[0] = 1;
            labels[static_cast<size_t>(n) - 1] = 0;
            const double err = std::abs(auc_score(scores, labels) - ref::auc_pair_count(scores, labels));
            c.max_err = std::max(c.max_err, err);
            if (err != 0.0) {
                c.passed = false;
                c.detail = "trial " + std::to_string(trial);
            }
        }
        out.push_back(c);
    }
    {
        VerifyCheck c;
        c.name = "oracle/average_precision";
        c.passed = true;
        const double e1 = std::abs(average_precision({0.9, 0.8, 0.2}, {1, 0, 1}) - 5.0 / 6.0);
        const double e2 =
            std::abs(average_precision({0.9, 0.8, 0.7, 0.6}, {0, 0, 0, 1}) - 1.0 / 4.0);
        const double e3 = std::abs(average_precision({0.9, 0.8}, {1, 1}) - 1.0);
        c.max_err = std::max({e1, e2, e3});
        c.passed = c.max_err < 1e-12;
        out.push_back(c);
    }
    {
        VerifyCheck c;
        c.name = "oracle/ssim_self";
        c.passed = true;
        Rng rng(99);
        for (int t = 0; t < 5; ++t) {
            Image im = Image::make(20, 20, 3);
            for (auto& v : im.pix) v = rng.uniform(0.0, 1.0);
            const double err = std::abs(ssim(im, im) - 1.0);
            c.max_err = std::max(c.max_err, err);
            if (err > 1e-12) c.passed = false;
        }
        out.push_back(c);
    }
    return out;
}

/// Blending endpoint and boundary identities on random images.
inline std::vector<VerifyCheck> verify_blend_identities() {
    std::vector<VerifyCheck> out;
    Rng rng(0x626c656e64ULL);
    Image fg = Image::make(16, 16, 3), bg = Image::make(16, 16, 3);
    for (auto& v : fg.pix) v = rng.uniform(0.0, 1.0);
    for (auto& v : bg.pix) v = rng.uniform(0.0, 1.0);
    {
        VerifyCheck c;
        c.name = "identity/blend_endpoints";
        BlendMask ones = Image::make(16, 16, 1);
        std::fill(ones.pix.begin(), ones.pix.end(), 1.0);
        BlendMask zeros = Image::make(16, 16, 1);
        auto full = blend(fg, bg, ones);
        auto none = blend(fg, bg, zeros);
        double err = 0.0;
        for (size_t i = 0; i < fg.pix.size(); ++i) {
            err = std::max(err, std::abs(full.pix[i] - fg.pix[i]));
            err = std::max(err, std::abs(none.pix[i] - bg.pix[i]));
        }
        c.max_err = err;
        c.passed = err == 0.0;
        out.push_back(c);
    }
    {
        VerifyCheck c;
        c.name = "identity/boundary_peak_and_symmetry";
        BlendMask half = Image::make(8, 8, 1);
        std::fill(half.pix.begin(), half.pix.end(), 0.5);
        auto peak = blending_boundary(half);
        double err = 0.0;
        for (double v : peak.pix) err = std::max(err, std::abs(v - 1.0));
        BlendMask m = Image::make(8, 8, 1);
        for (auto& v : m.pix) v = rng.uniform(0.0, 1.0);
        BlendMask inv = m;
        for (auto& v : inv.pix) v = 1.0 - v;
        auto bm = blending_boundary(m);
        auto bi = blending_boundary(inv);
        for (size_t i = 0; i < bm.pix.size(); ++i)
            err = std::max(err, std::abs(bm.pix[i] - bi.pix[i]));
        c.max_err = err;
        c.passed = err < 1e-12;
        out.push_back(c);
    }
    {
        VerifyCheck c;
        c.name = "identity/deform_identity";
        BlendMask m = Image::make(16, 16, 1);
        for (int64_t y = 4; y < 12; ++y)
            for (int64_t x = 4; x < 12; ++x) m.at(y, x, 0) = 1.0;
        auto d = deform_mask(m, DeformParams::identity());
        double err = 0.0;
        for (size_t i = 0; i < m.pix.size(); ++i)
            err = std::max(err, std::abs(d.pix[i] - m.pix[i]));
        c.max_err = err;
        c.passed = err == 0.0;
        out.push_back(c);
    }
    return out;
}

/// Weight serialization round trip at f32 precision.
inline VerifyCheck verify_weights_roundtrip(const std::string& tmp_path) {
    VerifyCheck c;
    c.name = "io/weights_roundtrip";
    ModelConfig mcfg;
    mcfg.height = 16;
    mcfg.width = 16;
    mcfg.patch = 8;
    mcfg.layers = 1;
    mcfg.dim = 8;
    mcfg.mlp_dim = 16;
    mcfg.heads = 2;
    mcfg.att_hidden = 4;
    mcfg.seed = 5;
    auto params = init_params(mcfg);
    save_params(tmp_path, params);
    auto restored = init_params(mcfg);
    for (const auto& e : restored.named())
        for (auto& v : e.tensor->data) v = 0.0;
    load_params(tmp_path, restored);
    double err = 0.0;
    auto a = params.named();
    auto b = restored.named();
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t k = 0; k < a[i].tensor->data.size(); ++k)
            err = std::max(err, std::abs(a[i].tensor->data[k] - b[i].tensor->data[k]));
    std::remove(tmp_path.c_str());
    c.max_err = err;
    c.passed = err < 1e-6;
    return c;
}

/// A deliberately wrong backward rule; the checker must flag it.  Exercises
/// the failure path end to end (nonzero exit, op named in the report).
inline VerifyCheck verify_fault_injection() {
    VerifyCheck c;
    c.name = "fault/injected_wrong_backward(square)";
    Rng rng(3);
    auto a = detail::rand_tensor(rng, {3, 3}, 0.5, 2.0);
    auto fn = [&](Tape& tape) {
        auto out = Tensor::zeros(a->dims);
        out->requires_grad = true;
        for (int64_t i = 0; i < a->numel(); ++i) out->data[i] = a->data[i] * a->data[i];
        tape.record([a, out] {
            if (out->grad.empty()) return;
            a->ensure_grad();
            // Wrong on purpose: 3x instead of 2x.
            for (int64_t i = 0; i < a->numel(); ++i) a->grad[i] += out->grad[i] * 3.0 * a->data[i];
        });
        return sum(tape, out);
    };
    auto res = grad_check(fn, {a});
    c.max_err = res.max_rel_err;
    c.passed = res.passed;  // expected to come back false
    c.detail = res.worst;
    return c;
}

struct VerifyReport {
    std::vector<VerifyCheck> checks;
    bool all_passed() const {
        for (const auto& c : checks)
            if (!c.passed) return false;
        return true;
    }
};

/// The complete verification battery.  `inject_fault` adds a known-bad
/// backward rule that must fail, for testing the harness itself.
inline VerifyReport run_verification(int n_seeds = 5, bool inject_fault = false,
                                     const std::string& tmp_dir = ".") {
    VerifyReport r;
    auto ops = verify_op_gradients(n_seeds);
    r.checks.insert(r.checks.end(), ops.begin(), ops.end());
    r.checks.push_back(verify_full_loss_gradient(n_seeds));
    r.checks.push_back(verify_patch_oracle());
    auto metrics = verify_metric_oracles();
    r.checks.insert(r.checks.end(), metrics.begin(), metrics.end());
    auto blends = verify_blend_identities();
    r.checks.insert(r.checks.end(), blends.begin(), blends.end());
    r.checks.push_back(verify_weights_roundtrip(tmp_dir + "/verify_weights_tmp.fkf1"));
    if (inject_fault) r.checks.push_back(verify_fault_injection());
    return r;
}

}  // namespace ff
