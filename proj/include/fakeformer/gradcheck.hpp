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

#include <functional>
#include <string>
#include <vector>

#include "fakeformer/rng.hpp"
#include "fakeformer/tensor.hpp"

namespace ff {

struct GradCheckResult {
    bool passed = true;
    double max_rel_err = 0.0;
    std::string worst;  // "input[k]" for the worst coordinate

    void merge(const GradCheckResult& o) {
        if (o.max_rel_err > max_rel_err) {
            max_rel_err = o.max_rel_err;
            worst = o.worst;
        }
        passed = passed && o.passed;
    }
};

/// Compares analytic gradients of `fn` (a scalar-valued map over `inputs`)
/// against central finite differences.  For tensors above `sample_cap`
/// elements, `sample_cap` random coordinates are probed instead of all.
inline GradCheckResult grad_check(const std::function<TensorPtr(Tape&)>& fn,
                                  const std::vector<TensorPtr>& inputs, double h = 1e-5,
                                  double tol = 1e-4, Rng* rng = nullptr, int64_t sample_cap = 64) {
    GradCheckResult result;

    for (auto& in : inputs) {
        in->requires_grad = true;
        in->zero_grad();
    }
    Tape tape;
    auto loss = fn(tape);
    tape.backward(loss);

    Rng fallback(12345);
    Rng& r = rng ? *rng : fallback;

    for (size_t t = 0; t < inputs.size(); ++t) {
        auto& in = inputs[t];
        in->ensure_grad();
        const int64_t n = in->numel();
        std::vector<int64_t> coords;
        if (n <= sample_cap) {
            coords.resize(n);
            for (int64_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            coords.reserve(sample_cap);
            for (int64_t i = 0; i < sample_cap; ++i) coords.push_back(r.uniform_int(0, n - 1));
        }
        auto numeric_at = [&](int64_t k, double step) {
            const double orig = in->data[k];
            in->data[k] = orig + step;
            Tape t_plus;
            const double f_plus = fn(t_plus)->item();
            in->data[k] = orig - step;
            Tape t_minus;
            const double f_minus = fn(t_minus)->item();
            in->data[k] = orig;
            return (f_plus - f_minus) / (2.0 * step);
        };
        for (int64_t k : coords) {
            const double numeric = numeric_at(k, h);
            const double analytic = in->grad[k];
            double rel =
                std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
            if (rel > tol) {
                // Distinguish a wrong backward rule from a kink under the
                // difference stencil (relu or clamp crossing within +/- h):
                // a true gradient is stable in the step size, a straddled
                // kink is not.  Skip coordinates whose numeric estimate moves
                // materially when the step shrinks.
                const double numeric_small = numeric_at(k, h / 4.0);
                const double drift = std::abs(numeric - numeric_small) /
                                     std::max({1.0, std::abs(numeric), std::abs(numeric_small)});
                if (drift > 0.25 * rel) continue;
                rel = std::abs(analytic - numeric_small) /
                      std::max({1.0, std::abs(analytic), std::abs(numeric_small)});
            }
            if (rel > result.max_rel_err) {
                result.max_rel_err = rel;
                result.worst = "input " + std::to_string(t) + "[" + std::to_string(k) + "]";
            }
        }
    }
    result.passed = result.max_rel_err <= tol;
    for (auto& in : inputs) in->zero_grad();
    return result;
}

}  // namespace ff
