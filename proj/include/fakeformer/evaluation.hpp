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

// Evaluation: ranking metrics (AUC via rank sums, average precision),
// video-level aggregation, SSIM and masked SSIM, quality stratification,
// and the perturbation suite for robustness checks.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fakeformer/error.hpp"
#include "fakeformer/image.hpp"
#include "fakeformer/rng.hpp"

namespace ff {

struct ScoredSample {
    double score = 0.0;
    int label = 0;  // 0 real, 1 fake
    std::string source_id;
    double mask_ssim = std::numeric_limits<double>::quiet_NaN();

    ScoredSample() = default;
    ScoredSample(double s, int l, std::string id = "", double ms = std::numeric_limits<double>::quiet_NaN())
        : score(s), label(l), source_id(std::move(id)), mask_ssim(ms) {}
};

// ---------------------------------------------------------------------------
// Ranking metrics
// ---------------------------------------------------------------------------

/// Mann-Whitney AUC through rank sums with midranks for ties; equals the
/// fraction of (positive, negative) pairs ranked correctly, ties at half.
inline double auc_score(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw MetricError("auc: scores/labels size mismatch");
    const size_t n = scores.size();
    int64_t n_pos = 0;
    for (size_t i = 0; i < n; ++i) {
        if (!std::isfinite(scores[i])) throw MetricError("auc: non-finite score");
        if (labels[i] != 0 && labels[i] != 1) throw MetricError("auc: labels must be 0 or 1");
        n_pos += labels[i];
    }
    const int64_t n_neg = static_cast<int64_t>(n) - n_pos;
    if (n_pos == 0 || n_neg == 0) throw MetricError("auc: needs both classes");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // Midranks: tied scores share the average of their 1-based rank range.
    double pos_rank_sum = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) pos_rank_sum += midrank;
        i = j;
    }
    const double u = pos_rank_sum - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

inline double auc_score(const std::vector<ScoredSample>& samples) {
    std::vector<double> s;
    std::vector<int> l;
    s.reserve(samples.size());
    l.reserve(samples.size());
    for (const auto& x : samples) {
        s.push_back(x.score);
        l.push_back(x.label);
    }
    return auc_score(s, l);
}

/// Average precision: walk samples in descending score (stable on ties) and
/// average the precision observed at each positive.
inline double average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw MetricError("ap: scores/labels size mismatch");
    const size_t n = scores.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return scores[a] > scores[b]; });
    int64_t hits = 0;
    double acc = 0.0;
    for (size_t rank = 0; rank < n; ++rank) {
        if (labels[order[rank]] == 1) {
            ++hits;
            acc += static_cast<double>(hits) / static_cast<double>(rank + 1);
        }
    }
    if (hits == 0) throw MetricError("ap: needs at least one positive");
    return acc / static_cast<double>(hits);
}

inline double average_precision(const std::vector<ScoredSample>& samples) {
    std::vector<double> s;
    std::vector<int> l;
    s.reserve(samples.size());
    l.reserve(samples.size());
    for (const auto& x : samples) {
        s.push_back(x.score);
        l.push_back(x.label);
    }
    return average_precision(s, l);
}

enum class VideoAgg { mean, max };

/// Collapses frame scores to one score per source id, preserving first-seen
/// source order; the label of a group must be consistent.
inline std::vector<ScoredSample> video_level_score(const std::vector<ScoredSample>& frames,
                                                   VideoAgg agg = VideoAgg::mean) {
    std::vector<ScoredSample> out;
    std::map<std::string, size_t> index;
    std::vector<int64_t> counts;
    for (const auto& f : frames) {
        auto it = index.find(f.source_id);
        if (it == index.end()) {
            index.emplace(f.source_id, out.size());
            out.emplace_back(f.score, f.label, f.source_id);
            counts.push_back(1);
        } else {
            auto& g = out[it->second];
            if (g.label != f.label)
                throw MetricError("video_level_score: source '" + f.source_id + "' has mixed labels");
            if (agg == VideoAgg::mean) {
                g.score += f.score;
                counts[it->second] += 1;
            } else {
                g.score = std::max(g.score, f.score);
            }
        }
    }
    if (agg == VideoAgg::mean)
        for (size_t i = 0; i < out.size(); ++i) out[i].score /= static_cast<double>(counts[i]);
    return out;
}

// ---------------------------------------------------------------------------
// SSIM
// ---------------------------------------------------------------------------

/// Per-pixel SSIM on luma with an 11x11 Gaussian window (sigma 1.5) and the
/// standard constants C1=(0.01)^2, C2=(0.03)^2 for a [0,1] dynamic range.
/// Borders use edge-replicated windows, so the map covers the full image.
inline Image ssim_map(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw MetricError("ssim: image dimensions differ");
    Image ga = a.channels == 3 ? to_gray(a) : a;
    Image gb = b.channels == 3 ? to_gray(b) : b;
    const double sigma = 1.5;
    const int64_t win = 11;
    Image a2 = ga, b2 = gb, ab = ga;
    for (size_t i = 0; i < a2.pix.size(); ++i) {
        ab.pix[i] = ga.pix[i] * gb.pix[i];
        a2.pix[i] = ga.pix[i] * ga.pix[i];
        b2.pix[i] = gb.pix[i] * gb.pix[i];
    }
    Image mu_a = gaussian_blur(ga, sigma, win);
    Image mu_b = gaussian_blur(gb, sigma, win);
    Image m_a2 = gaussian_blur(a2, sigma, win);
    Image m_b2 = gaussian_blur(b2, sigma, win);
    Image m_ab = gaussian_blur(ab, sigma, win);
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    Image out = Image::make(a.height, a.width, 1);
    for (size_t i = 0; i < out.pix.size(); ++i) {
        const double ma = mu_a.pix[i], mb = mu_b.pix[i];
        const double va = m_a2.pix[i] - ma * ma;
        const double vb = m_b2.pix[i] - mb * mb;
        const double cov = m_ab.pix[i] - ma * mb;
        out.pix[i] = ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                     ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return out;
}

inline double ssim(const Image& a, const Image& b) {
    Image m = ssim_map(a, b);
    double acc = 0.0;
    for (double v : m.pix) acc += v;
    return acc / static_cast<double>(m.pix.size());
}

/// Mean of the SSIM map restricted to mask > 0.5.
inline double mask_ssim(const Image& fake, const Image& real, const Image& mask) {
    if (mask.height != fake.height || mask.width != fake.width || mask.channels != 1)
        throw MetricError("mask_ssim: mask must be single-channel with matching dimensions");
    Image m = ssim_map(fake, real);
    double acc = 0.0;
    int64_t count = 0;
    for (size_t i = 0; i < m.pix.size(); ++i)
        if (mask.pix[i] > 0.5) {
            acc += m.pix[i];
            ++count;
        }
    if (count == 0) throw MetricError("mask_ssim: empty mask");
    return acc / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Quality stratification
// ---------------------------------------------------------------------------

struct SsimBin {
    double lo = 0.0, hi = 0.0;
    int64_t n_fake = 0;
    double auc = std::numeric_limits<double>::quiet_NaN();
    bool valid = false;
};

inline std::vector<double> default_ssim_edges() { return {0.6, 0.8, 0.9, 0.925, 0.95, 0.97, 1.0}; }

/// Per-bin AUC of the fakes falling in each mask-SSIM range against the
/// shared pool of all real samples.  The final bin includes its upper edge;
/// bins with fewer than two fakes are reported but flagged invalid.
inline std::vector<SsimBin> stratify_by_ssim(const std::vector<ScoredSample>& samples,
                                             const std::vector<double>& edges = default_ssim_edges()) {
    if (edges.size() < 2) throw MetricError("stratify_by_ssim: need at least two bin edges");
    for (size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i] > edges[i - 1])) throw MetricError("stratify_by_ssim: edges must increase");
    std::vector<ScoredSample> reals;
    for (const auto& s : samples)
        if (s.label == 0) reals.push_back(s);
    std::vector<SsimBin> bins(edges.size() - 1);
    for (size_t b = 0; b < bins.size(); ++b) {
        bins[b].lo = edges[b];
        bins[b].hi = edges[b + 1];
        std::vector<ScoredSample> pool = reals;
        for (const auto& s : samples) {
            if (s.label != 1 || std::isnan(s.mask_ssim)) continue;
            const bool last = b + 1 == bins.size();
            if (s.mask_ssim >= bins[b].lo && (s.mask_ssim < bins[b].hi || (last && s.mask_ssim == bins[b].hi))) {
                pool.push_back(s);
                bins[b].n_fake += 1;
            }
        }
        if (bins[b].n_fake >= 2 && !reals.empty()) {
            bins[b].auc = auc_score(pool);
            bins[b].valid = true;
        }
    }
    return bins;
}

// ---------------------------------------------------------------------------
// Perturbations
// ---------------------------------------------------------------------------

enum class PerturbKind { saturation, contrast, block, noise, blur };

inline PerturbKind parse_perturb_kind(const std::string& name) {
    if (name == "saturation") return PerturbKind::saturation;
    if (name == "contrast") return PerturbKind::contrast;
    if (name == "block") return PerturbKind::block;
    if (name == "noise") return PerturbKind::noise;
    if (name == "blur") return PerturbKind::blur;
    throw UsageError("unknown perturbation kind '" + name + "'");
}

inline std::string perturb_kind_name(PerturbKind k) {
    switch (k) {
        case PerturbKind::saturation: return "saturation";
        case PerturbKind::contrast: return "contrast";
        case PerturbKind::block: return "block";
        case PerturbKind::noise: return "noise";
        case PerturbKind::blur: return "blur";
    }
    throw UsageError("unknown perturbation kind");
}

inline std::vector<PerturbKind> all_perturb_kinds() {
    return {PerturbKind::saturation, PerturbKind::contrast, PerturbKind::block, PerturbKind::noise,
            PerturbKind::blur};
}

/// Applies one perturbation at the given severity (1..5); severity 0 is the
/// identity.  Saturation and contrast scale by 1 +/- 0.1*severity with a
/// random sign, block drops `severity` mid-gray squares of side H/8, noise
/// adds Gaussian noise with sigma 0.01*severity, blur uses kernel radius
/// equal to the severity.
inline Image perturb(const Image& im, PerturbKind kind, int severity, Rng& rng) {
    if (severity < 0 || severity > 5) throw UsageError("perturb: severity must lie in 0..5");
    if (severity == 0) return im;
    Image out = im;
    switch (kind) {
        case PerturbKind::saturation: {
            const double f = 1.0 + (rng.bernoulli(0.5) ? 1.0 : -1.0) * 0.1 * severity;
            if (im.channels == 3) {
                for (int64_t y = 0; y < im.height; ++y)
                    for (int64_t x = 0; x < im.width; ++x) {
                        const double luma = 0.299 * im.at(y, x, 0) + 0.587 * im.at(y, x, 1) +
                                            0.114 * im.at(y, x, 2);
                        for (int64_t c = 0; c < 3; ++c)
                            out.at(y, x, c) = luma + f * (im.at(y, x, c) - luma);
                    }
            }
            break;
        }
        case PerturbKind::contrast: {
            const double f = 1.0 + (rng.bernoulli(0.5) ? 1.0 : -1.0) * 0.1 * severity;
            double mean = 0.0;
            for (double v : im.pix) mean += v;
            mean /= static_cast<double>(im.pix.size());
            for (auto& v : out.pix) v = mean + f * (v - mean);
            break;
        }
        case PerturbKind::block: {
            const int64_t side = std::max<int64_t>(1, im.height / 8);
            for (int s = 0; s < severity; ++s) {
                const int64_t oy = rng.uniform_int(0, im.height - side);
                const int64_t ox = rng.uniform_int(0, im.width - side);
                for (int64_t y = oy; y < oy + side; ++y)
                    for (int64_t x = ox; x < ox + side; ++x)
                        for (int64_t c = 0; c < im.channels; ++c) out.at(y, x, c) = 0.5;
            }
            break;
        }
        case PerturbKind::noise: {
            const double sigma = 0.01 * severity;
            for (auto& v : out.pix) v += rng.normal(0.0, sigma);
            break;
        }
        case PerturbKind::blur: {
            const int64_t radius = severity;
            out = gaussian_blur(im, 0.5 * static_cast<double>(radius), 2 * radius + 1);
            break;
        }
    }
    out.clamp01();
    return out;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct PerturbResult {
    std::string kind;
    int severity = 0;
    double auc = std::numeric_limits<double>::quiet_NaN();
};

struct EvalReport {
    double auc = 0.0;
    double ap = 0.0;
    int64_t n_pos = 0;
    int64_t n_neg = 0;
    std::vector<SsimBin> bins;            // optional quality stratification
    std::vector<PerturbResult> perturbs;  // optional robustness table

    std::string to_json() const {
        std::ostringstream os;
        os.precision(17);
        os << "{\"auc\":" << auc << ",\"ap\":" << ap << ",\"n_pos\":" << n_pos
           << ",\"n_neg\":" << n_neg;
        if (!bins.empty()) {
            os << ",\"bins\":[";
            for (size_t i = 0; i < bins.size(); ++i) {
                if (i) os << ",";
                os << "{\"lo\":" << bins[i].lo << ",\"hi\":" << bins[i].hi
                   << ",\"n_fake\":" << bins[i].n_fake << ",\"valid\":"
                   << (bins[i].valid ? "true" : "false") << ",\"auc\":";
                if (bins[i].valid)
                    os << bins[i].auc;
                else
                    os << "null";
                os << "}";
            }
            os << "]";
        }
        if (!perturbs.empty()) {
            os << ",\"perturbations\":[";
            for (size_t i = 0; i < perturbs.size(); ++i) {
                if (i) os << ",";
                os << "{\"kind\":\"" << perturbs[i].kind << "\",\"severity\":" << perturbs[i].severity
                   << ",\"auc\":" << perturbs[i].auc << "}";
            }
            os << "]";
        }
        os << "}";
        return os.str();
    }

    std::string to_csv() const {
        std::ostringstream os;
        os.precision(17);
        os << "section,name,lo,hi,severity,count,auc\n";
        os << "overall,all,,,," << (n_pos + n_neg) << "," << auc << "\n";
        os << "overall,ap,,,," << (n_pos + n_neg) << "," << ap << "\n";
        for (const auto& b : bins) {
            os << "ssim_bin," << b.lo << "-" << b.hi << "," << b.lo << "," << b.hi << ",,"
               << b.n_fake << ",";
            if (b.valid) os << b.auc;
            os << "\n";
        }
        for (const auto& p : perturbs)
            os << "perturb," << p.kind << ",,," << p.severity << ",," << p.auc << "\n";
        return os.str();
    }
};

/// Basic report over scored samples (no stratification or perturbations).
inline EvalReport evaluate(const std::vector<ScoredSample>& samples) {
    EvalReport r;
    for (const auto& s : samples) (s.label == 1 ? r.n_pos : r.n_neg) += 1;
    r.auc = auc_score(samples);
    r.ap = average_precision(samples);
    return r;
}

}  // namespace ff
