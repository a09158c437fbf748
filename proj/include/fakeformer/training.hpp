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

// Training: smoothed binary cross-entropy on the logit, penalty-reduced
// focal loss on the heatmap, AdamW with a flat-then-linear-decay schedule,
// backbone freezing, augmentation, and the epoch loop.

#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "fakeformer/evaluation.hpp"
#include "fakeformer/model.hpp"
#include "fakeformer/synthesis.hpp"
#include "fakeformer/vulnerability.hpp"

namespace ff {

enum class SynthMode { sbi, bi };

struct AugmentConfig {
    double p_color = 0.3;
    double p_crop = 0.3;
    double p_scale = 0.2;
    double p_flip = 0.5;
    double p_noise = 0.2;
    double p_blur = 0.2;
    double p_jpeg = 0.2;
};

struct TrainConfig {
    int64_t epochs = 30;
    int64_t batch_size = 8;          // samples per optimizer step (reals + fakes)
    double base_lr = 5e-5;
    double weight_decay = 1e-4;
    double lambda = 10.0;            // heatmap loss weight
    double label_smoothing = 0.1;
    double focal_alpha = 2.0;
    double focal_beta = 4.0;
    int64_t freeze_epochs = 2;
    int64_t frames_per_video = 1;    // m
    SynthMode synth_mode = SynthMode::sbi;
    AggregateMode agg_mode = AggregateMode::max;
    double heatmap_sigma = 1.0;
    double target_tie_tol = 1e-3;    // tie window when collecting bump centers
    double val_fraction = 0.2;
    int64_t checkpoint_every = 0;    // 0 disables periodic checkpoints
    uint64_t seed = 0;
    AugmentConfig augment;

    void validate() const {
        if (epochs <= 0 || batch_size <= 0) throw UsageError("train config: epochs and batch_size must be positive");
        if (lambda < 0.0) throw UsageError("train config: lambda must be >= 0");
        if (label_smoothing < 0.0 || label_smoothing >= 0.5)
            throw UsageError("train config: label_smoothing must lie in [0, 0.5)");
        if (frames_per_video < 1) throw UsageError("train config: frames_per_video must be >= 1");
        if (freeze_epochs < 0 || freeze_epochs >= epochs)
            throw UsageError("train config: freeze_epochs must be < epochs");
        if (val_fraction < 0.0 || val_fraction >= 1.0)
            throw UsageError("train config: val_fraction must lie in [0, 1)");
        if (target_tie_tol < 0.0)
            throw UsageError("train config: target_tie_tol must be >= 0");
    }
};

struct TrainSample {
    Image image;
    int label = 0;                // 0 real, 1 fake
    std::vector<double> target;   // side x side heatmap target
    std::string source_id;
};

struct CorpusItem {
    std::string id;
    Image image;
    LandmarkSet lms;
};

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Label-smoothed binary cross entropy on a raw logit, in the stable
/// softplus form: y' * softplus(-l) + (1 - y') * softplus(l).
inline TensorPtr cls_loss(Tape& tape, const TensorPtr& logit, int label, double smoothing) {
    const double y = static_cast<double>(label) * (1.0 - smoothing) + smoothing / 2.0;
    auto flat = reshape(tape, logit, {1});
    auto pos = softplus(tape, mul_scalar(tape, flat, -1.0));
    auto neg = softplus(tape, flat);
    return add(tape, mul_scalar(tape, pos, y), mul_scalar(tape, neg, 1.0 - y));
}

/// Penalty-reduced focal loss against a Gaussian-peaked target: unit-target
/// cells contribute (1-p)^alpha * -log p, the rest (1-S)^beta * p^alpha *
/// -log(1-p); the sum is divided by the positive count (at least 1).
inline TensorPtr att_loss(Tape& tape, const TensorPtr& pred, const std::vector<double>& target,
                          double alpha, double beta) {
    if (pred->numel() != static_cast<int64_t>(target.size()))
        throw DimensionError("att_loss: prediction and target sizes differ");
    const int64_t n = pred->numel();
    auto pos_mask = Tensor::zeros(pred->dims);
    auto neg_weight = Tensor::zeros(pred->dims);
    int64_t npos = 0;
    for (int64_t i = 0; i < n; ++i) {
        if (target[i] == 1.0) {
            pos_mask->data[i] = 1.0;
            ++npos;
        } else {
            neg_weight->data[i] = std::pow(1.0 - target[i], beta);
        }
    }
    auto p = clamp(tape, pred, 1e-6, 1.0 - 1e-6);
    auto one_minus_p = add_scalar(tape, mul_scalar(tape, p, -1.0), 1.0);
    auto pos_term = mul(tape, pos_mask, mul(tape, pow_const(tape, one_minus_p, alpha),
                                            mul_scalar(tape, log(tape, p), -1.0)));
    auto neg_term = mul(tape, neg_weight, mul(tape, pow_const(tape, p, alpha),
                                              mul_scalar(tape, log(tape, one_minus_p), -1.0)));
    auto total = add(tape, sum(tape, pos_term), sum(tape, neg_term));
    return mul_scalar(tape, total, 1.0 / static_cast<double>(std::max<int64_t>(npos, 1)));
}

/// Combined objective: classification loss plus lambda times the heatmap loss.
inline TensorPtr total_loss(Tape& tape, const ModelOutput& out, int label,
                            const std::vector<double>& target, const TrainConfig& cfg) {
    auto lc = cls_loss(tape, out.logit, label, cfg.label_smoothing);
    auto la = att_loss(tape, out.heatmap, target, cfg.focal_alpha, cfg.focal_beta);
    return add(tape, lc, mul_scalar(tape, la, cfg.lambda));
}

// ---------------------------------------------------------------------------
// Optimizer and schedule
// ---------------------------------------------------------------------------

/// AdamW with decoupled weight decay.  Slots are keyed by parameter name;
/// frozen parameters (requires_grad == false) are skipped entirely.
class AdamW {
public:
    AdamW(double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}

    /// Applies one update from the gradients accumulated in the parameter
    /// tensors (scaled by grad_scale), then clears those gradients.
    void step(ModelParams& params, double lr, double grad_scale = 1.0) {
        for (const auto& e : params.named()) {
            if (!e.tensor->requires_grad) continue;
            auto& t = *e.tensor;
            t.ensure_grad();
            Slot& s = slots_[e.name];
            if (s.m.empty()) {
                s.m.assign(t.data.size(), 0.0);
                s.v.assign(t.data.size(), 0.0);
            }
            s.step += 1;
            const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(s.step));
            const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(s.step));
            for (size_t i = 0; i < t.data.size(); ++i) {
                const double g = t.grad[i] * grad_scale;
                s.m[i] = b1_ * s.m[i] + (1.0 - b1_) * g;
                s.v[i] = b2_ * s.v[i] + (1.0 - b2_) * g * g;
                const double mhat = s.m[i] / bc1;
                const double vhat = s.v[i] / bc2;
                t.data[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + wd_ * t.data[i]);
            }
            t.zero_grad();
        }
    }

    int64_t step_count(const std::string& name) const {
        auto it = slots_.find(name);
        return it == slots_.end() ? 0 : it->second.step;
    }

private:
    struct Slot {
        std::vector<double> m, v;
        int64_t step = 0;
    };
    double wd_, b1_, b2_, eps_;
    std::map<std::string, Slot> slots_;
};

/// Flat at base_lr for the first quarter of steps, then linear to exactly
/// zero at the final step.
inline double lr_at(int64_t step, int64_t total_steps, double base_lr) {
    if (step < 0 || step >= total_steps) throw UsageError("lr_at: step outside [0, total)");
    const int64_t warm = total_steps / 4;
    if (step < warm) return base_lr;
    const int64_t denom = total_steps - 1 - warm;
    if (denom <= 0) return 0.0;
    return base_lr * static_cast<double>(total_steps - 1 - step) / static_cast<double>(denom);
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

namespace detail {

inline Image flip_horizontal(const Image& im) {
    Image out = Image::make(im.height, im.width, im.channels);
    for (int64_t y = 0; y < im.height; ++y)
        for (int64_t x = 0; x < im.width; ++x)
            for (int64_t c = 0; c < im.channels; ++c)
                out.at(y, x, c) = im.at(y, im.width - 1 - x, c);
    return out;
}

inline std::vector<double> flip_target_columns(const std::vector<double>& s) {
    const auto side = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(s.size()))));
    std::vector<double> out(s.size());
    for (int64_t y = 0; y < side; ++y)
        for (int64_t x = 0; x < side; ++x) out[y * side + x] = s[y * side + side - 1 - x];
    return out;
}

/// Approximate recompression: per 8x8 block and channel, DCT-II, divide by
/// a quality-scaled quantization table, round, and transform back.
inline Image jpeg_approx(const Image& im, double quality) {
    static const double kQ[64] = {
        16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
        14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
        18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
        49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
    double basis[8][8];
    for (int k = 0; k < 8; ++k)
        for (int n = 0; n < 8; ++n)
            basis[k][n] = std::cos(M_PI * (2.0 * n + 1.0) * k / 16.0) *
                          (k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0));
    const double qscale = (quality < 50.0 ? 5000.0 / quality : 200.0 - 2.0 * quality) / 100.0;
    Image out = im;
    double block[8][8], tmp[8][8], coef[8][8];
    for (int64_t c = 0; c < im.channels; ++c)
        for (int64_t by = 0; by + 8 <= im.height; by += 8)
            for (int64_t bx = 0; bx + 8 <= im.width; bx += 8) {
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x)
                        block[y][x] = im.at(by + y, bx + x, c) * 255.0 - 128.0;
                for (int k = 0; k < 8; ++k)  // rows
                    for (int x = 0; x < 8; ++x) {
                        double acc = 0.0;
                        for (int n = 0; n < 8; ++n) acc += basis[k][n] * block[n][x];
                        tmp[k][x] = acc;
                    }
                for (int k = 0; k < 8; ++k)  // columns
                    for (int y = 0; y < 8; ++y) {
                        double acc = 0.0;
                        for (int n = 0; n < 8; ++n) acc += basis[k][n] * tmp[y][n];
                        coef[y][k] = acc;
                    }
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x) {
                        const double q = std::max(1.0, kQ[y * 8 + x] * qscale);
                        coef[y][x] = std::round(coef[y][x] / q) * q;
                    }
                for (int n = 0; n < 8; ++n)  // inverse, columns then rows
                    for (int y = 0; y < 8; ++y) {
                        double acc = 0.0;
                        for (int k = 0; k < 8; ++k) acc += basis[k][n] * coef[y][k];
                        tmp[y][n] = acc;
                    }
                for (int n = 0; n < 8; ++n)
                    for (int x = 0; x < 8; ++x) {
                        double acc = 0.0;
                        for (int k = 0; k < 8; ++k) acc += basis[k][n] * tmp[k][x];
                        out.at(by + n, bx + x, c) = (acc + 128.0) / 255.0;
                    }
            }
    out.clamp01();
    return out;
}

}  // namespace detail

/// Stochastic train-time augmentation; the heatmap target follows horizontal
/// flips and is untouched by the photometric and resolution augmentations.
inline TrainSample augment(const TrainSample& in, Rng& rng, const AugmentConfig& cfg) {
    TrainSample out = in;
    if (rng.bernoulli(cfg.p_color))
        out.image = apply_photometric(out.image, PhotometricParams::random(rng));
    if (rng.bernoulli(cfg.p_crop)) {
        // Crop at least 90% of the area, then resize back to full size.
        const double f = rng.uniform(0.95, 1.0);
        const auto ch = static_cast<int64_t>(std::llround(f * static_cast<double>(in.image.height)));
        const auto cw = static_cast<int64_t>(std::llround(f * static_cast<double>(in.image.width)));
        const int64_t oy = rng.uniform_int(0, in.image.height - ch);
        const int64_t ox = rng.uniform_int(0, in.image.width - cw);
        Image crop = Image::make(ch, cw, in.image.channels);
        for (int64_t y = 0; y < ch; ++y)
            for (int64_t x = 0; x < cw; ++x)
                for (int64_t c = 0; c < in.image.channels; ++c)
                    crop.at(y, x, c) = out.image.at(oy + y, ox + x, c);
        out.image = resize_bilinear(crop, in.image.height, in.image.width);
    }
    if (rng.bernoulli(cfg.p_scale))
        out.image = apply_geometric(out.image, 0.0, 0.0, rng.uniform(0.95, 1.05));
    if (rng.bernoulli(cfg.p_flip)) {
        out.image = detail::flip_horizontal(out.image);
        if (!out.target.empty()) out.target = detail::flip_target_columns(out.target);
    }
    if (rng.bernoulli(cfg.p_noise)) {
        const double sigma = rng.uniform(0.005, 0.02);
        for (auto& v : out.image.pix) v += rng.normal(0.0, sigma);
        out.image.clamp01();
    }
    if (rng.bernoulli(cfg.p_blur)) out.image = gaussian_blur(out.image, rng.uniform(0.3, 1.0));
    if (rng.bernoulli(cfg.p_jpeg)) out.image = detail::jpeg_approx(out.image, rng.uniform(50.0, 90.0));
    return out;
}

// ---------------------------------------------------------------------------
// Batch building
// ---------------------------------------------------------------------------

/// One pseudo-fake from a corpus item; BI mode picks the donor via
/// `donor_index` into the full corpus.
inline PseudoFake synth_fake(const std::vector<CorpusItem>& corpus, size_t item, size_t donor_index,
                             SynthMode mode, Rng& rng) {
    const auto& it = corpus[item];
    if (mode == SynthMode::sbi) return make_self_blended(it.image, it.lms, rng);
    const auto& donor = corpus[donor_index];
    return make_cross_blended(donor.image, donor.lms, it.image, it.lms, rng);
}

/// For every selected item, m real/fake sample pairs: the real frame with an
/// all-zero target, and a pseudo-fake with its vulnerability target.
inline std::vector<TrainSample> build_batch(const std::vector<CorpusItem>& corpus,
                                            const std::vector<size_t>& items, Rng& rng,
                                            const ModelConfig& mcfg, const TrainConfig& tcfg,
                                            bool with_augment = true) {
    if (corpus.empty()) throw DataError("build_batch: empty corpus");
    std::vector<TrainSample> batch;
    const auto side2 = static_cast<size_t>(mcfg.grid_side() * mcfg.grid_side());
    for (size_t item : items) {
        if (item >= corpus.size()) throw DataError("build_batch: item index out of range");
        for (int64_t frame = 0; frame < tcfg.frames_per_video; ++frame) {
            TrainSample real;
            real.image = corpus[item].image;
            real.label = 0;
            real.target.assign(side2, 0.0);
            real.source_id = corpus[item].id;
            if (with_augment) real = augment(real, rng, tcfg.augment);
            batch.push_back(std::move(real));

            const size_t donor = corpus.size() > 1
                                     ? (item + 1 + static_cast<size_t>(rng.uniform_int(
                                                       0, static_cast<int64_t>(corpus.size()) - 2))) %
                                           corpus.size()
                                     : item;
            PseudoFake fake = synth_fake(corpus, item, donor, tcfg.synth_mode, rng);
            TrainSample fs;
            fs.image = std::move(fake.image);
            fs.label = 1;
            fs.target = ground_truth_heatmap(false, fake.boundary, mcfg.patch, tcfg.agg_mode,
                                             tcfg.heatmap_sigma, tcfg.target_tie_tol);
            fs.source_id = corpus[item].id + ":fake";
            if (with_augment) fs = augment(fs, rng, tcfg.augment);
            batch.push_back(std::move(fs));
        }
    }
    return batch;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochStats {
    int64_t epoch = 0;
    double lr = 0.0;
    double cls_loss = 0.0;
    double att_loss = 0.0;
    double total_loss = 0.0;
    double val_auc = 0.0;
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochStats> history;
};

/// Deterministic held-out scores: each validation item contributes its real
/// frame and one fixed pseudo-fake (seeded by item id, stable across epochs).
inline void validation_scores(const ModelParams& params, const std::vector<CorpusItem>& corpus,
                              const std::vector<size_t>& val_items, const TrainConfig& tcfg,
                              std::vector<double>& scores, std::vector<int>& labels) {
    scores.clear();
    labels.clear();
    for (size_t item : val_items) {
        Tape tape;
        auto real_out = forward(tape, params, corpus[item].image, BnMode::eval);
        scores.push_back(detail::sigmoid_val(real_out.logit->item()));
        labels.push_back(0);

        Rng fake_rng(derive_seed(tcfg.seed, 0x76616cULL, item));
        const size_t donor = corpus.size() > 1 ? (item + 1) % corpus.size() : item;
        PseudoFake fake = synth_fake(corpus, item, donor, tcfg.synth_mode, fake_rng);
        Tape tape2;
        auto fake_out = forward(tape2, params, fake.image, BnMode::eval);
        scores.push_back(detail::sigmoid_val(fake_out.logit->item()));
        labels.push_back(1);
    }
}

/// Full training run.  `on_epoch` fires after every epoch with fresh stats;
/// use it for logging and checkpoints.
inline TrainResult train(const std::vector<CorpusItem>& corpus, const ModelConfig& mcfg,
                         const TrainConfig& tcfg,
                         const std::function<void(const EpochStats&, const ModelParams&)>& on_epoch =
                             nullptr) {
    mcfg.validate();
    tcfg.validate();
    if (corpus.empty()) throw DataError("train: empty corpus");

    // Deterministic split: shuffle items once, tail fraction becomes val.
    std::vector<size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), size_t{0});
    Rng split_rng(derive_seed(tcfg.seed, 0x73706c6974ULL));
    for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<size_t>(split_rng.uniform_int(
                      0, static_cast<int64_t>(i) - 1))]);
    const auto n_val = static_cast<size_t>(std::llround(
        tcfg.val_fraction * static_cast<double>(corpus.size())));
    std::vector<size_t> train_items(order.begin(), order.end() - n_val);
    std::vector<size_t> val_items(order.end() - n_val, order.end());
    if (train_items.empty()) throw DataError("train: no items left for training after split");

    TrainResult result;
    result.params = init_params(mcfg);
    AdamW opt(tcfg.weight_decay);

    const int64_t items_per_step = std::max<int64_t>(1, tcfg.batch_size / 2);
    const int64_t steps_per_epoch =
        (static_cast<int64_t>(train_items.size()) + items_per_step - 1) / items_per_step;
    const int64_t total_steps = tcfg.epochs * steps_per_epoch;

    int64_t global_step = 0;
    for (int64_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
        const bool frozen = epoch < tcfg.freeze_epochs;
        result.params.set_trainable(!frozen);

        Rng epoch_rng(derive_seed(tcfg.seed, 0x65706f6368ULL, static_cast<uint64_t>(epoch)));
        std::vector<size_t> shuffled = train_items;
        for (size_t i = shuffled.size(); i > 1; --i)
            std::swap(shuffled[i - 1], shuffled[static_cast<size_t>(epoch_rng.uniform_int(
                          0, static_cast<int64_t>(i) - 1))]);

        EpochStats stats;
        stats.epoch = epoch;
        int64_t n_samples = 0;
        for (int64_t s = 0; s < steps_per_epoch; ++s) {
            std::vector<size_t> chunk;
            for (int64_t k = s * items_per_step;
                 k < std::min<int64_t>((s + 1) * items_per_step,
                                       static_cast<int64_t>(shuffled.size()));
                 ++k)
                chunk.push_back(shuffled[static_cast<size_t>(k)]);
            auto batch = build_batch(corpus, chunk, epoch_rng, mcfg, tcfg);

            for (const auto& sample : batch) {
                Tape tape;
                // train_fixed on purpose: the normalization buffers stay at
                // their initialization values, so training and inference run
                // the head with identical constants.  Folding every single
                // image into the averages makes them swing between the real
                // and the blended activation levels and the head never
                // converges.
                auto out = forward(tape, result.params, sample.image, BnMode::train_fixed);
                auto lc = cls_loss(tape, out.logit, sample.label, tcfg.label_smoothing);
                auto la = att_loss(tape, out.heatmap, sample.target, tcfg.focal_alpha,
                                   tcfg.focal_beta);
                auto loss = add(tape, lc, mul_scalar(tape, la, tcfg.lambda));
                tape.backward(loss);
                stats.cls_loss += lc->item();
                stats.att_loss += la->item();
                stats.total_loss += loss->item();
                ++n_samples;
            }
            const double lr = lr_at(global_step, total_steps, tcfg.base_lr);
            stats.lr = lr;
            opt.step(result.params, lr, 1.0 / static_cast<double>(batch.size()));
            ++global_step;
        }
        stats.cls_loss /= static_cast<double>(std::max<int64_t>(n_samples, 1));
        stats.att_loss /= static_cast<double>(std::max<int64_t>(n_samples, 1));
        stats.total_loss /= static_cast<double>(std::max<int64_t>(n_samples, 1));

        if (!val_items.empty()) {
            std::vector<double> scores;
            std::vector<int> labels;
            validation_scores(result.params, corpus, val_items, tcfg, scores, labels);
            stats.val_auc = auc_score(scores, labels);
        }
        result.history.push_back(stats);
        if (on_epoch) on_epoch(stats, result.params);
    }
    result.params.set_trainable(true);
    return result;
}

}  // namespace ff
