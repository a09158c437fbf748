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

// The five commands behind the CLI: synth, train, eval, infer, verify.
// Each writes its fully-resolved configuration next to its outputs so a
// rerun from that file reproduces the run bit for bit.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "fakeformer/config.hpp"
#include "fakeformer/verify.hpp"

namespace ff {

namespace detail {

inline Image heatmap_to_image(const std::vector<double>& values) {
    const auto side = static_cast<int64_t>(std::llround(std::sqrt(double(values.size()))));
    Image im = Image::make(side, side, 1);
    im.pix = values;
    im.clamp01();
    return im;
}

inline std::vector<CorpusItem> resolve_corpus(const RunConfig& cfg) {
    if (cfg.synth.toy_count > 0) return toy_corpus(cfg.synth.toy_count, cfg.synth.toy_size, cfg.seed);
    if (!cfg.paths.manifest.empty()) return load_corpus(cfg.paths.manifest);
    throw UsageError("no input corpus: set paths.manifest or synth.toy_count");
}

inline ModelParams load_model(const RunConfig& cfg, const std::string& weights_path) {
    if (weights_path.empty()) throw UsageError("no weights: set paths.weights");
    ModelConfig mcfg = cfg.model;
    mcfg.seed = cfg.seed;
    auto params = init_params(mcfg);
    load_params(weights_path, params);
    return params;
}

inline double score_image(const ModelParams& params, const Image& im) {
    const auto& mcfg = params.cfg;
    Image sized = (im.height == mcfg.height && im.width == mcfg.width)
                      ? im
                      : resize_bilinear(im, mcfg.height, mcfg.width);
    Tape tape;
    auto out = forward(tape, params, sized, BnMode::eval);
    return sigmoid_val(out.logit->item());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

/// Generates (or loads) a corpus of reals and writes one pseudo-fake per
/// item with its blend boundary, target heatmap, and an output manifest.
inline int cmd_synth(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    auto corpus = detail::resolve_corpus(cfg);

    const fs::path out_dir(cfg.paths.out_dir);
    const fs::path img_dir = out_dir / "images";
    fs::create_directories(img_dir);
    write_effective_config(cfg, out_dir.string());

    std::ofstream manifest(out_dir / "manifest.jsonl");
    if (!manifest) throw DataError("cannot write " + (out_dir / "manifest.jsonl").string());

    int64_t n_real = 0, n_fake = 0;
    for (size_t i = 0; i < corpus.size(); ++i) {
        const auto& item = corpus[i];
        const std::string real_png = "images/" + item.id + ".png";
        const std::string lms_json = "images/" + item.id + "_landmarks.json";
        write_png((out_dir / real_png).string(), item.image);
        save_landmarks((out_dir / lms_json).string(), item.lms);
        append_manifest_line(manifest, real_png, lms_json, "real", item.id);
        ++n_real;

        Rng rng(derive_seed(cfg.seed, 0x73796e7468ULL, static_cast<uint64_t>(i)));
        const size_t donor = corpus.size() > 1 ? (i + 1) % corpus.size() : i;
        PseudoFake fake = synth_fake(corpus, i, donor, cfg.synth.mode, rng);

        const std::string fake_png = "images/" + item.id + "_fake.png";
        const std::string boundary_png = "images/" + item.id + "_boundary.png";
        const std::string heat_png = "images/" + item.id + "_heatmap.png";
        const std::string heat_json = "images/" + item.id + "_heatmap.json";
        write_png((out_dir / fake_png).string(), fake.image);
        write_png((out_dir / boundary_png).string(), fake.boundary);

        auto heat = ground_truth_heatmap(false, fake.boundary, cfg.model.patch,
                                         cfg.train.agg_mode, cfg.train.heatmap_sigma,
                                         cfg.train.target_tie_tol);
        write_png((out_dir / heat_png).string(), detail::heatmap_to_image(heat));
        {
            nlohmann::json j;
            j["side"] = static_cast<int64_t>(std::llround(std::sqrt(double(heat.size()))));
            j["values"] = heat;
            std::ofstream hf(out_dir / heat_json);
            if (!hf) throw DataError("cannot write " + (out_dir / heat_json).string());
            hf << j.dump() << "\n";
        }
        append_manifest_line(manifest, fake_png, "", "fake", item.id + ":fake");
        ++n_fake;
    }
    std::cout << "synth: wrote " << n_real << " real + " << n_fake << " fake entries to "
              << (out_dir / "manifest.jsonl").string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

/// Trains per the training module and writes weights.fkf1, history.jsonl,
/// optional periodic checkpoints, and the effective config.
inline int cmd_train(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    auto corpus = detail::resolve_corpus(cfg);

    ModelConfig mcfg = cfg.model;
    mcfg.seed = cfg.seed;
    TrainConfig tcfg = cfg.train;
    tcfg.seed = cfg.seed;

    const fs::path out_dir(cfg.paths.out_dir);
    fs::create_directories(out_dir);
    write_effective_config(cfg, out_dir.string());

    std::ofstream history(out_dir / "history.jsonl");
    if (!history) throw DataError("cannot write " + (out_dir / "history.jsonl").string());
    history.precision(17);

    auto result = train(corpus, mcfg, tcfg, [&](const EpochStats& e, const ModelParams& p) {
        nlohmann::json j;
        j["epoch"] = e.epoch;
        j["lr"] = e.lr;
        j["cls_loss"] = e.cls_loss;
        j["att_loss"] = e.att_loss;
        j["total_loss"] = e.total_loss;
        j["val_auc"] = e.val_auc;
        history << j.dump() << "\n";
        history.flush();
        std::cout << "epoch " << e.epoch << " lr " << e.lr << " cls " << e.cls_loss << " att "
                  << e.att_loss << " total " << e.total_loss << " val_auc " << e.val_auc << "\n";
        if (cfg.train.checkpoint_every > 0 && (e.epoch + 1) % cfg.train.checkpoint_every == 0) {
            std::ostringstream name;
            name << "checkpoint_" << std::setw(4) << std::setfill('0') << (e.epoch + 1) << ".fkf1";
            save_params((out_dir / name.str()).string(), p);
        }
    });

    save_params((out_dir / "weights.fkf1").string(), result.params);
    std::cout << "train: wrote " << (out_dir / "weights.fkf1").string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

/// Scores a manifest with trained weights; writes frame- and video-level
/// reports, with optional quality stratification and the perturbation table.
inline int cmd_eval(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    if (cfg.paths.manifest.empty()) throw UsageError("eval: paths.manifest is required");
    auto entries = load_manifest(cfg.paths.manifest);
    if (entries.empty()) throw DataError("eval: empty manifest " + cfg.paths.manifest);
    auto params = detail::load_model(cfg, cfg.paths.weights);

    const fs::path out_dir(cfg.paths.out_dir);
    fs::create_directories(out_dir);
    write_effective_config(cfg, out_dir.string());

    std::vector<ScoredSample> frames;
    std::vector<Image> images;
    images.reserve(entries.size());
    for (const auto& e : entries) {
        Image im = read_png(e.image);
        frames.emplace_back(detail::score_image(params, im), e.label == "fake" ? 1 : 0,
                            e.source_id);
        images.push_back(std::move(im));
    }

    EvalReport frame_report = evaluate(frames);

    if (cfg.eval.stratify) {
        // Pair each fake with the real record whose source_id is the fake's
        // with the ":fake" suffix stripped; the facial region comes from the
        // real's landmark hull.
        std::map<std::string, size_t> real_by_source;
        for (size_t i = 0; i < entries.size(); ++i)
            if (entries[i].label == "real") real_by_source.emplace(entries[i].source_id, i);
        for (size_t i = 0; i < entries.size(); ++i) {
            if (entries[i].label != "fake") continue;
            std::string key = entries[i].source_id;
            const std::string suffix = ":fake";
            if (key.size() > suffix.size() && key.ends_with(suffix))
                key = key.substr(0, key.size() - suffix.size());
            auto it = real_by_source.find(key);
            if (it == real_by_source.end()) continue;
            const auto& real_entry = entries[it->second];
            if (real_entry.landmarks.empty()) continue;
            const Image& real_img = images[it->second];
            auto lms = load_landmarks(real_entry.landmarks, real_img.height, real_img.width);
            auto mask = convex_hull_mask(lms, real_img.height, real_img.width);
            frames[i].mask_ssim = mask_ssim(images[i], real_img, mask);
        }
        frame_report.bins = stratify_by_ssim(frames, cfg.eval.bins);
    }

    if (cfg.eval.perturb) {
        for (auto kind : all_perturb_kinds()) {
            for (int severity = 0; severity <= 5; ++severity) {
                std::vector<ScoredSample> perturbed;
                for (size_t i = 0; i < entries.size(); ++i) {
                    Rng rng(derive_seed(cfg.seed, 0x70657274ULL + static_cast<uint64_t>(kind),
                                        static_cast<uint64_t>(severity) * 1000003ULL + i));
                    auto im = perturb(images[i], kind, severity, rng);
                    perturbed.emplace_back(detail::score_image(params, im), frames[i].label,
                                           frames[i].source_id);
                }
                frame_report.perturbs.push_back(
                    {perturb_kind_name(kind), severity, auc_score(perturbed)});
            }
        }
    }

    auto videos = video_level_score(frames, cfg.eval.video_agg);
    EvalReport video_report = evaluate(videos);

    {
        std::ofstream f(out_dir / "report.json");
        if (!f) throw DataError("cannot write report.json");
        f << frame_report.to_json() << "\n";
    }
    {
        std::ofstream f(out_dir / "report.csv");
        if (!f) throw DataError("cannot write report.csv");
        f << frame_report.to_csv();
    }
    {
        std::ofstream f(out_dir / "video_report.json");
        if (!f) throw DataError("cannot write video_report.json");
        f << video_report.to_json() << "\n";
    }
    std::cout << "eval: frame auc " << frame_report.auc << " ap " << frame_report.ap
              << " | video auc " << video_report.auc << " ap " << video_report.ap << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

/// Scores one image and writes its predicted heatmap as a PNG.
inline int cmd_infer(const RunConfig& cfg, const std::string& image_path) {
    namespace fs = std::filesystem;
    if (image_path.empty()) throw UsageError("infer: an image path is required");
    if (!fs::exists(image_path)) throw DataError("infer: no such image " + image_path);
    auto params = detail::load_model(cfg, cfg.paths.weights);

    Image im = read_png(image_path);
    const auto& mcfg = params.cfg;
    Image sized = (im.height == mcfg.height && im.width == mcfg.width)
                      ? im
                      : resize_bilinear(im, mcfg.height, mcfg.width);
    Tape tape;
    auto out = forward(tape, params, sized, BnMode::eval);
    const double score = detail::sigmoid_val(out.logit->item());

    const fs::path out_dir(cfg.paths.out_dir);
    fs::create_directories(out_dir);
    write_effective_config(cfg, out_dir.string());
    const auto heat_path = (out_dir / "heatmap.png").string();
    Image heat = Image::make(mcfg.grid_side(), mcfg.grid_side(), 1);
    heat.pix.assign(out.heatmap->data.begin(), out.heatmap->data.end());
    heat.clamp01();
    write_png(heat_path, heat);

    nlohmann::json j;
    j["score"] = score;
    j["heatmap"] = heat_path;
    std::cout << j.dump() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

/// Runs the oracle suite and prints one line per check; exit 3 on failure.
inline int cmd_verify(const RunConfig& cfg, bool inject_fault = false, int n_seeds = 5) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.paths.out_dir);
    auto report = run_verification(n_seeds, inject_fault, cfg.paths.out_dir);
    for (const auto& c : report.checks) {
        std::cout << (c.passed ? "[PASS] " : "[FAIL] ") << c.name << " max_err=" << c.max_err;
        if (!c.passed && !c.detail.empty()) std::cout << " (" << c.detail << ")";
        std::cout << "\n";
    }
    const size_t failed = static_cast<size_t>(
        std::count_if(report.checks.begin(), report.checks.end(),
                      [](const VerifyCheck& c) { return !c.passed; }));
    std::cout << "verify: " << (report.checks.size() - failed) << "/" << report.checks.size()
              << " checks passed\n";
    return report.all_passed() ? kExitOk : kExitVerify;
}

}  // namespace ff
