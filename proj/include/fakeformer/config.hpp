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

// Run configuration (JSON, strict keys, defaults materialized on echo) and
// the JSON-lines dataset manifest with its landmark sidecar format.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fakeformer/evaluation.hpp"
#include "fakeformer/model.hpp"
#include "fakeformer/png_io.hpp"
#include "fakeformer/training.hpp"

namespace ff {

struct SynthSection {
    int64_t toy_count = 0;   // > 0 generates a procedural corpus
    int64_t toy_size = 64;
    SynthMode mode = SynthMode::sbi;
};

struct EvalSection {
    VideoAgg video_agg = VideoAgg::mean;
    bool stratify = false;
    bool perturb = false;
    std::vector<double> bins = default_ssim_edges();
};

struct PathsSection {
    std::string manifest;
    std::string out_dir = "out";
    std::string weights;
};

struct RunConfig {
    uint64_t seed = 0;
    bool seed_set = false;  // configs must pin a seed; no wall-clock fallback
    ModelConfig model;
    TrainConfig train;
    SynthSection synth;
    EvalSection eval;
    PathsSection paths;
};

namespace detail {

using nlohmann::json;

inline void require_keys(const json& j, const std::string& section,
                         std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw UsageError("config: section '" + section + "' must be an object");
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* k : allowed) ok = ok || item.key() == k;
        if (!ok)
            throw UsageError("config: unknown key '" + item.key() + "' in section '" + section +
                             "'");
    }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

inline SynthMode parse_synth_mode(const std::string& s) {
    if (s == "sbi") return SynthMode::sbi;
    if (s == "bi") return SynthMode::bi;
    throw UsageError("config: synth mode must be 'sbi' or 'bi', got '" + s + "'");
}

inline AggregateMode parse_agg_mode(const std::string& s) {
    if (s == "max") return AggregateMode::max;
    if (s == "mean") return AggregateMode::mean;
    throw UsageError("config: aggregate mode must be 'max' or 'mean', got '" + s + "'");
}

inline VideoAgg parse_video_agg(const std::string& s) {
    if (s == "mean") return VideoAgg::mean;
    if (s == "max") return VideoAgg::max;
    throw UsageError("config: video aggregation must be 'mean' or 'max', got '" + s + "'");
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
    using detail::maybe;
    RunConfig cfg;
    detail::require_keys(j, "<root>", {"seed", "model", "train", "synth", "eval", "paths"});
    if (j.contains("seed")) {
        cfg.seed = j.at("seed").get<uint64_t>();
        cfg.seed_set = true;
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        detail::require_keys(m, "model",
                             {"height", "width", "patch", "layers", "dim", "mlp_dim", "heads",
                              "att_hidden"});
        maybe(m, "height", cfg.model.height);
        maybe(m, "width", cfg.model.width);
        maybe(m, "patch", cfg.model.patch);
        maybe(m, "layers", cfg.model.layers);
        maybe(m, "dim", cfg.model.dim);
        maybe(m, "mlp_dim", cfg.model.mlp_dim);
        maybe(m, "heads", cfg.model.heads);
        maybe(m, "att_hidden", cfg.model.att_hidden);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        detail::require_keys(t, "train",
                             {"epochs", "batch_size", "base_lr", "weight_decay", "lambda",
                              "label_smoothing", "focal_alpha", "focal_beta", "freeze_epochs",
                              "frames_per_video", "synth_mode", "agg_mode", "heatmap_sigma",
                              "target_tie_tol", "val_fraction", "checkpoint_every", "augment"});
        maybe(t, "epochs", cfg.train.epochs);
        maybe(t, "batch_size", cfg.train.batch_size);
        maybe(t, "base_lr", cfg.train.base_lr);
        maybe(t, "weight_decay", cfg.train.weight_decay);
        maybe(t, "lambda", cfg.train.lambda);
        maybe(t, "label_smoothing", cfg.train.label_smoothing);
        maybe(t, "focal_alpha", cfg.train.focal_alpha);
        maybe(t, "focal_beta", cfg.train.focal_beta);
        maybe(t, "freeze_epochs", cfg.train.freeze_epochs);
        maybe(t, "frames_per_video", cfg.train.frames_per_video);
        if (t.contains("synth_mode"))
            cfg.train.synth_mode = detail::parse_synth_mode(t.at("synth_mode").get<std::string>());
        if (t.contains("agg_mode"))
            cfg.train.agg_mode = detail::parse_agg_mode(t.at("agg_mode").get<std::string>());
        maybe(t, "heatmap_sigma", cfg.train.heatmap_sigma);
        maybe(t, "target_tie_tol", cfg.train.target_tie_tol);
        maybe(t, "val_fraction", cfg.train.val_fraction);
        maybe(t, "checkpoint_every", cfg.train.checkpoint_every);
        if (t.contains("augment")) {
            const auto& a = t.at("augment");
            detail::require_keys(a, "train.augment",
                                 {"p_color", "p_crop", "p_scale", "p_flip", "p_noise", "p_blur",
                                  "p_jpeg"});
            maybe(a, "p_color", cfg.train.augment.p_color);
            maybe(a, "p_crop", cfg.train.augment.p_crop);
            maybe(a, "p_scale", cfg.train.augment.p_scale);
            maybe(a, "p_flip", cfg.train.augment.p_flip);
            maybe(a, "p_noise", cfg.train.augment.p_noise);
            maybe(a, "p_blur", cfg.train.augment.p_blur);
            maybe(a, "p_jpeg", cfg.train.augment.p_jpeg);
        }
    }
    if (j.contains("synth")) {
        const auto& s = j.at("synth");
        detail::require_keys(s, "synth", {"toy_count", "toy_size", "mode"});
        maybe(s, "toy_count", cfg.synth.toy_count);
        maybe(s, "toy_size", cfg.synth.toy_size);
        if (s.contains("mode"))
            cfg.synth.mode = detail::parse_synth_mode(s.at("mode").get<std::string>());
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        detail::require_keys(e, "eval", {"video_agg", "stratify", "perturb", "bins"});
        if (e.contains("video_agg"))
            cfg.eval.video_agg = detail::parse_video_agg(e.at("video_agg").get<std::string>());
        maybe(e, "stratify", cfg.eval.stratify);
        maybe(e, "perturb", cfg.eval.perturb);
        maybe(e, "bins", cfg.eval.bins);
    }
    if (j.contains("paths")) {
        const auto& p = j.at("paths");
        detail::require_keys(p, "paths", {"manifest", "out_dir", "weights"});
        maybe(p, "manifest", cfg.paths.manifest);
        maybe(p, "out_dir", cfg.paths.out_dir);
        maybe(p, "weights", cfg.paths.weights);
    }
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw UsageError("config: cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("config: invalid JSON in " + path + ": " + e.what());
    }
    try {
        return parse_run_config(j);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("config: bad value in " + path + ": " + e.what());
    }
}

/// Fully-resolved configuration with every default materialized; reruns from
/// this document reproduce the run bit for bit.
inline nlohmann::json effective_config(const RunConfig& cfg) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    j["model"] = {{"height", cfg.model.height},   {"width", cfg.model.width},
                  {"patch", cfg.model.patch},     {"layers", cfg.model.layers},
                  {"dim", cfg.model.dim},         {"mlp_dim", cfg.model.mlp_dim},
                  {"heads", cfg.model.heads},     {"att_hidden", cfg.model.att_hidden}};
    j["train"] = {
        {"epochs", cfg.train.epochs},
        {"batch_size", cfg.train.batch_size},
        {"base_lr", cfg.train.base_lr},
        {"weight_decay", cfg.train.weight_decay},
        {"lambda", cfg.train.lambda},
        {"label_smoothing", cfg.train.label_smoothing},
        {"focal_alpha", cfg.train.focal_alpha},
        {"focal_beta", cfg.train.focal_beta},
        {"freeze_epochs", cfg.train.freeze_epochs},
        {"frames_per_video", cfg.train.frames_per_video},
        {"synth_mode", cfg.train.synth_mode == SynthMode::sbi ? "sbi" : "bi"},
        {"agg_mode", cfg.train.agg_mode == AggregateMode::max ? "max" : "mean"},
        {"heatmap_sigma", cfg.train.heatmap_sigma},
        {"target_tie_tol", cfg.train.target_tie_tol},
        {"val_fraction", cfg.train.val_fraction},
        {"checkpoint_every", cfg.train.checkpoint_every},
        {"augment",
         {{"p_color", cfg.train.augment.p_color},
          {"p_crop", cfg.train.augment.p_crop},
          {"p_scale", cfg.train.augment.p_scale},
          {"p_flip", cfg.train.augment.p_flip},
          {"p_noise", cfg.train.augment.p_noise},
          {"p_blur", cfg.train.augment.p_blur},
          {"p_jpeg", cfg.train.augment.p_jpeg}}},
    };
    j["synth"] = {{"toy_count", cfg.synth.toy_count},
                  {"toy_size", cfg.synth.toy_size},
                  {"mode", cfg.synth.mode == SynthMode::sbi ? "sbi" : "bi"}};
    j["eval"] = {{"video_agg", cfg.eval.video_agg == VideoAgg::mean ? "mean" : "max"},
                 {"stratify", cfg.eval.stratify},
                 {"perturb", cfg.eval.perturb},
                 {"bins", cfg.eval.bins}};
    j["paths"] = {{"manifest", cfg.paths.manifest},
                  {"out_dir", cfg.paths.out_dir},
                  {"weights", cfg.paths.weights}};
    return j;
}

inline void write_effective_config(const RunConfig& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const auto path = std::filesystem::path(out_dir) / "effective_config.json";
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path.string());
    f << effective_config(cfg).dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Manifest and landmark sidecars
// ---------------------------------------------------------------------------

struct ManifestEntry {
    std::string image;      // resolved path
    std::string landmarks;  // resolved path, may be empty for fakes
    std::string label;      // "real" | "fake"
    std::string source_id;
};

/// JSON-lines manifest; relative paths resolve against the manifest's parent
/// directory, and every referenced file must exist.
inline std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("manifest: cannot open " + path);
    const auto base = std::filesystem::path(path).parent_path();
    auto resolve = [&](const std::string& p) -> std::string {
        if (p.empty()) return p;
        std::filesystem::path fp(p);
        if (fp.is_relative()) fp = base / fp;
        return fp.string();
    };
    std::vector<ManifestEntry> out;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("manifest: bad JSON at line " + std::to_string(lineno) + ": " +
                            e.what());
        }
        try {
            detail::require_keys(j, "manifest line " + std::to_string(lineno),
                                 {"image", "landmarks", "label", "source_id"});
        } catch (const UsageError& e) {
            // A stray key in a data file is a data problem, not a usage one.
            throw DataError(e.what());
        }
        ManifestEntry e;
        if (!j.contains("image") || !j.contains("label") || !j.contains("source_id"))
            throw DataError("manifest: line " + std::to_string(lineno) +
                            " needs image, label, and source_id");
        e.image = resolve(j.at("image").get<std::string>());
        if (j.contains("landmarks")) e.landmarks = resolve(j.at("landmarks").get<std::string>());
        e.label = j.at("label").get<std::string>();
        e.source_id = j.at("source_id").get<std::string>();
        if (e.label != "real" && e.label != "fake")
            throw DataError("manifest: line " + std::to_string(lineno) + " label must be real|fake");
        if (e.source_id.empty())
            throw DataError("manifest: line " + std::to_string(lineno) + " has empty source_id");
        if (!std::filesystem::exists(e.image))
            throw DataError("manifest: missing image file " + e.image);
        if (!e.landmarks.empty() && !std::filesystem::exists(e.landmarks))
            throw DataError("manifest: missing landmarks file " + e.landmarks);
        out.push_back(std::move(e));
    }
    return out;
}

inline void append_manifest_line(std::ofstream& f, const std::string& image,
                                 const std::string& landmarks, const std::string& label,
                                 const std::string& source_id) {
    nlohmann::json j;
    j["image"] = image;
    if (!landmarks.empty()) j["landmarks"] = landmarks;
    j["label"] = label;
    j["source_id"] = source_id;
    f << j.dump() << "\n";
}

inline void save_landmarks(const std::string& path, const LandmarkSet& lms) {
    nlohmann::json j;
    auto pts = nlohmann::json::array();
    for (const auto& p : lms.points) pts.push_back({p.first, p.second});
    j["points"] = pts;
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path);
    f << j.dump() << "\n";
}

inline LandmarkSet load_landmarks(const std::string& path, int64_t height, int64_t width) {
    std::ifstream f(path);
    if (!f) throw DataError("landmarks: cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("landmarks: invalid JSON in " + path + ": " + e.what());
    }
    if (!j.contains("points") || !j.at("points").is_array())
        throw DataError("landmarks: " + path + " needs a 'points' array");
    LandmarkSet lms;
    lms.height = height;
    lms.width = width;
    for (const auto& p : j.at("points")) {
        if (!p.is_array() || p.size() != 2)
            throw DataError("landmarks: " + path + " points must be [x, y] pairs");
        lms.points.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    }
    return lms;
}

/// Loads the real entries of a manifest as a training corpus.
inline std::vector<CorpusItem> load_corpus(const std::string& manifest_path) {
    auto entries = load_manifest(manifest_path);
    std::vector<CorpusItem> corpus;
    for (const auto& e : entries) {
        if (e.label != "real") continue;
        if (e.landmarks.empty())
            throw DataError("corpus: real entry '" + e.source_id + "' has no landmarks");
        CorpusItem item;
        item.id = e.source_id;
        item.image = read_png(e.image);
        item.lms = load_landmarks(e.landmarks, item.image.height, item.image.width);
        corpus.push_back(std::move(item));
    }
    if (corpus.empty()) throw DataError("corpus: no real entries in " + manifest_path);
    return corpus;
}

/// Procedural corpus used by the --toy path and the smoke configurations.
inline std::vector<CorpusItem> toy_corpus(int64_t count, int64_t size, uint64_t seed) {
    if (count <= 0) throw UsageError("toy corpus: count must be positive");
    std::vector<CorpusItem> corpus;
    corpus.reserve(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) {
        auto [img, lms] = gen_toy_face(derive_seed(seed, 0x746f79ULL, static_cast<uint64_t>(i)), size);
        std::ostringstream id;
        id << "toy" << std::setw(4) << std::setfill('0') << i;
        corpus.push_back({id.str(), std::move(img), std::move(lms)});
    }
    return corpus;
}

}  // namespace ff
