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

// Command-line front end: synth | train | eval | infer | verify.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 verification failure.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fakeformer/commands.hpp"

namespace {

struct GlobalFlags {
    std::string config_path;
    std::optional<uint64_t> seed;
    int threads = 1;
    std::string out_dir;
    std::string manifest;
    std::string weights;
};

ff::RunConfig resolve_config(const GlobalFlags& g, bool seed_required) {
    ff::RunConfig cfg;
    if (!g.config_path.empty()) cfg = ff::load_run_config(g.config_path);
    if (g.seed) {
        cfg.seed = *g.seed;
        cfg.seed_set = true;
    }
    if (seed_required && !cfg.seed_set)
        throw ff::UsageError("a seed is required: set \"seed\" in the config or pass --seed");
    if (g.threads < 1) throw ff::UsageError("--threads must be at least 1");
    if (!g.out_dir.empty()) cfg.paths.out_dir = g.out_dir;
    if (!g.manifest.empty()) cfg.paths.manifest = g.manifest;
    if (!g.weights.empty()) cfg.paths.weights = g.weights;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Blending-based deepfake detector: synthesis, training, evaluation"};
    app.require_subcommand(1);

    GlobalFlags g;
    app.add_option("--config", g.config_path, "JSON run configuration")->expected(1);
    app.add_option("--seed", g.seed, "Seed overriding the config");
    app.add_option("--threads", g.threads, "Worker threads (1 keeps runs bit-reproducible)");
    app.add_option("--out", g.out_dir, "Output directory overriding the config");
    app.add_option("--manifest", g.manifest, "Dataset manifest overriding the config");
    app.add_option("--weights", g.weights, "Weights file overriding the config");

    auto* synth = app.add_subcommand("synth", "Write pseudo-fakes, boundaries, and heatmaps");
    synth->fallthrough();
    int64_t toy_count = -1;
    int64_t toy_size = -1;
    std::string synth_mode;
    synth->add_option("--toy", toy_count, "Generate a procedural corpus of N faces");
    synth->add_option("--size", toy_size, "Procedural face size in pixels");
    synth->add_option("--mode", synth_mode, "Blending mode: sbi or bi");

    auto* train = app.add_subcommand("train", "Train the detector");
    train->fallthrough();

    auto* eval = app.add_subcommand("eval", "Score a manifest and write reports");
    eval->fallthrough();
    bool stratify = false, perturb = false;
    eval->add_flag("--stratify", stratify, "Add the quality-stratified AUC table");
    eval->add_flag("--perturb", perturb, "Add the perturbation robustness table");

    auto* infer = app.add_subcommand("infer", "Score one image and dump its heatmap");
    infer->fallthrough();
    std::string image_path;
    infer->add_option("image", image_path, "Input PNG")->required();

    auto* verify = app.add_subcommand("verify", "Run the oracle and gradient-check suite");
    verify->fallthrough();
    bool inject_fault = false;
    int verify_seeds = 5;
    verify->add_flag("--inject-fault", inject_fault,
                     "Add a deliberately wrong backward rule (must fail)");
    verify->add_option("--seeds", verify_seeds, "Seeds per gradient check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            app.exit(e);
            return ff::kExitOk;
        }
        std::cerr << e.what() << "\n";
        return ff::kExitUsage;
    }

    try {
        if (synth->parsed()) {
            auto cfg = resolve_config(g, /*seed_required=*/true);
            if (toy_count >= 0) cfg.synth.toy_count = toy_count;
            if (toy_size > 0) cfg.synth.toy_size = toy_size;
            if (!synth_mode.empty()) cfg.synth.mode = ff::detail::parse_synth_mode(synth_mode);
            return ff::cmd_synth(cfg);
        }
        if (train->parsed()) {
            auto cfg = resolve_config(g, /*seed_required=*/true);
            return ff::cmd_train(cfg);
        }
        if (eval->parsed()) {
            auto cfg = resolve_config(g, /*seed_required=*/true);
            cfg.eval.stratify = cfg.eval.stratify || stratify;
            cfg.eval.perturb = cfg.eval.perturb || perturb;
            return ff::cmd_eval(cfg);
        }
        if (infer->parsed()) {
            auto cfg = resolve_config(g, /*seed_required=*/false);
            return ff::cmd_infer(cfg, image_path);
        }
        if (verify->parsed()) {
            auto cfg = resolve_config(g, /*seed_required=*/false);
            if (cfg.paths.out_dir.empty()) cfg.paths.out_dir = ".";
            return ff::cmd_verify(cfg, inject_fault, verify_seeds);
        }
        std::cerr << "no subcommand given\n";
        return ff::kExitUsage;
    } catch (const ff::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return ff::kExitUsage;
    } catch (const ff::FormatError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return ff::kExitData;
    } catch (const ff::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return ff::kExitData;
    } catch (const ff::SynthesisError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return ff::kExitData;
    } catch (const ff::MetricError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return ff::kExitData;
    } catch (const ff::DimensionError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return ff::kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return ff::kExitData;
    }
}
