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

// The detector: patch embedding into a pre-norm transformer encoder, a
// scalar real/fake head on the class token, and a convolutional attention
// head that predicts the vulnerability heatmap from the patch tokens.

#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fakeformer/error.hpp"
#include "fakeformer/image.hpp"
#include "fakeformer/rng.hpp"
#include "fakeformer/tensor.hpp"

namespace ff {

struct ModelConfig {
    int64_t height = 112;
    int64_t width = 112;
    int64_t patch = 8;
    int64_t layers = 12;
    int64_t dim = 384;
    int64_t mlp_dim = 1536;
    int64_t heads = 6;
    int64_t att_hidden = 192;
    uint64_t seed = 0;

    void validate() const {
        if (height <= 0 || width <= 0 || patch <= 0 || layers <= 0 || dim <= 0 || mlp_dim <= 0 ||
            heads <= 0 || att_hidden <= 0)
            throw DimensionError("model config: all sizes must be positive");
        if (height % patch != 0 || width % patch != 0)
            throw DimensionError("model config: patch must divide height and width");
        if (dim % heads != 0) throw DimensionError("model config: heads must divide dim");
        const int64_t n = n_patches();
        const int64_t s = grid_side();
        if (s * s != n) throw DimensionError("model config: patch grid must be square");
    }

    int64_t n_patches() const { return (height / patch) * (width / patch); }
    int64_t grid_side() const {
        const int64_t n = n_patches();
        auto s = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(n))));
        return s;
    }
    int64_t patch_len() const { return 3 * patch * patch; }

    /// Small configuration: 112 px input, 12 layers, width 384.
    static ModelConfig small() { return {}; }

    /// Toy configuration for fast end-to-end runs on 64 px faces.
    static ModelConfig toy() {
        ModelConfig c;
        c.height = c.width = 64;
        c.patch = 8;
        c.layers = 4;
        c.dim = 64;
        c.mlp_dim = 256;
        c.heads = 4;
        c.att_hidden = 32;
        return c;
    }
};

struct BlockParams {
    TensorPtr ln1_w, ln1_b;
    TensorPtr wq, bq, wk, bk, wv, bv, wo, bo;
    TensorPtr ln2_w, ln2_b;
    TensorPtr mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

struct ModelParams {
    ModelConfig cfg;
    TensorPtr patch_embed_w;  // (3 P^2) x D
    TensorPtr pos_embed;      // (N+1) x D
    TensorPtr cls_token;      // 1 x D
    std::vector<BlockParams> blocks;
    TensorPtr final_ln_w, final_ln_b;
    TensorPtr cls_w, cls_b;  // D x 1, 1
    TensorPtr att_conv1_w, att_conv1_b;  // att_hidden x D x 3 x 3
    TensorPtr att_bn1_w, att_bn1_b, att_bn1_rm, att_bn1_rv;
    TensorPtr att_conv2_w, att_conv2_b;  // 1 x att_hidden x 1 x 1
    TensorPtr att_bn2_w, att_bn2_b, att_bn2_rm, att_bn2_rv;

    struct Named {
        std::string name;
        TensorPtr tensor;
        bool trainable;  // false for batch-norm running statistics
        bool backbone;   // true for the encoder, false for the two heads
    };

    /// Stable enumeration used by serialization, the optimizer, and freezing.
    std::vector<Named> named() const {
        std::vector<Named> out;
        auto add = [&](std::string n, const TensorPtr& t, bool train, bool bb) {
            out.push_back({std::move(n), t, train, bb});
        };
        add("patch_embed.weight", patch_embed_w, true, true);
        add("pos_embed", pos_embed, true, true);
        add("cls_token", cls_token, true, true);
        for (size_t i = 0; i < blocks.size(); ++i) {
            const auto& b = blocks[i];
            const std::string p = "blocks." + std::to_string(i) + ".";
            add(p + "ln1.weight", b.ln1_w, true, true);
            add(p + "ln1.bias", b.ln1_b, true, true);
            add(p + "attn.wq.weight", b.wq, true, true);
            add(p + "attn.wq.bias", b.bq, true, true);
            add(p + "attn.wk.weight", b.wk, true, true);
            add(p + "attn.wk.bias", b.bk, true, true);
            add(p + "attn.wv.weight", b.wv, true, true);
            add(p + "attn.wv.bias", b.bv, true, true);
            add(p + "attn.wo.weight", b.wo, true, true);
            add(p + "attn.wo.bias", b.bo, true, true);
            add(p + "ln2.weight", b.ln2_w, true, true);
            add(p + "ln2.bias", b.ln2_b, true, true);
            add(p + "mlp.w1.weight", b.mlp_w1, true, true);
            add(p + "mlp.w1.bias", b.mlp_b1, true, true);
            add(p + "mlp.w2.weight", b.mlp_w2, true, true);
            add(p + "mlp.w2.bias", b.mlp_b2, true, true);
        }
        add("final_ln.weight", final_ln_w, true, true);
        add("final_ln.bias", final_ln_b, true, true);
        add("cls_head.weight", cls_w, true, false);
        add("cls_head.bias", cls_b, true, false);
        add("att_head.conv1.weight", att_conv1_w, true, false);
        add("att_head.conv1.bias", att_conv1_b, true, false);
        add("att_head.bn1.weight", att_bn1_w, true, false);
        add("att_head.bn1.bias", att_bn1_b, true, false);
        add("att_head.bn1.running_mean", att_bn1_rm, false, false);
        add("att_head.bn1.running_var", att_bn1_rv, false, false);
        add("att_head.conv2.weight", att_conv2_w, true, false);
        add("att_head.conv2.bias", att_conv2_b, true, false);
        add("att_head.bn2.weight", att_bn2_w, true, false);
        add("att_head.bn2.bias", att_bn2_b, true, false);
        add("att_head.bn2.running_mean", att_bn2_rm, false, false);
        add("att_head.bn2.running_var", att_bn2_rv, false, false);
        return out;
    }

    /// Marks which tensors receive gradients; frozen backbone keeps only the
    /// two heads trainable.  Running statistics never require gradients.
    void set_trainable(bool backbone_trainable) {
        for (auto& n : named())
            n.tensor->requires_grad = n.trainable && (backbone_trainable || !n.backbone);
    }
};

struct ModelOutput {
    TensorPtr logit;    // [1 x 1]
    TensorPtr heatmap;  // [side x side], values in (0, 1)
};

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

/// Initial probability the heatmap head assigns to every cell.
constexpr double kHeatmapPrior = 0.1;

inline ModelParams init_params(const ModelConfig& cfg) {
    cfg.validate();
    ModelParams p;
    p.cfg = cfg;
    Rng master(derive_seed(cfg.seed, 0x6d6f64656cULL));
    uint64_t stream = 0;
    auto trunc = [&](Dims d) {
        Rng r = master.fork(stream++);
        auto t = Tensor::zeros(std::move(d));
        for (auto& v : t->data) v = r.truncated_normal(0.0, 0.02);
        return t;
    };
    auto zeros = [&](Dims d) { return Tensor::zeros(std::move(d)); };
    auto ones = [&](Dims d) { return Tensor::full(std::move(d), 1.0); };

    const int64_t n = cfg.n_patches(), d = cfg.dim;
    p.patch_embed_w = trunc({cfg.patch_len(), d});
    p.pos_embed = trunc({n + 1, d});
    p.cls_token = trunc({1, d});
    p.blocks.resize(static_cast<size_t>(cfg.layers));
    for (auto& b : p.blocks) {
        b.ln1_w = ones({d});
        b.ln1_b = zeros({d});
        b.wq = trunc({d, d});
        b.bq = zeros({d});
        b.wk = trunc({d, d});
        b.bk = zeros({d});
        b.wv = trunc({d, d});
        b.bv = zeros({d});
        b.wo = trunc({d, d});
        b.bo = zeros({d});
        b.ln2_w = ones({d});
        b.ln2_b = zeros({d});
        b.mlp_w1 = trunc({d, cfg.mlp_dim});
        b.mlp_b1 = zeros({cfg.mlp_dim});
        b.mlp_w2 = trunc({cfg.mlp_dim, d});
        b.mlp_b2 = zeros({d});
    }
    p.final_ln_w = ones({d});
    p.final_ln_b = zeros({d});
    p.cls_w = trunc({d, 1});
    p.cls_b = zeros({1});
    p.att_conv1_w = trunc({cfg.att_hidden, d, 3, 3});
    p.att_conv1_b = zeros({cfg.att_hidden});
    p.att_bn1_w = ones({cfg.att_hidden});
    p.att_bn1_b = zeros({cfg.att_hidden});
    p.att_bn1_rm = zeros({cfg.att_hidden});
    p.att_bn1_rv = ones({cfg.att_hidden});
    p.att_conv2_w = trunc({1, cfg.att_hidden, 1, 1});
    p.att_conv2_b = zeros({1});
    p.att_bn2_w = ones({1});
    // Heatmap positives are rare (a few cells out of the grid), so the output
    // stage starts at a low prior probability instead of one half; otherwise
    // the many-negatives focal term dwarfs every other gradient early on.
    p.att_bn2_b = Tensor::full({1}, std::log(kHeatmapPrior / (1.0 - kHeatmapPrior)));
    p.att_bn2_rm = zeros({1});
    p.att_bn2_rv = ones({1});
    p.set_trainable(true);
    return p;
}

/// Trainable parameter count, computed from shapes alone.
inline int64_t param_count(const ModelConfig& cfg) {
    const int64_t n = cfg.n_patches(), d = cfg.dim;
    int64_t total = cfg.patch_len() * d + (n + 1) * d + d;  // embeddings
    const int64_t per_block = 2 * d + 4 * (d * d + d) + 2 * d + (d * cfg.mlp_dim + cfg.mlp_dim) +
                              (cfg.mlp_dim * d + d);
    total += cfg.layers * per_block;
    total += 2 * d;             // final norm
    total += d + 1;             // scalar head
    total += cfg.att_hidden * d * 9 + cfg.att_hidden + 2 * cfg.att_hidden;  // conv3x3 + bn
    total += cfg.att_hidden + 1 + 2;                                        // conv1x1 + bn
    return total;
}

/// Rough multiply-add count (x2) of one forward pass; informational only.
inline double flop_estimate(const ModelConfig& cfg) {
    const double n = static_cast<double>(cfg.n_patches());
    const double t = n + 1.0, d = static_cast<double>(cfg.dim);
    const double s2 = n, hid = static_cast<double>(cfg.att_hidden);
    double fl = 2.0 * n * cfg.patch_len() * d;                      // embedding
    double per_block = 2.0 * (4.0 * t * d * d)                      // qkvo projections
                       + 2.0 * (2.0 * t * t * d)                    // scores and values
                       + 2.0 * (2.0 * t * d * cfg.mlp_dim);         // mlp
    fl += cfg.layers * per_block;
    fl += 2.0 * d;                                                  // scalar head
    fl += 2.0 * s2 * hid * d * 9.0 + 2.0 * s2 * hid;                // attention head convs
    return fl;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

/// Row-major patch matrix [N x 3 P^2]; each patch flattens channel-major,
/// then rows, then columns.
inline TensorPtr extract_patches(Tape& tape, const ModelConfig& cfg, const TensorPtr& img) {
    if (img->dims != Dims{3, cfg.height, cfg.width})
        throw DimensionError("extract_patches: image dims do not match config");
    const int64_t gp = cfg.patch, gw = cfg.width / gp, gh = cfg.height / gp;
    const int64_t n = gh * gw * cfg.patch_len();
    auto out = Tensor::zeros({gh * gw, cfg.patch_len()});
    std::vector<int64_t> src_of(n);
    int64_t o = 0;
    for (int64_t gy = 0; gy < gh; ++gy)
        for (int64_t gx = 0; gx < gw; ++gx)
            for (int64_t c = 0; c < 3; ++c)
                for (int64_t y = 0; y < gp; ++y)
                    for (int64_t x = 0; x < gp; ++x) {
                        const int64_t src = (c * cfg.height + gy * gp + y) * cfg.width + gx * gp + x;
                        out->data[o] = img->data[src];
                        src_of[o++] = src;
                    }
    if (detail::track(img)) {
        out->requires_grad = true;
        tape.record([img, out, src_of = std::move(src_of), n] {
            if (detail::no_grad(out)) return;
            img->ensure_grad();
            for (int64_t i = 0; i < n; ++i) img->grad[src_of[i]] += out->grad[i];
        });
    }
    return out;
}

/// Token sequence z0 = [cls; patches * E] + pos, shape (N+1) x D.
inline TensorPtr patch_embed(Tape& tape, const ModelParams& p, const TensorPtr& img) {
    auto patches = extract_patches(tape, p.cfg, img);
    auto tokens = matmul(tape, patches, p.patch_embed_w);
    auto z = concat(tape, {p.cls_token, tokens});
    return add(tape, z, p.pos_embed);
}

inline TensorPtr encoder_block(Tape& tape, const ModelConfig& cfg, const BlockParams& b,
                               const TensorPtr& z) {
    const int64_t t_len = z->dims[0], d = cfg.dim, heads = cfg.heads, dh = d / heads;
    auto h = layer_norm(tape, z, b.ln1_w, b.ln1_b);
    auto q = add_bias(tape, matmul(tape, h, b.wq), b.bq);
    auto k = add_bias(tape, matmul(tape, h, b.wk), b.bk);
    auto v = add_bias(tape, matmul(tape, h, b.wv), b.bv);
    auto qh = permute(tape, reshape(tape, q, {t_len, heads, dh}), {1, 0, 2});  // H x T x dh
    auto kh = permute(tape, reshape(tape, k, {t_len, heads, dh}), {1, 2, 0});  // H x dh x T
    auto vh = permute(tape, reshape(tape, v, {t_len, heads, dh}), {1, 0, 2});
    auto scores = mul_scalar(tape, bmm(tape, qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
    auto attn = softmax(tape, scores, 2);
    auto ctx = bmm(tape, attn, vh);                                            // H x T x dh
    auto merged = reshape(tape, permute(tape, ctx, {1, 0, 2}), {t_len, d});
    auto proj = add_bias(tape, matmul(tape, merged, b.wo), b.bo);
    auto z1 = add(tape, proj, z);

    auto m = layer_norm(tape, z1, b.ln2_w, b.ln2_b);
    auto m1 = gelu(tape, add_bias(tape, matmul(tape, m, b.mlp_w1), b.mlp_b1));
    auto m2 = add_bias(tape, matmul(tape, m1, b.mlp_w2), b.mlp_b2);
    return add(tape, m2, z1);
}

/// Scalar fake-vs-real logit from the class token of the normalized sequence.
inline TensorPtr classify(Tape& tape, const ModelParams& p, const TensorPtr& z_norm) {
    auto cls_row = slice_rows(tape, z_norm, 0, 1);
    return add_bias(tape, matmul(tape, cls_row, p.cls_w), p.cls_b);
}

/// Heatmap head over patch tokens: D x side x side feature image through a
/// 3x3 conv + BN + ReLU, a 1x1 conv + BN, and a sigmoid.
inline TensorPtr l2att_forward(Tape& tape, const ModelParams& p, const TensorPtr& z_patches,
                               BnMode bn_mode) {
    const int64_t n = z_patches->dims[0], d = p.cfg.dim, side = p.cfg.grid_side();
    if (n != side * side) throw DimensionError("l2att: patch count is not a perfect square");
    auto feat = reshape(tape, transpose2d(tape, z_patches), {d, side, side});
    auto c1 = conv2d(tape, feat, p.att_conv1_w, p.att_conv1_b);
    auto b1 = batch_norm2d(tape, c1, p.att_bn1_w, p.att_bn1_b, p.att_bn1_rm, p.att_bn1_rv, bn_mode);
    auto r1 = relu(tape, b1);
    auto c2 = conv2d(tape, r1, p.att_conv2_w, p.att_conv2_b);
    auto b2 = batch_norm2d(tape, c2, p.att_bn2_w, p.att_bn2_b, p.att_bn2_rm, p.att_bn2_rv, bn_mode);
    return sigmoid(tape, reshape(tape, b2, {side, side}));
}

inline ModelOutput forward(Tape& tape, const ModelParams& p, const TensorPtr& img,
                           BnMode bn_mode = BnMode::eval) {
    auto z = patch_embed(tape, p, img);
    for (const auto& b : p.blocks) z = encoder_block(tape, p.cfg, b, z);
    auto z_norm = layer_norm(tape, z, p.final_ln_w, p.final_ln_b);
    ModelOutput out;
    out.logit = classify(tape, p, z_norm);
    out.heatmap = l2att_forward(tape, p, slice_rows(tape, z_norm, 1, z_norm->dims[0]), bn_mode);
    return out;
}

inline ModelOutput forward(Tape& tape, const ModelParams& p, const Image& img,
                           BnMode bn_mode = BnMode::eval) {
    return forward(tape, p, image_to_tensor(img), bn_mode);
}

// ---------------------------------------------------------------------------
// Serialization: "FKF1", LE u32 version, u32 count, then per tensor
// u32 name_len, name, u32 ndim, u32 dims[], f32 payload.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32_le(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 24));
}

inline uint32_t read_u32_le(const std::vector<uint8_t>& b, size_t& pos, const std::string& path) {
    if (pos + 4 > b.size())
        throw FormatError("weights load: truncated at byte " + std::to_string(pos) + " in " + path);
    const uint32_t v = static_cast<uint32_t>(b[pos]) | (static_cast<uint32_t>(b[pos + 1]) << 8) |
                       (static_cast<uint32_t>(b[pos + 2]) << 16) |
                       (static_cast<uint32_t>(b[pos + 3]) << 24);
    pos += 4;
    return v;
}

}  // namespace detail

inline void save_params(const std::string& path, const ModelParams& p) {
    const auto entries = p.named();
    std::vector<uint8_t> out;
    out.insert(out.end(), {'F', 'K', 'F', '1'});
    detail::put_u32_le(out, 1);
    detail::put_u32_le(out, static_cast<uint32_t>(entries.size()));
    for (const auto& e : entries) {
        detail::put_u32_le(out, static_cast<uint32_t>(e.name.size()));
        out.insert(out.end(), e.name.begin(), e.name.end());
        detail::put_u32_le(out, static_cast<uint32_t>(e.tensor->dims.size()));
        for (int64_t d : e.tensor->dims) detail::put_u32_le(out, static_cast<uint32_t>(d));
        for (double v : e.tensor->data) {
            const float f = static_cast<float>(v);
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            detail::put_u32_le(out, bits);
        }
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("weights save: cannot open " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw FormatError("weights save: short write to " + path);
}

/// Loads weights into an existing parameter set; every tensor in the file
/// must match the expected shape, and every expected tensor must be present.
inline void load_params(const std::string& path, ModelParams& p) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("weights load: cannot open " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    size_t pos = 0;
    if (buf.size() < 4 || std::memcmp(buf.data(), "FKF1", 4) != 0)
        throw FormatError("weights load: bad magic at byte 0 in " + path);
    pos = 4;
    const uint32_t version = detail::read_u32_le(buf, pos, path);
    if (version != 1)
        throw FormatError("weights load: unsupported version " + std::to_string(version) +
                          " at byte 4 in " + path);
    const uint32_t count = detail::read_u32_le(buf, pos, path);
    std::map<std::string, std::pair<Dims, std::vector<double>>> loaded;
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = detail::read_u32_le(buf, pos, path);
        if (pos + name_len > buf.size())
            throw FormatError("weights load: truncated name at byte " + std::to_string(pos) +
                              " in " + path);
        std::string name(reinterpret_cast<const char*>(buf.data() + pos), name_len);
        pos += name_len;
        const uint32_t ndim = detail::read_u32_le(buf, pos, path);
        Dims dims(ndim);
        int64_t numel = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            dims[d] = detail::read_u32_le(buf, pos, path);
            numel *= dims[d];
        }
        std::vector<double> data(static_cast<size_t>(numel));
        for (int64_t k = 0; k < numel; ++k) {
            const uint32_t bits = detail::read_u32_le(buf, pos, path);
            float fv;
            std::memcpy(&fv, &bits, 4);
            data[k] = static_cast<double>(fv);
        }
        loaded[name] = {std::move(dims), std::move(data)};
    }
    for (const auto& e : p.named()) {
        auto it = loaded.find(e.name);
        if (it == loaded.end())
            throw FormatError("weights load: missing tensor '" + e.name + "' in " + path);
        if (it->second.first != e.tensor->dims)
            throw FormatError("weights load: shape mismatch for tensor '" + e.name + "' in " + path);
        e.tensor->data = it->second.second;
    }
}

}  // namespace ff
