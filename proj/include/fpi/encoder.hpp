#pragma once

#include "fpi/ops.hpp"
#include "fpi/rng.hpp"
#include "fpi/tensor.hpp"

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace fpi {

/// Patch-token transformer encoder geometry.
struct EncoderConfig {
    int patch_size = 8;
    int embed_dim = 64;
    int depth = 4;
    int heads = 4;
    double mlp_ratio = 4.0;
    int input_side = 160;

    int grid() const { return input_side / patch_size; }
    int tokens() const { return grid() * grid(); }

    void validate() const {
        if (patch_size <= 0 || embed_dim <= 0 || depth <= 0 || heads <= 0 || input_side <= 0)
            throw ShapeError("encoder config: all dimensions must be positive");
        if (input_side % patch_size != 0)
            throw ShapeError("encoder config: input side " + std::to_string(input_side) +
                             " not divisible by patch size " + std::to_string(patch_size));
        if (embed_dim % heads != 0)
            throw ShapeError("encoder config: embed dim not divisible by heads");
    }
};

/// Spatial grid of token features: values laid out [channels, grid_h, grid_w].
template <typename T>
struct FeatureMap {
    int grid_h = 0;
    int grid_w = 0;
    int channels = 0;
    Tensor<T> values;
};

/// [C,G,G] map -> [G*G, C] token matrix (row-major over the grid).
template <typename T>
Tensor<T> flatten_tokens(const Tensor<T>& fmap) {
    if (fmap.ndim() != 3) throw ShapeError("flatten_tokens expects [C,G,G]");
    int c = fmap.dim(0), n = fmap.dim(1) * fmap.dim(2);
    return ops::transpose(ops::reshape(fmap, {c, n}));
}

/// Inverse of flatten_tokens.
template <typename T>
Tensor<T> inverse_flatten(const Tensor<T>& tokens, int grid_h, int grid_w) {
    if (tokens.ndim() != 2 || tokens.dim(0) != grid_h * grid_w)
        throw ShapeError("inverse_flatten: token count != grid_h*grid_w");
    int c = tokens.dim(1);
    return ops::reshape(ops::transpose(tokens), {c, grid_h, grid_w});
}

template <typename T>
struct BlockWeights {
    Tensor<T> ln1_g, ln1_b;
    Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor<T> ln2_g, ln2_b;
    Tensor<T> w1, b1, w2, b2;
};

/// One encoder's parameter set. Tensors are shared handles, so a twin pair
/// can alias everything but its position table.
template <typename T>
struct EncoderWeights {
    EncoderConfig cfg;
    Tensor<T> patch_w;  // [D, 3, p, p]
    Tensor<T> patch_b;  // [D]
    Tensor<T> pos;      // [tokens, D]
    std::vector<BlockWeights<T>> blocks;
    Tensor<T> lnf_g, lnf_b;

    /// Named parameters in a fixed registration order.
    void collect(const std::string& prefix,
                 std::vector<std::pair<std::string, Tensor<T>>>& out) const {
        out.emplace_back(prefix + ".patch_w", patch_w);
        out.emplace_back(prefix + ".patch_b", patch_b);
        out.emplace_back(prefix + ".pos", pos);
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const auto& b = blocks[i];
            std::string p = prefix + ".block" + std::to_string(i);
            out.emplace_back(p + ".ln1_g", b.ln1_g);
            out.emplace_back(p + ".ln1_b", b.ln1_b);
            out.emplace_back(p + ".wq", b.wq);
            out.emplace_back(p + ".bq", b.bq);
            out.emplace_back(p + ".wk", b.wk);
            out.emplace_back(p + ".bk", b.bk);
            out.emplace_back(p + ".wv", b.wv);
            out.emplace_back(p + ".bv", b.bv);
            out.emplace_back(p + ".wo", b.wo);
            out.emplace_back(p + ".bo", b.bo);
            out.emplace_back(p + ".ln2_g", b.ln2_g);
            out.emplace_back(p + ".ln2_b", b.ln2_b);
            out.emplace_back(p + ".w1", b.w1);
            out.emplace_back(p + ".b1", b.b1);
            out.emplace_back(p + ".w2", b.w2);
            out.emplace_back(p + ".b2", b.b2);
        }
        out.emplace_back(prefix + ".lnf_g", lnf_g);
        out.emplace_back(prefix + ".lnf_b", lnf_b);
    }
};

namespace detail {

template <typename T>
Tensor<T> trunc_normal_param(Shape shape, Pcg32& rng, double sigma = 0.02) {
    std::size_t n = shape_numel(shape);
    std::vector<T> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<T>(rng.trunc_normal(0.0, sigma));
    return Tensor<T>::from(std::move(shape), std::move(data), true);
}

}  // namespace detail

/// Fresh encoder weights. Projections and position table use a truncated
/// normal (sigma 0.02); biases and shifts start at zero, gains at one.
template <typename T>
EncoderWeights<T> init_encoder(const EncoderConfig& cfg, Pcg32& rng) {
    cfg.validate();
    EncoderWeights<T> w;
    w.cfg = cfg;
    int d = cfg.embed_dim;
    int hidden = static_cast<int>(d * cfg.mlp_ratio);
    w.patch_w = detail::trunc_normal_param<T>({d, 3, cfg.patch_size, cfg.patch_size}, rng);
    w.patch_b = Tensor<T>::zeros({d}, true);
    w.pos = detail::trunc_normal_param<T>({cfg.tokens(), d}, rng);
    for (int i = 0; i < cfg.depth; ++i) {
        BlockWeights<T> b;
        b.ln1_g = Tensor<T>::filled({d}, T(1), true);
        b.ln1_b = Tensor<T>::zeros({d}, true);
        b.wq = detail::trunc_normal_param<T>({d, d}, rng);
        b.bq = Tensor<T>::zeros({d}, true);
        b.wk = detail::trunc_normal_param<T>({d, d}, rng);
        b.bk = Tensor<T>::zeros({d}, true);
        b.wv = detail::trunc_normal_param<T>({d, d}, rng);
        b.bv = Tensor<T>::zeros({d}, true);
        b.wo = detail::trunc_normal_param<T>({d, d}, rng);
        b.bo = Tensor<T>::zeros({d}, true);
        b.ln2_g = Tensor<T>::filled({d}, T(1), true);
        b.ln2_b = Tensor<T>::zeros({d}, true);
        b.w1 = detail::trunc_normal_param<T>({d, hidden}, rng);
        b.b1 = Tensor<T>::zeros({hidden}, true);
        b.w2 = detail::trunc_normal_param<T>({hidden, d}, rng);
        b.b2 = Tensor<T>::zeros({d}, true);
        w.blocks.push_back(std::move(b));
    }
    w.lnf_g = Tensor<T>::filled({d}, T(1), true);
    w.lnf_b = Tensor<T>::zeros({d}, true);
    return w;
}

/// Query/search encoder pair. share=false: two fully independent weight sets.
/// share=true: every tensor aliased between the two except the position
/// tables, which are sized per input side.
template <typename T>
std::pair<EncoderWeights<T>, EncoderWeights<T>> make_twin(EncoderConfig query_cfg,
                                                          EncoderConfig search_cfg,
                                                          bool share, Pcg32& rng) {
    query_cfg.validate();
    search_cfg.validate();
    EncoderWeights<T> q = init_encoder<T>(query_cfg, rng);
    if (!share) {
        EncoderWeights<T> s = init_encoder<T>(search_cfg, rng);
        return {std::move(q), std::move(s)};
    }
    EncoderWeights<T> s = q;  // aliases every tensor handle
    s.cfg = search_cfg;
    s.pos = detail::trunc_normal_param<T>({search_cfg.tokens(), search_cfg.embed_dim}, rng);
    return {std::move(q), std::move(s)};
}

/// Full forward pass: patch embedding, learned position embedding, pre-norm
/// self-attention blocks, final norm, inverse flatten back to a grid.
template <typename T>
FeatureMap<T> encode(const Tensor<T>& image, const EncoderWeights<T>& w) {
    const auto& cfg = w.cfg;
    if (image.ndim() != 3 || image.dim(0) != 3)
        throw ShapeError("encode expects image [3,S,S]");
    if (image.dim(1) != cfg.input_side || image.dim(2) != cfg.input_side)
        throw ShapeError("encode: image side " + std::to_string(image.dim(1)) +
                         " != configured side " + std::to_string(cfg.input_side));

    int g = cfg.grid();
    int d = cfg.embed_dim;
    int n = cfg.tokens();
    int dh = d / cfg.heads;
    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor<T> grid_feats = ops::conv2d(image, w.patch_w, &w.patch_b, cfg.patch_size, 0);
    Tensor<T> x = ops::add(flatten_tokens(grid_feats), w.pos);  // [n, d]

    for (const auto& b : w.blocks) {
        Tensor<T> h = ops::layernorm_rows(x, b.ln1_g, b.ln1_b);
        Tensor<T> q = ops::linear(h, b.wq, b.bq);
        Tensor<T> k = ops::linear(h, b.wk, b.bk);
        Tensor<T> v = ops::linear(h, b.wv, b.bv);
        std::vector<Tensor<T>> heads_out;
        heads_out.reserve(static_cast<std::size_t>(cfg.heads));
        for (int hd = 0; hd < cfg.heads; ++hd) {
            Tensor<T> qh = ops::slice_cols(q, hd * dh, dh);
            Tensor<T> kh = ops::slice_cols(k, hd * dh, dh);
            Tensor<T> vh = ops::slice_cols(v, hd * dh, dh);
            Tensor<T> att = ops::softmax_rows(ops::scale(ops::matmul(qh, ops::transpose(kh)), attn_scale));
            heads_out.push_back(ops::matmul(att, vh));
        }
        Tensor<T> attn_out = ops::linear(ops::concat_cols(heads_out), b.wo, b.bo);
        x = ops::add(x, attn_out);

        Tensor<T> h2 = ops::layernorm_rows(x, b.ln2_g, b.ln2_b);
        Tensor<T> mlp = ops::linear(ops::gelu(ops::linear(h2, b.w1, b.b1)), b.w2, b.b2);
        x = ops::add(x, mlp);
    }
    x = ops::layernorm_rows(x, w.lnf_g, w.lnf_b);
    (void)n;

    FeatureMap<T> fm;
    fm.grid_h = g;
    fm.grid_w = g;
    fm.channels = d;
    fm.values = inverse_flatten(x, g, g);
    return fm;
}

}  // namespace fpi
