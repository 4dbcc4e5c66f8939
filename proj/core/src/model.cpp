#include "prune_ast/model.hpp"

#include <cmath>

#include "prune_ast/error.hpp"
#include "prune_ast/pruning.hpp"

namespace prune_ast {

TokenState patch_embed(const PatchGrid& grid, const VitWeights& w) {
    const ModelConfig& cfg = w.config;
    const std::size_t n = grid.size();
    if (n == 0) fail(Errc::shape_mismatch, "patch_embed: empty patch grid");
    if (n > cfg.max_tokens) {
        fail(Errc::shape_mismatch, "patch_embed: " + std::to_string(n) +
                                       " patches exceed positional table of " +
                                       std::to_string(cfg.max_tokens));
    }
    if (w.patch_w.rows() != cfg.patch_dim || w.patch_w.cols() != cfg.dim) {
        fail(Errc::shape_mismatch, "patch_embed: weight " + w.patch_w.shape_string());
    }
    Matrix flat(n, cfg.patch_dim);
    for (std::size_t i = 0; i < n; ++i) {
        if (grid.patches[i].size() != cfg.patch_dim) {
            fail(Errc::shape_mismatch, "patch_embed: patch " + std::to_string(i) + " has " +
                                           std::to_string(grid.patches[i].size()) + " values");
        }
        std::copy(grid.patches[i].begin(), grid.patches[i].end(), flat.row(i).begin());
    }
    Matrix proj = add_row_bias(matmul(flat, w.patch_w), w.patch_b);

    TokenState s;
    s.has_cls = cfg.aggregation == Aggregation::cls;
    s.provenance.resize(n);
    const std::size_t offset = s.has_cls ? 1 : 0;
    s.activations = Matrix(n + offset, cfg.dim);
    if (s.has_cls) {
        auto row = s.activations.row(0);
        for (std::size_t c = 0; c < cfg.dim; ++c) row[c] = w.cls_token[c] + w.cls_pos[c];
    }
    for (std::size_t i = 0; i < n; ++i) {
        s.provenance[i] = i;
        auto dst = s.activations.row(i + offset);
        auto src = proj.row(i);
        auto pos = w.pos_embed.row(i);
        for (std::size_t c = 0; c < cfg.dim; ++c) dst[c] = src[c] + pos[c];
    }
    return s;
}

MhsaResult mhsa_forward(const TokenState& s, const BlockWeights& w, const ModelConfig& cfg) {
    const std::size_t d = cfg.dim;
    const std::size_t heads = cfg.heads;
    const std::size_t hd = cfg.head_dim();
    const Matrix& x = s.activations;
    if (x.cols() != d) fail(Errc::shape_mismatch, "mhsa: activations " + x.shape_string());
    if (w.qkv_w.rows() != d || w.qkv_w.cols() != 3 * d) {
        fail(Errc::shape_mismatch, "mhsa: qkv weight " + w.qkv_w.shape_string());
    }
    const std::size_t n = x.rows();

    const Matrix xn = layer_norm(x, w.norm1_w, w.norm1_b, cfg.ln_eps);
    const Matrix qkv = add_row_bias(matmul(xn, w.qkv_w), w.qkv_b);
    const float scale = 1.0f / std::sqrt(static_cast<float>(hd));

    AttentionTensor attn(heads, n);
    Matrix context(n, d);
    Matrix q(n, hd), kt(hd, n), v(n, hd);
    for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < hd; ++c) {
                q(r, c) = qkv(r, h * hd + c);
                kt(c, r) = qkv(r, d + h * hd + c);
                v(r, c) = qkv(r, 2 * d + h * hd + c);
            }
        }
        const Matrix probs = softmax_rows(matmul(q, kt), scale);
        const Matrix out = matmul(probs, v);
        std::copy(probs.data().begin(), probs.data().end(), attn.head_data(h).begin());
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < hd; ++c) context(r, h * hd + c) = out(r, c);
    }
    const Matrix projected = add_row_bias(matmul(context, w.proj_w), w.proj_b);

    MhsaResult result;
    result.state.provenance = s.provenance;
    result.state.has_cls = s.has_cls;
    result.state.activations = add(x, projected);
    result.attention = std::move(attn);
    return result;
}

std::vector<float> attention_scores_mean_pooling(const AttentionTensor& a) {
    const std::size_t n = a.tokens();
    std::vector<double> acc(n, 0.0);
    for (std::size_t h = 0; h < a.heads(); ++h)
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < n; ++c) acc[c] += a.at(h, r, c);
    const double denom = static_cast<double>(a.heads()) * static_cast<double>(n);
    std::vector<float> scores(n);
    for (std::size_t c = 0; c < n; ++c) scores[c] = static_cast<float>(acc[c] / denom);
    return scores;
}

std::vector<float> attention_scores_cls(const AttentionTensor& a) {
    const std::size_t n = a.tokens();
    if (n < 2) fail(Errc::invalid_argument, "CLS attention scores need CLS plus at least one token");
    std::vector<double> acc(n - 1, 0.0);
    for (std::size_t h = 0; h < a.heads(); ++h)
        for (std::size_t c = 1; c < n; ++c) acc[c - 1] += a.at(h, 0, c);
    std::vector<float> scores(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        scores[i] = static_cast<float>(acc[i] / static_cast<double>(a.heads()));
    }
    return scores;
}

std::vector<float> attention_scores(const AttentionTensor& a, bool has_cls) {
    return has_cls ? attention_scores_cls(a) : attention_scores_mean_pooling(a);
}

Matrix mlp_forward(const Matrix& x, const BlockWeights& w, const ModelConfig& cfg) {
    const Matrix xn = layer_norm(x, w.norm2_w, w.norm2_b, cfg.ln_eps);
    const Matrix hidden = gelu(add_row_bias(matmul(xn, w.fc1_w), w.fc1_b));
    return add(x, add_row_bias(matmul(hidden, w.fc2_w), w.fc2_b));
}

BlockOutput block_forward(const TokenState& s, const BlockWeights& w, const ModelConfig& cfg,
                          std::size_t block_index, const PruneHook& hook) {
    MhsaResult attn = mhsa_forward(s, w, cfg);
    BlockOutput out;
    out.record.block = block_index;
    out.record.scores = attention_scores(attn.attention, attn.state.has_cls);
    out.record.attention = std::move(attn.attention);

    TokenState state = std::move(attn.state);
    if (hook) {
        if (auto keep = hook(state, out.record)) state = apply_prune(state, *keep);
    }
    state.activations = mlp_forward(state.activations, w, cfg);
    out.state = std::move(state);
    return out;
}

std::vector<float> aggregate(const TokenState& s, Aggregation mode) {
    const bool want_cls = mode == Aggregation::cls;
    if (want_cls != s.has_cls) {
        fail(Errc::invalid_argument, std::string("aggregate: mode '") + std::string(to_string(mode)) +
                                         "' does not match token state (" +
                                         (s.has_cls ? "has CLS" : "no CLS") + ")");
    }
    const Matrix& x = s.activations;
    std::vector<float> feature(x.cols(), 0.0f);
    if (want_cls) {
        std::copy(x.row(0).begin(), x.row(0).end(), feature.begin());
        return feature;
    }
    if (x.rows() == 0) fail(Errc::invalid_argument, "aggregate: no tokens to pool");
    std::vector<double> acc(x.cols(), 0.0);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto row = x.row(r);
        for (std::size_t c = 0; c < x.cols(); ++c) acc[c] += row[c];
    }
    for (std::size_t c = 0; c < x.cols(); ++c) {
        feature[c] = static_cast<float>(acc[c] / static_cast<double>(x.rows()));
    }
    return feature;
}

std::vector<float> classify_head(std::span<const float> feature, const VitWeights& w) {
    Matrix f(1, feature.size(), std::vector<float>(feature.begin(), feature.end()));
    Matrix logits = add_row_bias(matmul(f, w.head_w), w.head_b);
    return {logits.data().begin(), logits.data().end()};
}

}  // namespace prune_ast
