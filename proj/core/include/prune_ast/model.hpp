#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "prune_ast/config.hpp"
#include "prune_ast/frontend.hpp"
#include "prune_ast/tensor.hpp"
#include "prune_ast/weights.hpp"

namespace prune_ast {

/// Activations plus the original patch index of every non-CLS row.
/// With a CLS token, activation row 0 is CLS and row r+1 belongs to provenance[r].
struct TokenState {
    Matrix activations;
    std::vector<std::size_t> provenance;
    bool has_cls = false;

    std::size_t token_count() const noexcept { return provenance.size(); }
    std::size_t row_of(std::size_t token) const noexcept { return token + (has_cls ? 1 : 0); }
};

/// H x n x n attention probabilities, n counting CLS when present.
class AttentionTensor {
public:
    AttentionTensor() = default;
    AttentionTensor(std::size_t heads, std::size_t n)
        : heads_(heads), n_(n), data_(heads * n * n, 0.0f) {}

    std::size_t heads() const noexcept { return heads_; }
    std::size_t tokens() const noexcept { return n_; }

    float& at(std::size_t h, std::size_t row, std::size_t col) noexcept {
        return data_[(h * n_ + row) * n_ + col];
    }
    float at(std::size_t h, std::size_t row, std::size_t col) const noexcept {
        return data_[(h * n_ + row) * n_ + col];
    }

    std::span<float> head_data(std::size_t h) noexcept {
        return {data_.data() + h * n_ * n_, n_ * n_};
    }

private:
    std::size_t heads_ = 0;
    std::size_t n_ = 0;
    std::vector<float> data_;
};

/// Per-block importance: one score per non-CLS token, aligned with TokenState::provenance.
struct AttentionRecord {
    std::size_t block = 0;  // 1-based
    std::vector<float> scores;
    AttentionTensor attention;
};

TokenState patch_embed(const PatchGrid& grid, const VitWeights& w);

/// x + proj(MHSA(LN1(x))) together with the block's attention tensor.
struct MhsaResult {
    TokenState state;
    AttentionTensor attention;
};
MhsaResult mhsa_forward(const TokenState& s, const BlockWeights& w, const ModelConfig& cfg);

/// a_i = 1/(H*N') sum_h sum_n A[h, n, i] over the current tokens.
std::vector<float> attention_scores_mean_pooling(const AttentionTensor& a);
/// a_i = 1/H sum_h A[h, 0, i] for i >= 1; CLS itself is excluded.
std::vector<float> attention_scores_cls(const AttentionTensor& a);
/// Dispatches on state.has_cls.
std::vector<float> attention_scores(const AttentionTensor& a, bool has_cls);

/// Called between the attention residual and the MLP. Returns the token indices
/// (into the current non-CLS set) to keep, or nullopt to keep everything.
using PruneHook = std::function<std::optional<std::vector<std::size_t>>(const TokenState&,
                                                                        const AttentionRecord&)>;

struct BlockOutput {
    TokenState state;
    AttentionRecord record;
};
BlockOutput block_forward(const TokenState& s, const BlockWeights& w, const ModelConfig& cfg,
                          std::size_t block_index, const PruneHook& hook);

Matrix mlp_forward(const Matrix& x, const BlockWeights& w, const ModelConfig& cfg);

std::vector<float> aggregate(const TokenState& s, Aggregation mode);

std::vector<float> classify_head(std::span<const float> feature, const VitWeights& w);

}  // namespace prune_ast
