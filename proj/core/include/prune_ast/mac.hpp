#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "prune_ast/config.hpp"
#include "prune_ast/pruning.hpp"

namespace prune_ast {

/// Dense multiply-accumulates only; biases, norms, softmax and GELU are free.
struct CostReport {
    std::size_t initial_tokens = 0;
    double keep_rate = 1.0;
    /// Non-CLS tokens entering each block (attention side).
    std::vector<std::size_t> tokens_in;
    /// Non-CLS tokens leaving each block's pruning step (MLP side).
    std::vector<std::size_t> tokens_out;
    std::size_t cls_tokens = 0;
    std::vector<std::uint64_t> block_macs;
    std::uint64_t patch_embed_macs = 0;
    std::uint64_t head_macs = 0;
    std::uint64_t total_macs = 0;

    double total_g() const noexcept { return static_cast<double>(total_macs) / 1e9; }
    /// total_g rounded to one decimal.
    double total_g_rounded() const noexcept;
};

/// Tokens entering each block: N up to and including the first location, then
/// n <- ceil(n * kr) after every location.
std::vector<std::size_t> token_count_schedule(std::size_t n, double keep_rate,
                                              const std::set<std::size_t>& locations,
                                              std::size_t depth);

/// QKV 3nD^2 + logits n^2 D + AV n^2 D + output nD^2.
std::uint64_t attention_macs(std::size_t n, const ModelConfig& cfg);
/// 2 n D (mlp_ratio D).
std::uint64_t mlp_macs(std::size_t n, const ModelConfig& cfg);
/// Unpruned block: attention_macs(n) + mlp_macs(n).
std::uint64_t block_macs(std::size_t n, const ModelConfig& cfg);
/// Pruning block: attention on n_in tokens, MLP on the n_out survivors.
std::uint64_t block_macs(std::size_t n_in, std::size_t n_out, const ModelConfig& cfg);

CostReport total_macs(std::size_t n, double keep_rate, const ModelConfig& cfg,
                      const std::set<std::size_t>& locations);
inline CostReport total_macs(std::size_t n, const ModelConfig& cfg, const PruneConfig& prune) {
    return total_macs(n, prune.keep_rate, cfg, prune.locations);
}

}  // namespace prune_ast
