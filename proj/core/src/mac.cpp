#include "prune_ast/mac.hpp"

#include <cmath>

namespace prune_ast {

double CostReport::total_g_rounded() const noexcept { return std::round(total_g() * 10.0) / 10.0; }

std::vector<std::size_t> token_count_schedule(std::size_t n, double keep_rate,
                                              const std::set<std::size_t>& locations,
                                              std::size_t depth) {
    std::vector<std::size_t> counts;
    counts.reserve(depth);
    for (std::size_t b = 1; b <= depth; ++b) {
        counts.push_back(n);
        if (locations.contains(b)) n = keep_count(n, keep_rate);
    }
    return counts;
}

std::uint64_t attention_macs(std::size_t n, const ModelConfig& cfg) {
    const std::uint64_t nn = n, d = cfg.dim;
    return 3 * nn * d * d + 2 * nn * nn * d + nn * d * d;
}

std::uint64_t mlp_macs(std::size_t n, const ModelConfig& cfg) {
    const std::uint64_t nn = n, d = cfg.dim;
    return 2 * nn * d * (cfg.mlp_ratio * d);
}

std::uint64_t block_macs(std::size_t n, const ModelConfig& cfg) {
    return attention_macs(n, cfg) + mlp_macs(n, cfg);
}

std::uint64_t block_macs(std::size_t n_in, std::size_t n_out, const ModelConfig& cfg) {
    return attention_macs(n_in, cfg) + mlp_macs(n_out, cfg);
}

CostReport total_macs(std::size_t n, double keep_rate, const ModelConfig& cfg,
                      const std::set<std::size_t>& locations) {
    CostReport r;
    r.initial_tokens = n;
    r.keep_rate = keep_rate;
    r.cls_tokens = cfg.aggregation == Aggregation::cls ? 1 : 0;
    r.tokens_in = token_count_schedule(n, keep_rate, locations, cfg.depth);
    for (std::size_t b = 1; b <= cfg.depth; ++b) {
        const std::size_t in = r.tokens_in[b - 1];
        r.tokens_out.push_back(locations.contains(b) ? keep_count(in, keep_rate) : in);
    }
    const std::uint64_t d = cfg.dim;
    r.patch_embed_macs = static_cast<std::uint64_t>(n) * cfg.patch_dim * d;
    for (std::size_t b = 0; b < cfg.depth; ++b) {
        r.block_macs.push_back(
            block_macs(r.tokens_in[b] + r.cls_tokens, r.tokens_out[b] + r.cls_tokens, cfg));
    }
    // Mean pooling charges one accumulate per surviving activation.
    const std::uint64_t pooled = r.cls_tokens ? 0 : static_cast<std::uint64_t>(r.tokens_out.back()) * d;
    r.head_macs = pooled + d * cfg.num_classes;
    r.total_macs = r.patch_embed_macs + r.head_macs;
    for (auto m : r.block_macs) r.total_macs += m;
    return r;
}

}  // namespace prune_ast
