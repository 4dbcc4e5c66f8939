#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "prune_ast/cluster.hpp"
#include "prune_ast/frontend.hpp"
#include "prune_ast/model.hpp"
#include "prune_ast/pruning.hpp"

namespace prune_ast {

/// One row per token per block: the token's attention score at that block and whether
/// it survived the block (0 when a pruning step or group discard removed it there).
struct AttentionLogEntry {
    std::size_t block = 0;
    std::size_t provenance = 0;
    float score = 0.0f;
    bool retained = true;
};

using AttentionLog = std::vector<AttentionLogEntry>;

struct DiscardSpec {
    std::size_t block = 0;  // applied after this block's MLP
    DiscardGroup group = DiscardGroup::low;
    ClusterModel clusters;
};

struct DiscardReport {
    std::size_t block = 0;
    DiscardGroup group = DiscardGroup::low;
    std::vector<std::size_t> removed;
    std::vector<std::size_t> survivors;
};

struct ForwardOptions {
    std::optional<DiscardSpec> discard;
    /// Keep each block's full attention tensor in the result.
    bool keep_attention = false;
};

struct ForwardResult {
    std::vector<float> logits;
    PruneTrace trace;
    AttentionLog log;
    std::optional<DiscardReport> discard;
    /// Non-CLS tokens entering each block.
    std::vector<std::size_t> tokens_per_block;
    std::vector<AttentionRecord> records;
};

/// patch_embed -> blocks (TopK pruning at the configured locations) -> final LN ->
/// aggregate -> head.
ForwardResult classify_forward(const PatchGrid& grid, const VitWeights& w,
                               const PruneConfig& prune, const ForwardOptions& options = {});

}  // namespace prune_ast
