#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prune_ast/cluster.hpp"
#include "prune_ast/frontend.hpp"
#include "prune_ast/model.hpp"

namespace prune_ast {

enum class PruneMetric { attn_mp, attn_cls, intensity, variation };

std::string_view to_string(PruneMetric m) noexcept;
PruneMetric parse_metric(std::string_view s);

struct PruneConfig {
    /// 1-based block indices; pruning happens between MHSA and MLP of each.
    std::set<std::size_t> locations = {4, 7, 10};
    double keep_rate = 1.0;
    PruneMetric metric = PruneMetric::attn_mp;

    /// Throws Error(config) naming every violated field.
    void validate(const ModelConfig& model) const;
};

struct PruneStep {
    std::size_t block = 0;
    std::vector<std::size_t> retained;  // provenance ids
    std::vector<float> retained_scores;
    std::vector<std::size_t> pruned;
    std::vector<float> pruned_scores;
};

struct PruneTrace {
    PruneMetric metric = PruneMetric::attn_mp;
    double keep_rate = 1.0;
    std::vector<PruneStep> steps;

    const PruneStep* step_at(std::size_t block) const noexcept;
};

struct KeepRateSchedule {
    std::size_t start_epoch = 0;
    std::size_t duration_epochs = 0;
    double target_kr = 1.0;
};

/// ceil(n * kr), with a 1e-9 slack so products like 5 * 0.6 stay exact. Never below 1.
std::size_t keep_count(std::size_t n, double keep_rate);

/// One score per current non-CLS token. `attn` is required for attention metrics,
/// `stats` (indexed by provenance) for intensity and variation.
std::vector<float> score_tokens(const TokenState& state, const AttentionRecord* attn,
                                const PatchStats* stats, PruneMetric metric);

struct Selection {
    std::vector<std::size_t> retained;  // ascending token indices
    std::vector<std::size_t> pruned;    // ascending token indices
};
Selection select_topk(std::span<const float> scores, double keep_rate);

/// Keeps the listed token indices (ascending, into the non-CLS set); CLS is untouched.
TokenState apply_prune(const TokenState& state, std::span<const std::size_t> retained);

double keep_rate_at_epoch(const KeepRateSchedule& s, std::size_t epoch);

enum class DiscardGroup { low, high };

std::string_view to_string(DiscardGroup g) noexcept;
DiscardGroup parse_discard_group(std::string_view s);
/// L = {C1, C2}, H = {C4, C5}.
bool in_discard_group(std::size_t cluster, DiscardGroup g) noexcept;

/// Drops every token whose patch-mean cluster falls in the group.
TokenState discard_group(const TokenState& state, const ClusterModel& cm, const PatchStats& stats,
                         DiscardGroup group);

}  // namespace prune_ast
