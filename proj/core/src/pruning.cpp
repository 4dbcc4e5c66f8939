#include "prune_ast/pruning.hpp"

#include <algorithm>
#include <cmath>

#include "prune_ast/error.hpp"

namespace prune_ast {

std::string_view to_string(PruneMetric m) noexcept {
    switch (m) {
        case PruneMetric::attn_mp: return "attn-mp";
        case PruneMetric::attn_cls: return "attn-cls";
        case PruneMetric::intensity: return "intensity";
        case PruneMetric::variation: return "variation";
    }
    return "attn-mp";
}

PruneMetric parse_metric(std::string_view s) {
    if (s == "attn-mp") return PruneMetric::attn_mp;
    if (s == "attn-cls") return PruneMetric::attn_cls;
    if (s == "intensity" || s == "mean") return PruneMetric::intensity;
    if (s == "variation" || s == "std") return PruneMetric::variation;
    fail(Errc::config, "metric must be one of attn-mp, attn-cls, intensity, variation; got '" +
                           std::string(s) + "'");
}

void PruneConfig::validate(const ModelConfig& model) const {
    std::vector<std::string> problems;
    for (std::size_t b : locations) {
        if (b < 1 || b > model.depth) {
            problems.push_back("prune.locations: block " + std::to_string(b) + " outside [1, " +
                               std::to_string(model.depth) + "]");
        }
    }
    if (!(keep_rate > 0.0 && keep_rate <= 1.0)) {
        problems.push_back("prune.keep_rate must be in (0, 1]");
    }
    if (metric == PruneMetric::attn_cls && model.aggregation != Aggregation::cls) {
        problems.emplace_back("prune.metric attn-cls requires model.aggregation cls");
    }
    if (metric == PruneMetric::attn_mp && model.aggregation != Aggregation::mean_pooling) {
        problems.emplace_back("prune.metric attn-mp requires model.aggregation mean");
    }
    if (problems.empty()) return;
    std::string msg = "invalid prune config:";
    for (const auto& p : problems) msg += "\n  " + p;
    fail(Errc::config, msg);
}

const PruneStep* PruneTrace::step_at(std::size_t block) const noexcept {
    for (const auto& s : steps)
        if (s.block == block) return &s;
    return nullptr;
}

std::size_t keep_count(std::size_t n, double keep_rate) {
    const auto k = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * keep_rate - 1e-9));
    return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(n, 1));
}

std::vector<float> score_tokens(const TokenState& state, const AttentionRecord* attn,
                                const PatchStats* stats, PruneMetric metric) {
    switch (metric) {
        case PruneMetric::attn_mp:
        case PruneMetric::attn_cls: {
            if (!attn) {
                fail(Errc::invalid_argument, "score_tokens: metric " + std::string(to_string(metric)) +
                                                 " needs an attention record");
            }
            const bool need_cls = metric == PruneMetric::attn_cls;
            if (need_cls != state.has_cls) {
                fail(Errc::invalid_argument, "score_tokens: metric " + std::string(to_string(metric)) +
                                                 (need_cls ? " needs" : " forbids") + " a CLS token");
            }
            // Recompute rather than trust record.scores so the metric is explicit.
            std::vector<float> s = need_cls ? attention_scores_cls(attn->attention)
                                            : attention_scores_mean_pooling(attn->attention);
            if (s.size() != state.token_count()) {
                fail(Errc::shape_mismatch, "score_tokens: attention covers " +
                                               std::to_string(s.size()) + " tokens, state has " +
                                               std::to_string(state.token_count()));
            }
            return s;
        }
        case PruneMetric::intensity:
        case PruneMetric::variation: {
            if (!stats) {
                fail(Errc::invalid_argument, "score_tokens: metric " + std::string(to_string(metric)) +
                                                 " needs patch statistics");
            }
            const auto& src = metric == PruneMetric::intensity ? stats->mean : stats->std;
            std::vector<float> s(state.token_count());
            for (std::size_t i = 0; i < s.size(); ++i) {
                const std::size_t p = state.provenance[i];
                if (p >= src.size()) {
                    fail(Errc::out_of_range, "score_tokens: no statistics for patch " + std::to_string(p));
                }
                s[i] = src[p];
            }
            return s;
        }
    }
    fail(Errc::invalid_argument, "score_tokens: unknown metric");
}

Selection select_topk(std::span<const float> scores, double keep_rate) {
    if (scores.empty()) fail(Errc::invalid_argument, "select_topk: empty token set");
    if (!(keep_rate > 0.0 && keep_rate <= 1.0)) {
        fail(Errc::out_of_range, "select_topk: keep rate must be in (0, 1]");
    }
    Selection sel;
    sel.retained = topk_indices(scores, keep_count(scores.size(), keep_rate));
    std::size_t next = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (next < sel.retained.size() && sel.retained[next] == i) {
            ++next;
        } else {
            sel.pruned.push_back(i);
        }
    }
    return sel;
}

TokenState apply_prune(const TokenState& state, std::span<const std::size_t> retained) {
    const std::size_t n = state.token_count();
    for (std::size_t i = 0; i < retained.size(); ++i) {
        if (retained[i] >= n) {
            fail(Errc::out_of_range, "apply_prune: token " + std::to_string(retained[i]) +
                                         " out of range for " + std::to_string(n) + " tokens");
        }
        if (i > 0 && retained[i] <= retained[i - 1]) {
            fail(Errc::invalid_argument, "apply_prune: retained indices must be strictly increasing");
        }
    }
    std::vector<std::size_t> rows;
    rows.reserve(retained.size() + 1);
    if (state.has_cls) rows.push_back(0);
    TokenState out;
    out.has_cls = state.has_cls;
    for (std::size_t t : retained) {
        rows.push_back(state.row_of(t));
        out.provenance.push_back(state.provenance[t]);
    }
    out.activations = gather_rows(state.activations, rows);
    return out;
}

double keep_rate_at_epoch(const KeepRateSchedule& s, std::size_t epoch) {
    if (epoch < s.start_epoch) return 1.0;
    if (epoch >= s.start_epoch + s.duration_epochs) return s.target_kr;
    const double t = static_cast<double>(epoch - s.start_epoch) / static_cast<double>(s.duration_epochs);
    return 1.0 - (1.0 - s.target_kr) * t;
}

std::string_view to_string(DiscardGroup g) noexcept { return g == DiscardGroup::low ? "L" : "H"; }

DiscardGroup parse_discard_group(std::string_view s) {
    if (s == "L" || s == "l" || s == "low") return DiscardGroup::low;
    if (s == "H" || s == "h" || s == "high") return DiscardGroup::high;
    fail(Errc::config, "group must be L or H, got '" + std::string(s) + "'");
}

bool in_discard_group(std::size_t cluster, DiscardGroup g) noexcept {
    return g == DiscardGroup::low ? (cluster == 1 || cluster == 2) : (cluster == 4 || cluster == 5);
}

TokenState discard_group(const TokenState& state, const ClusterModel& cm, const PatchStats& stats,
                         DiscardGroup group) {
    if (cm.feature != ClusterFeature::mean) {
        fail(Errc::invalid_argument, "discard_group: cluster model must be fitted on intensity");
    }
    if (cm.k() != kDefaultClusters) {
        fail(Errc::invalid_argument, "discard_group: expects a 5-cluster model");
    }
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < state.token_count(); ++i) {
        const std::size_t p = state.provenance[i];
        if (p >= stats.size()) {
            fail(Errc::out_of_range, "discard_group: no statistics for patch " + std::to_string(p));
        }
        if (!in_discard_group(assign_cluster(cm, stats.mean[p]), group)) keep.push_back(i);
    }
    if (keep.empty()) {
        fail(Errc::insufficient_data, "discard_group: every token belongs to group " +
                                          std::string(to_string(group)));
    }
    return apply_prune(state, keep);
}

}  // namespace prune_ast
