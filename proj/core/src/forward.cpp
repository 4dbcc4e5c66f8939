#include "prune_ast/forward.hpp"

#include <algorithm>

#include "prune_ast/error.hpp"

namespace prune_ast {

ForwardResult classify_forward(const PatchGrid& grid, const VitWeights& w,
                               const PruneConfig& prune, const ForwardOptions& options) {
    const ModelConfig& cfg = w.config;
    prune.validate(cfg);
    if (options.discard && (options.discard->block < 1 || options.discard->block > cfg.depth)) {
        fail(Errc::config, "discard block " + std::to_string(options.discard->block) +
                               " outside [1, " + std::to_string(cfg.depth) + "]");
    }

    const PatchStats stats = patch_stats(grid);
    ForwardResult result;
    result.trace.metric = prune.metric;
    result.trace.keep_rate = prune.keep_rate;

    TokenState state = patch_embed(grid, w);
    for (std::size_t b = 1; b <= cfg.depth; ++b) {
        result.tokens_per_block.push_back(state.token_count());
        PruneHook hook;
        std::optional<PruneStep> step;
        if (prune.locations.contains(b)) {
            hook = [&](const TokenState& s, const AttentionRecord& rec)
                -> std::optional<std::vector<std::size_t>> {
                const auto scores = score_tokens(s, &rec, &stats, prune.metric);
                Selection sel = select_topk(scores, prune.keep_rate);
                PruneStep st;
                st.block = b;
                for (std::size_t i : sel.retained) {
                    st.retained.push_back(s.provenance[i]);
                    st.retained_scores.push_back(scores[i]);
                }
                for (std::size_t i : sel.pruned) {
                    st.pruned.push_back(s.provenance[i]);
                    st.pruned_scores.push_back(scores[i]);
                }
                step = std::move(st);
                return std::move(sel.retained);
            };
        }
        const std::vector<std::size_t> before = state.provenance;
        BlockOutput out = block_forward(state, w.blocks[b - 1], cfg, b, hook);
        state = std::move(out.state);

        if (options.discard && options.discard->block == b) {
            const auto& d = *options.discard;
            TokenState kept = discard_group(state, d.clusters, stats, d.group);
            DiscardReport rep;
            rep.block = b;
            rep.group = d.group;
            rep.survivors = kept.provenance;
            std::set_difference(state.provenance.begin(), state.provenance.end(),
                                kept.provenance.begin(), kept.provenance.end(),
                                std::back_inserter(rep.removed));
            result.discard = std::move(rep);
            state = std::move(kept);
        }

        if (!all_finite(state.activations)) {
            fail(Errc::numerical, "non-finite activations after block " + std::to_string(b));
        }

        // Survivors are a sorted subset of `before`; walk both in step.
        std::size_t j = 0;
        for (std::size_t i = 0; i < before.size(); ++i) {
            const bool kept = j < state.provenance.size() && state.provenance[j] == before[i];
            if (kept) ++j;
            result.log.push_back({b, before[i], out.record.scores[i], kept});
        }
        if (step) result.trace.steps.push_back(std::move(*step));
        if (options.keep_attention) result.records.push_back(std::move(out.record));
    }

    const Matrix normed = layer_norm(state.activations, w.norm_w, w.norm_b, cfg.ln_eps);
    TokenState final_state{normed, state.provenance, state.has_cls};
    result.logits = classify_head(aggregate(final_state, cfg.aggregation), w);
    return result;
}

}  // namespace prune_ast
