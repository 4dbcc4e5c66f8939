#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "prune_ast/analysis.hpp"
#include "prune_ast/config.hpp"
#include "prune_ast/frontend.hpp"
#include "prune_ast/tensor.hpp"
#include "prune_ast/weights.hpp"

namespace fixture {

inline prune_ast::Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937& rng, float lo = -1.0f,
                                       float hi = 1.0f) {
    std::uniform_real_distribution<float> u(lo, hi);
    prune_ast::Matrix m(r, c);
    for (float& v : m.data()) v = u(rng);
    return m;
}

/// n_time x 8 grid of uniform values; content covers the first `content_frames` frames.
inline prune_ast::PatchGrid random_grid(std::size_t n_time, std::mt19937& rng, std::size_t content_frames = 0) {
    std::normal_distribution<float> nd(0.0f, 1.0f);
    prune_ast::Matrix m(n_time * prune_ast::kPatchSize, 128);
    for (float& v : m.data()) v = nd(rng);
    prune_ast::MelSpectrogram mel;
    mel.values = std::move(m);
    mel.content_frames = content_frames ? content_frames : n_time * prune_ast::kPatchSize;
    return prune_ast::patchify(mel);
}

inline prune_ast::ModelConfig toy(prune_ast::Aggregation agg = prune_ast::Aggregation::mean_pooling,
                                  std::size_t depth = 6) {
    prune_ast::ModelConfig cfg = prune_ast::ModelConfig::toy();
    cfg.depth = depth;
    cfg.aggregation = agg;
    return cfg;
}

/// Wider sigma than the default so attention is far from uniform.
inline prune_ast::TensorMap toy_tensors(const prune_ast::ModelConfig& cfg, std::uint64_t seed = 7,
                                        double sigma = 0.15) {
    return prune_ast::random_init(cfg, seed, sigma);
}

inline prune_ast::VitWeights toy_weights(const prune_ast::ModelConfig& cfg, std::uint64_t seed = 7,
                                         double sigma = 0.15) {
    return prune_ast::VitWeights::from_tensors(toy_tensors(cfg, seed, sigma), cfg);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("prune_ast_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}


/// Simulates a pruned forward over `means.size()` tokens without a model: every block logs
/// score_fn(block, provenance) for each live token, and each location keeps the TopK by score.
inline prune_ast::SampleRecord synthetic_sample(const std::vector<float>& means, const std::set<std::size_t>& locations,
                                                double kr, std::size_t depth,
                                                const std::function<float(std::size_t, std::size_t)>& score_fn,
                                                const std::string& name = "s") {
    using namespace prune_ast;
    SampleRecord s;
    s.name = name;
    s.locations = locations;
    s.trace.keep_rate = kr;
    const std::size_t n = means.size();
    s.stats.mean = means;
    s.stats.std.assign(n, 0.0f);
    for (std::size_t i = 0; i < n; ++i) s.stats.std[i] = 0.1f * static_cast<float>(i % 7);
    s.stats.time_idx.resize(n);
    s.stats.freq_idx.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        s.stats.time_idx[i] = i / 8;
        s.stats.freq_idx[i] = i % 8;
    }
    s.stats.padding.assign(n, false);
    std::vector<std::size_t> live(n);
    std::iota(live.begin(), live.end(), std::size_t{0});
    for (std::size_t b = 1; b <= depth; ++b) {
        std::vector<float> scores;
        for (std::size_t p : live) scores.push_back(score_fn(b, p));
        std::vector<std::size_t> next = live;
        if (locations.contains(b)) {
            const Selection sel = select_topk(scores, kr);
            PruneStep st;
            st.block = b;
            next.clear();
            for (std::size_t i : sel.retained) {
                next.push_back(live[i]);
                st.retained.push_back(live[i]);
                st.retained_scores.push_back(scores[i]);
            }
            for (std::size_t i : sel.pruned) {
                st.pruned.push_back(live[i]);
                st.pruned_scores.push_back(scores[i]);
            }
            s.trace.steps.push_back(std::move(st));
        }
        for (std::size_t i = 0; i < live.size(); ++i) {
            const bool kept = std::binary_search(next.begin(), next.end(), live[i]);
            s.log.push_back({b, live[i], scores[i], kept});
        }
        live = std::move(next);
    }
    return s;
}

inline prune_ast::ClusterModel integer_clusters() {
    prune_ast::ClusterModel cm;
    cm.centroids = {1, 2, 3, 4, 5};
    cm.boundaries = {1.5, 2.5, 3.5, 4.5};
    cm.shares = {20, 20, 20, 20, 20};
    cm.feature = prune_ast::ClusterFeature::mean;
    return cm;
}

/// Two samples of six tokens; pruning at block 2 only, so G1 = (1, 2).
/// Scores are multiples of 1/64 so the ratios built from them are exact.
inline std::vector<prune_ast::SampleRecord> hand_gamma_log() {
    using namespace prune_ast;
    const std::vector<float> means_a{1, 2, 3, 4, 5, 1}, means_b{5, 4, 3, 2, 1, 3};
    const float a1[] = {6, 13, 3, 19, 16, 6}, b1[] = {26, 6, 13, 3, 10, 6};
    const float a2[] = {8, 12, 4, 18, 17, 6}, b2[] = {22, 8, 14, 4, 10, 6};
    auto make = [](const std::vector<float>& means, const float* s1, const float* s2,
                   std::vector<std::size_t> kept, std::vector<std::size_t> dropped, const char* name) {
        SampleRecord s = synthetic_sample(means, {}, 1.0, 0, {}, name);
        s.locations = {2};
        s.trace.keep_rate = 0.5;
        PruneStep st;
        st.block = 2;
        st.retained = kept;
        st.pruned = dropped;
        s.trace.steps.push_back(st);
        for (std::size_t i = 0; i < 6; ++i) s.log.push_back({1, i, s1[i] / 64.0f, true});
        for (std::size_t i = 0; i < 6; ++i)
            s.log.push_back({2, i, s2[i] / 64.0f, std::find(kept.begin(), kept.end(), i) != kept.end()});
        return s;
    };
    return {make(means_a, a1, a2, {1, 3, 4}, {0, 2, 5}, "a"), make(means_b, b1, b2, {0, 2, 4}, {1, 3, 5}, "b")};
}

}  // namespace fixture
