#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prune_ast/cluster.hpp"
#include "prune_ast/forward.hpp"
#include "prune_ast/frontend.hpp"
#include "prune_ast/pruning.hpp"

namespace prune_ast {

/// Everything the analyses need from one traced input.
struct SampleRecord {
    std::string name;
    PatchStats stats;
    AttentionLog log;
    PruneTrace trace;
    std::set<std::size_t> locations;
};

/// Cluster id (1-based) of a patch under the model's feature.
std::size_t patch_cluster(const ClusterModel& cm, const PatchStats& stats, std::size_t patch);

/// Pools every input patch's feature across samples and fits the 5-cluster model.
ClusterModel fit_patch_clusters(std::span<const SampleRecord> samples, ClusterFeature feature,
                                bool exclude_padding = false);

/// Ordered-pair concordance between cluster ids and scores:
/// (i, j) is concordant iff (C_i <= C_j and a_i <= a_j) or (C_i > C_j and a_i > a_j);
/// tau = (#concordant - #discordant) / (n (n - 1)). O(n log n).
double kendall_tau_clustered(std::span<const std::size_t> clusters, std::span<const float> scores);

struct CorrelationReport {
    /// (block, tau averaged over samples); blocks with no usable sample are absent.
    std::vector<std::pair<std::size_t, double>> per_block;
    double average = 0.0;
};

CorrelationReport tau_report(std::span<const SampleRecord> samples, const ClusterModel& cm);

/// Consecutive block ranges ending at each pruning location: {4,7,10} -> (1..4), (5..7), (8..10).
struct PruneGroup {
    std::size_t index = 0;  // 1-based
    std::size_t pruning_block = 0;
    std::vector<std::size_t> blocks;
};
std::vector<PruneGroup> pruning_groups(const std::set<std::size_t>& locations);

/// E[score at b of tokens retained at the group's pruning block, in cluster i] over
/// E[score at b of tokens pruned there]; expectations pool all tokens of all samples.
/// nullopt when either set is empty or the block belongs to no group.
std::optional<double> gamma(std::span<const SampleRecord> samples, const ClusterModel& cm,
                            std::size_t block, std::size_t cluster);

struct RatioReport {
    std::vector<PruneGroup> groups;
    std::map<std::pair<std::size_t, std::size_t>, double> gamma;  // (block, cluster)
    std::size_t clusters = kDefaultClusters;
};

RatioReport ratio_report(std::span<const SampleRecord> samples, const ClusterModel& cm);

/// Gamma(n) = 1/(5|G_n|) sum_i sum_j gamma(G_n[j], i). Throws undefined_value listing
/// missing (block, cluster) cells.
double gamma_group(const RatioReport& report, std::size_t group);

struct Histogram2D {
    std::size_t bins = 0;
    double mean_lo = 0.0, mean_hi = 0.0;
    double std_lo = 0.0, std_hi = 0.0;
    /// counts[mean_bin * bins + std_bin]
    std::vector<std::size_t> counts;

    std::size_t total() const noexcept;
    /// log(1 + c) / log(1 + max c); all zeros for an empty histogram.
    std::vector<double> log_normalized() const;
};

struct RetentionHistograms {
    Histogram2D input;
    Histogram2D retained;
};

/// Retained = surviving the last pruning step of each sample (every patch when unpruned).
/// Both views share the bin edges of the input view.
RetentionHistograms retention_histogram2d(std::span<const SampleRecord> samples, std::size_t bins,
                                          bool exclude_padding = false);

struct RetentionCdf {
    /// Distinct retained means, ascending, with the fraction of retained tokens <= each.
    std::vector<std::pair<double, double>> points;
    std::vector<double> boundaries;
    std::size_t count = 0;

    double evaluate(double x) const;
};

RetentionCdf retention_cdf(std::span<const SampleRecord> samples, const ClusterModel* cm,
                           bool exclude_padding = false);

/// Provenance ids surviving the last pruning step (all patches when none).
std::vector<std::size_t> final_survivors(const SampleRecord& s);

}  // namespace prune_ast
