#include "prune_ast/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

#include "prune_ast/error.hpp"

namespace prune_ast {

namespace {

class Fenwick {
public:
    explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}

    void add(std::size_t i) {
        for (++i; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
    }
    /// Count of inserted ranks < i.
    std::uint64_t prefix(std::size_t i) const {
        std::uint64_t s = 0;
        for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
        return s;
    }

private:
    std::vector<std::uint64_t> tree_;
};

double feature_of(const ClusterModel& cm, const PatchStats& stats, std::size_t patch) {
    if (patch >= stats.size()) {
        fail(Errc::out_of_range, "analysis: no statistics for patch " + std::to_string(patch));
    }
    return cm.feature == ClusterFeature::std ? stats.std[patch] : stats.mean[patch];
}

const PruneGroup* group_of(const std::vector<PruneGroup>& groups, std::size_t block) {
    for (const auto& g : groups)
        if (std::find(g.blocks.begin(), g.blocks.end(), block) != g.blocks.end()) return &g;
    return nullptr;
}

struct Bins {
    double lo, hi;
    std::size_t n;
    std::size_t operator()(double v) const {
        if (hi <= lo) return 0;
        const double t = (v - lo) / (hi - lo) * static_cast<double>(n);
        if (t <= 0.0) return 0;
        return std::min(static_cast<std::size_t>(t), n - 1);
    }
};

}  // namespace

std::size_t patch_cluster(const ClusterModel& cm, const PatchStats& stats, std::size_t patch) {
    return assign_cluster(cm, feature_of(cm, stats, patch));
}

ClusterModel fit_patch_clusters(std::span<const SampleRecord> samples, ClusterFeature feature,
                                bool exclude_padding) {
    std::vector<double> values;
    for (const auto& s : samples) {
        const auto& src = feature == ClusterFeature::std ? s.stats.std : s.stats.mean;
        for (std::size_t i = 0; i < src.size(); ++i) {
            if (exclude_padding && s.stats.padding[i]) continue;
            values.push_back(src[i]);
        }
    }
    ClusterModel cm = kmeans_1d(std::span<const double>(values));
    cm.feature = feature;
    return cm;
}

double kendall_tau_clustered(std::span<const std::size_t> clusters, std::span<const float> scores) {
    if (clusters.size() != scores.size()) {
        fail(Errc::shape_mismatch, "kendall: " + std::to_string(clusters.size()) + " clusters vs " +
                                       std::to_string(scores.size()) + " scores");
    }
    const std::size_t n = scores.size();
    if (n < 2) fail(Errc::insufficient_data, "kendall: need at least two tokens");

    std::vector<float> distinct(scores.begin(), scores.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    std::vector<std::size_t> rank(n);
    for (std::size_t i = 0; i < n; ++i) {
        rank[i] = static_cast<std::size_t>(
            std::lower_bound(distinct.begin(), distinct.end(), scores[i]) - distinct.begin());
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return clusters[a] < clusters[b]; });

    // Weak co-dominance: j != i with C_j >= C_i and a_j >= a_i. Sweep clusters high to low,
    // inserting a whole cluster before querying it.
    std::uint64_t weak = 0;
    {
        Fenwick fw(distinct.size());
        std::size_t inserted = 0;
        std::size_t hi = n;
        while (hi > 0) {
            std::size_t lo = hi;
            while (lo > 0 && clusters[order[lo - 1]] == clusters[order[hi - 1]]) --lo;
            for (std::size_t k = lo; k < hi; ++k) fw.add(rank[order[k]]);
            inserted += hi - lo;
            for (std::size_t k = lo; k < hi; ++k) {
                weak += inserted - fw.prefix(rank[order[k]]) - 1;
            }
            hi = lo;
        }
    }
    // Strict dominance: C_j < C_i and a_j < a_i. Sweep low to high, querying before inserting.
    std::uint64_t strict = 0;
    {
        Fenwick fw(distinct.size());
        std::size_t lo = 0;
        while (lo < n) {
            std::size_t hi = lo;
            while (hi < n && clusters[order[hi]] == clusters[order[lo]]) ++hi;
            for (std::size_t k = lo; k < hi; ++k) strict += fw.prefix(rank[order[k]]);
            for (std::size_t k = lo; k < hi; ++k) fw.add(rank[order[k]]);
            lo = hi;
        }
    }
    const std::uint64_t pairs = static_cast<std::uint64_t>(n) * (n - 1);
    const std::uint64_t concordant = weak + strict;
    return (2.0 * static_cast<double>(concordant) - static_cast<double>(pairs)) /
           static_cast<double>(pairs);
}

CorrelationReport tau_report(std::span<const SampleRecord> samples, const ClusterModel& cm) {
    std::map<std::size_t, std::pair<double, std::size_t>> acc;
    for (const auto& s : samples) {
        std::map<std::size_t, std::pair<std::vector<std::size_t>, std::vector<float>>> by_block;
        for (const auto& e : s.log) {
            auto& [c, a] = by_block[e.block];
            c.push_back(patch_cluster(cm, s.stats, e.provenance));
            a.push_back(e.score);
        }
        for (const auto& [block, ca] : by_block) {
            if (ca.first.size() < 2) continue;
            auto& slot = acc[block];
            slot.first += kendall_tau_clustered(ca.first, ca.second);
            ++slot.second;
        }
    }
    CorrelationReport r;
    double sum = 0.0;
    for (const auto& [block, st] : acc) {
        const double tau = st.first / static_cast<double>(st.second);
        r.per_block.emplace_back(block, tau);
        sum += tau;
    }
    if (!r.per_block.empty()) r.average = sum / static_cast<double>(r.per_block.size());
    return r;
}

std::vector<PruneGroup> pruning_groups(const std::set<std::size_t>& locations) {
    std::vector<PruneGroup> groups;
    std::size_t first = 1;
    for (std::size_t loc : locations) {
        PruneGroup g;
        g.index = groups.size() + 1;
        g.pruning_block = loc;
        for (std::size_t b = first; b <= loc; ++b) g.blocks.push_back(b);
        groups.push_back(std::move(g));
        first = loc + 1;
    }
    return groups;
}

std::optional<double> gamma(std::span<const SampleRecord> samples, const ClusterModel& cm,
                            std::size_t block, std::size_t cluster) {
    double retained_sum = 0.0, pruned_sum = 0.0;
    std::size_t retained_n = 0, pruned_n = 0;
    for (const auto& s : samples) {
        const auto groups = pruning_groups(s.locations);
        const PruneGroup* g = group_of(groups, block);
        if (!g) continue;
        const PruneStep* step = s.trace.step_at(g->pruning_block);
        if (!step) continue;
        const std::set<std::size_t> kept(step->retained.begin(), step->retained.end());
        const std::set<std::size_t> dropped(step->pruned.begin(), step->pruned.end());
        for (const auto& e : s.log) {
            if (e.block != block) continue;
            if (kept.contains(e.provenance)) {
                if (patch_cluster(cm, s.stats, e.provenance) == cluster) {
                    retained_sum += e.score;
                    ++retained_n;
                }
            } else if (dropped.contains(e.provenance)) {
                pruned_sum += e.score;
                ++pruned_n;
            }
        }
    }
    if (retained_n == 0 || pruned_n == 0) return std::nullopt;
    const double pruned_mean = pruned_sum / static_cast<double>(pruned_n);
    if (pruned_mean <= 0.0) return std::nullopt;
    return (retained_sum / static_cast<double>(retained_n)) / pruned_mean;
}

RatioReport ratio_report(std::span<const SampleRecord> samples, const ClusterModel& cm) {
    RatioReport r;
    r.clusters = cm.k();
    std::set<std::size_t> locations;
    for (const auto& s : samples) locations.insert(s.locations.begin(), s.locations.end());
    r.groups = pruning_groups(locations);
    for (const auto& g : r.groups) {
        for (std::size_t b : g.blocks) {
            for (std::size_t i = 1; i <= cm.k(); ++i) {
                if (auto v = gamma(samples, cm, b, i)) r.gamma[{b, i}] = *v;
            }
        }
    }
    return r;
}

double gamma_group(const RatioReport& report, std::size_t group) {
    if (group < 1 || group > report.groups.size()) {
        fail(Errc::out_of_range, "Gamma: no group " + std::to_string(group));
    }
    const PruneGroup& g = report.groups[group - 1];
    double sum = 0.0;
    std::string missing;
    for (std::size_t i = 1; i <= report.clusters; ++i) {
        for (std::size_t b : g.blocks) {
            auto it = report.gamma.find({b, i});
            if (it == report.gamma.end()) {
                missing += " (" + std::to_string(b) + "," + std::to_string(i) + ")";
            } else {
                sum += it->second;
            }
        }
    }
    if (!missing.empty()) {
        fail(Errc::undefined_value,
             "Gamma(" + std::to_string(group) + "): missing gamma cells (block,cluster):" + missing);
    }
    return sum / (static_cast<double>(report.clusters) * static_cast<double>(g.blocks.size()));
}

std::size_t Histogram2D::total() const noexcept {
    return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

std::vector<double> Histogram2D::log_normalized() const {
    std::vector<double> out(counts.size(), 0.0);
    const std::size_t mx = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
    if (mx == 0) return out;
    const double denom = std::log1p(static_cast<double>(mx));
    for (std::size_t i = 0; i < counts.size(); ++i) {
        out[i] = std::log1p(static_cast<double>(counts[i])) / denom;
    }
    return out;
}

std::vector<std::size_t> final_survivors(const SampleRecord& s) {
    if (!s.trace.steps.empty()) {
        const auto last = std::max_element(
            s.trace.steps.begin(), s.trace.steps.end(),
            [](const PruneStep& a, const PruneStep& b) { return a.block < b.block; });
        return last->retained;
    }
    std::vector<std::size_t> all(s.stats.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
}

RetentionHistograms retention_histogram2d(std::span<const SampleRecord> samples, std::size_t bins,
                                          bool exclude_padding) {
    if (bins < 1) fail(Errc::invalid_argument, "histogram: bins must be >= 1");
    double mlo = std::numeric_limits<double>::infinity(), mhi = -mlo;
    double slo = mlo, shi = -mlo;
    for (const auto& s : samples) {
        for (std::size_t i = 0; i < s.stats.size(); ++i) {
            if (exclude_padding && s.stats.padding[i]) continue;
            mlo = std::min<double>(mlo, s.stats.mean[i]);
            mhi = std::max<double>(mhi, s.stats.mean[i]);
            slo = std::min<double>(slo, s.stats.std[i]);
            shi = std::max<double>(shi, s.stats.std[i]);
        }
    }
    if (mlo > mhi) mlo = mhi = slo = shi = 0.0;

    RetentionHistograms h;
    for (Histogram2D* x : {&h.input, &h.retained}) {
        x->bins = bins;
        x->mean_lo = mlo;
        x->mean_hi = mhi;
        x->std_lo = slo;
        x->std_hi = shi;
        x->counts.assign(bins * bins, 0);
    }
    const Bins mean_bin{mlo, mhi, bins}, std_bin{slo, shi, bins};
    for (const auto& s : samples) {
        auto cell = [&](std::size_t p) { return mean_bin(s.stats.mean[p]) * bins + std_bin(s.stats.std[p]); };
        for (std::size_t i = 0; i < s.stats.size(); ++i) {
            if (exclude_padding && s.stats.padding[i]) continue;
            ++h.input.counts[cell(i)];
        }
        for (std::size_t p : final_survivors(s)) {
            if (p >= s.stats.size()) {
                fail(Errc::out_of_range, "histogram: survivor " + std::to_string(p) + " has no statistics");
            }
            if (exclude_padding && s.stats.padding[p]) continue;
            ++h.retained.counts[cell(p)];
        }
    }
    return h;
}

double RetentionCdf::evaluate(double x) const {
    if (count == 0) return 0.0;
    auto it = std::upper_bound(points.begin(), points.end(), x,
                               [](double v, const std::pair<double, double>& p) { return v < p.first; });
    if (it == points.begin()) return 0.0;
    return std::prev(it)->second;
}

RetentionCdf retention_cdf(std::span<const SampleRecord> samples, const ClusterModel* cm,
                           bool exclude_padding) {
    std::vector<double> means;
    for (const auto& s : samples) {
        for (std::size_t p : final_survivors(s)) {
            if (p >= s.stats.size()) {
                fail(Errc::out_of_range, "cdf: survivor " + std::to_string(p) + " has no statistics");
            }
            if (exclude_padding && s.stats.padding[p]) continue;
            means.push_back(s.stats.mean[p]);
        }
    }
    std::sort(means.begin(), means.end());
    RetentionCdf c;
    c.count = means.size();
    for (std::size_t i = 0; i < means.size(); ++i) {
        if (i + 1 < means.size() && means[i + 1] == means[i]) continue;
        const double frac = i + 1 == means.size()
                                ? 1.0
                                : static_cast<double>(i + 1) / static_cast<double>(means.size());
        c.points.emplace_back(means[i], frac);
    }
    if (cm) c.boundaries = cm->boundaries;
    return c;
}

}  // namespace prune_ast
