#include "prune_ast/cluster.hpp"

#include <algorithm>
#include <cmath>

#include "prune_ast/error.hpp"

namespace prune_ast {

namespace {

std::vector<double> quantile_midpoint_seeds(const std::vector<double>& sorted, std::size_t k) {
    std::vector<double> seeds(k);
    const double n = static_cast<double>(sorted.size());
    for (std::size_t j = 0; j < k; ++j) {
        auto idx = static_cast<std::size_t>(std::floor((static_cast<double>(j) + 0.5) * n /
                                                       static_cast<double>(k)));
        seeds[j] = sorted[std::min(idx, sorted.size() - 1)];
    }
    return seeds;
}

bool strictly_increasing(const std::vector<double>& v) {
    return std::adjacent_find(v.begin(), v.end(), std::greater_equal<>()) == v.end();
}

}  // namespace

std::string_view to_string(ClusterFeature f) noexcept { return f == ClusterFeature::std ? "std" : "mean"; }

ClusterFeature parse_cluster_feature(std::string_view s) {
    if (s == "mean" || s == "intensity") return ClusterFeature::mean;
    if (s == "std" || s == "variation") return ClusterFeature::std;
    fail(Errc::config, "cluster feature must be 'mean' or 'std', got '" + std::string(s) + "'");
}

std::size_t nearest_centroid(std::span<const double> c, double value) {
    // Cluster j (0-based) owns (mid(j-1, j), mid(j, j+1)]; a value on a midpoint goes low.
    std::size_t j = 0;
    while (j + 1 < c.size() && value > 0.5 * (c[j] + c[j + 1])) ++j;
    return j;
}

std::size_t assign_cluster(const ClusterModel& cm, double value) {
    if (cm.centroids.empty()) fail(Errc::invalid_argument, "assign_cluster: unfitted model");
    return nearest_centroid(cm.centroids, value) + 1;
}

double within_cluster_ss(std::span<const double> values, std::span<const double> centroids) {
    double ss = 0.0;
    for (double v : values) {
        double best = INFINITY;
        for (double c : centroids) best = std::min(best, (v - c) * (v - c));
        ss += best;
    }
    return ss;
}

std::vector<double> lloyd_1d(std::span<const double> values, std::vector<double> centroids,
                             std::size_t max_iterations, std::size_t* iterations_out) {
    std::sort(centroids.begin(), centroids.end());
    const std::size_t k = centroids.size();
    std::vector<std::size_t> assignment(values.size(), k);
    std::size_t iter = 0;
    for (; iter < max_iterations; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const std::size_t a = nearest_centroid(centroids, values[i]);
            if (a != assignment[i]) {
                assignment[i] = a;
                changed = true;
            }
        }
        if (!changed) break;
        std::vector<double> sum(k, 0.0);
        std::vector<std::size_t> count(k, 0);
        for (std::size_t i = 0; i < values.size(); ++i) {
            sum[assignment[i]] += values[i];
            ++count[assignment[i]];
        }
        for (std::size_t j = 0; j < k; ++j) {
            if (count[j] > 0) centroids[j] = sum[j] / static_cast<double>(count[j]);
        }
        std::sort(centroids.begin(), centroids.end());
    }
    if (iterations_out) *iterations_out = iter;
    return centroids;
}

ClusterModel kmeans_1d(std::span<const double> values, std::size_t k) {
    if (k < 1) fail(Errc::invalid_argument, "kmeans: k must be >= 1");
    std::vector<double> sorted(values.begin(), values.end());
    for (double v : sorted) {
        if (!std::isfinite(v)) fail(Errc::numerical, "kmeans: non-finite value");
    }
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> distinct = sorted;
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < k) {
        fail(Errc::insufficient_data, "kmeans: need at least " + std::to_string(k) +
                                          " distinct values, got " +
                                          std::to_string(distinct.size()));
    }
    std::vector<double> seeds = quantile_midpoint_seeds(sorted, k);
    if (!strictly_increasing(seeds)) seeds = quantile_midpoint_seeds(distinct, k);

    ClusterModel cm;
    cm.centroids = lloyd_1d(sorted, seeds, kMaxLloydIterations, &cm.iterations);
    if (!strictly_increasing(cm.centroids)) {
        fail(Errc::numerical, "kmeans: centroids collapsed");
    }
    for (std::size_t j = 0; j + 1 < k; ++j) {
        cm.boundaries.push_back(0.5 * (cm.centroids[j] + cm.centroids[j + 1]));
    }
    std::vector<std::size_t> count(k, 0);
    for (double v : sorted) ++count[nearest_centroid(cm.centroids, v)];
    for (std::size_t j = 0; j < k; ++j) {
        cm.shares.push_back(100.0 * static_cast<double>(count[j]) / static_cast<double>(sorted.size()));
    }
    return cm;
}

ClusterModel kmeans_1d(std::span<const float> values, std::size_t k) {
    std::vector<double> v(values.begin(), values.end());
    return kmeans_1d(std::span<const double>(v), k);
}

}  // namespace prune_ast
