#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace prune_ast {

enum class ClusterFeature { mean, std };

std::string_view to_string(ClusterFeature f) noexcept;
ClusterFeature parse_cluster_feature(std::string_view s);

/// Sorted 1-D centroids. Cluster ids are 1-based: C1 is the lowest centroid.
struct ClusterModel {
    std::vector<double> centroids;
    /// Midpoints between consecutive centroids (k - 1 values).
    std::vector<double> boundaries;
    /// Percentage of fitted values falling in each cluster.
    std::vector<double> shares;
    ClusterFeature feature = ClusterFeature::mean;
    std::size_t iterations = 0;

    std::size_t k() const noexcept { return centroids.size(); }
};

inline constexpr std::size_t kDefaultClusters = 5;
inline constexpr std::size_t kMaxLloydIterations = 300;

/// Lloyd's algorithm seeded at the k quantile midpoints of the sorted data. If those
/// seeds collide (heavy duplication), the quantiles of the distinct values are used.
ClusterModel kmeans_1d(std::span<const double> values, std::size_t k = kDefaultClusters);
ClusterModel kmeans_1d(std::span<const float> values, std::size_t k = kDefaultClusters);

/// Lloyd refinement from explicit initial centroids (sorted on return).
std::vector<double> lloyd_1d(std::span<const double> values, std::vector<double> centroids,
                             std::size_t max_iterations, std::size_t* iterations_out = nullptr);

/// Nearest centroid, 1-based; equidistant values go to the lower cluster.
std::size_t assign_cluster(const ClusterModel& cm, double value);
std::size_t nearest_centroid(std::span<const double> sorted_centroids, double value);

/// Within-cluster sum of squares under nearest-centroid assignment.
double within_cluster_ss(std::span<const double> values, std::span<const double> centroids);

}  // namespace prune_ast
