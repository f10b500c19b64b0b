#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "dkm/matrix.hpp"

namespace dkm {

/// K learnable cluster means stored as network parameters, with a gradient
/// buffer of the same shape.
struct ClusterHead {
  Matrix weights;       // K x D, row k is cluster mean w_k
  Matrix grad_weights;  // K x D

  ClusterHead() = default;
  explicit ClusterHead(Matrix initial_weights);

  std::size_t num_clusters() const noexcept { return weights.rows(); }
  std::size_t dim() const noexcept { return weights.cols(); }
  void zero_grad() { grad_weights.fill(0.0); }
};

/// Hard assignment of N points to K clusters.
struct Assignment {
  std::vector<std::size_t> cluster_of;  // N entries in [0, K)
  std::vector<std::size_t> counts;      // K entries, counts[k] = |{n : cluster_of[n] == k}|

  std::size_t size() const noexcept { return cluster_of.size(); }
  std::size_t num_clusters() const noexcept { return counts.size(); }
};

// Builds counts from per-point cluster ids; throws if an id is >= k.
Assignment make_assignment(std::vector<std::size_t> cluster_of, std::size_t k);

// Nearest cluster mean by squared Euclidean distance; ties go to the lowest index.
Assignment assign(const Matrix& x, const ClusterHead& head);

struct KMeansLoss {
  double value = 0.0;
  Assignment assignment;
};

// L_k = 1/(2N) sum_n min_k ||x_n - w_k||^2.
KMeansLoss kmeans_loss(const Matrix& x, const ClusterHead& head);

// Exact gradient of kmeans_loss with the assignment held fixed. Accumulates
// (1/N) sum_{n in k} (w_k - x_n) into head.grad_weights and returns
// d L_k / d x with rows (x_n - w_{s(n)}) / N.
Matrix kmeans_backward(const Matrix& x, ClusterHead& head, const Assignment& assignment);

struct L2Penalty {
  double value = 0.0;
  Matrix grad;  // 2 w, unscaled
};

// Sum of squared cluster-weight entries and its gradient.
L2Penalty l2_reg(const ClusterHead& head);

// (1 / (N K)) sum_{k <= j} |count_k - count_j|. Monitoring only.
double balance_metric(const Assignment& assignment, std::size_t n);

enum class ClusterInit { random_normal, sample_points, kmeanspp, lloyd };

std::optional<ClusterInit> parse_cluster_init(std::string_view name);
std::string_view to_string(ClusterInit scheme) noexcept;

/// Seeded cluster initialisation.
///  - random_normal: entries from N(0, 0.1^2).
///  - sample_points: K distinct rows of `points`, drawn uniformly.
///  - kmeanspp: K distinct rows of `points`, each subsequent row drawn with
///    probability proportional to its squared distance to the nearest row
///    already chosen.
///  - lloyd: centers of the best of 10 seeded Lloyd's k-means runs on `points`.
/// The result always has pairwise-distinct cluster means (distance > 1e-6).
ClusterHead init_clusters(std::size_t dim, std::size_t k, std::uint64_t seed, ClusterInit scheme,
                          const Matrix* points = nullptr);

/// K rows of `points` that are pairwise more than 1e-6 apart, drawn with a
/// seeded generator: uniformly, or with d2_weighted by squared distance to the
/// nearest row already drawn (k-means++ seeding). Throws init_error when
/// fewer than K such rows exist.
Matrix sample_distinct_rows(const Matrix& points, std::size_t k, std::uint64_t seed, bool d2_weighted);

// Smallest pairwise Euclidean distance between rows of w.
double min_pairwise_distance(const Matrix& w);

}  // namespace dkm
