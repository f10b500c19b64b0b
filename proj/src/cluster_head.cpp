#include "dkm/cluster_head.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "dkm/errors.hpp"
#include "dkm/evalkit.hpp"

namespace dkm {

namespace {

constexpr double kMinSeparation = 1e-6;
constexpr std::uint64_t kLloydRestarts = 10;

void check_input(const Matrix& x, const ClusterHead& head, const char* what) {
  if (x.cols() != head.dim()) {
    throw dimension_error(std::string(what) + ": points " + x.shape_string() +
                          " incompatible with cluster weights " + head.weights.shape_string());
  }
  if (x.rows() == 0) throw precondition_error(std::string(what) + ": no points");
}

}  // namespace

ClusterHead::ClusterHead(Matrix initial_weights)
    : weights(std::move(initial_weights)), grad_weights(weights.rows(), weights.cols()) {}

Assignment make_assignment(std::vector<std::size_t> cluster_of, std::size_t k) {
  Assignment a{std::move(cluster_of), std::vector<std::size_t>(k, 0)};
  for (std::size_t c : a.cluster_of) {
    if (c >= k) throw precondition_error("assignment: cluster id out of range");
    ++a.counts[c];
  }
  return a;
}

Assignment assign(const Matrix& x, const ClusterHead& head) {
  check_input(x, head, "assign");
  const std::size_t k_count = head.num_clusters();
  std::vector<std::size_t> cluster_of(x.rows());
  for (std::size_t n = 0; n < x.rows(); ++n) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < k_count; ++k) {
      const double d = squared_distance(x.row(n), head.weights.row(k));
      if (d < best) {
        best = d;
        best_k = k;
      }
    }
    cluster_of[n] = best_k;
  }
  return make_assignment(std::move(cluster_of), k_count);
}

KMeansLoss kmeans_loss(const Matrix& x, const ClusterHead& head) {
  KMeansLoss out{0.0, assign(x, head)};
  for (std::size_t n = 0; n < x.rows(); ++n) {
    out.value += squared_distance(x.row(n), head.weights.row(out.assignment.cluster_of[n]));
  }
  out.value /= 2.0 * static_cast<double>(x.rows());
  return out;
}

Matrix kmeans_backward(const Matrix& x, ClusterHead& head, const Assignment& assignment) {
  check_input(x, head, "kmeans_backward");
  if (assignment.size() != x.rows() || assignment.num_clusters() != head.num_clusters()) {
    throw precondition_error("kmeans_backward: assignment covers " + std::to_string(assignment.size()) +
                             " points over " + std::to_string(assignment.num_clusters()) +
                             " clusters, expected " + std::to_string(x.rows()) + " over " +
                             std::to_string(head.num_clusters()));
  }
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  Matrix grad_x(x.rows(), x.cols());
  for (std::size_t n = 0; n < x.rows(); ++n) {
    const std::size_t k = assignment.cluster_of[n];
    auto xn = x.row(n);
    auto wk = head.weights.row(k);
    auto gw = head.grad_weights.row(k);
    auto gx = grad_x.row(n);
    for (std::size_t d = 0; d < xn.size(); ++d) {
      const double diff = (xn[d] - wk[d]) * inv_n;
      gx[d] = diff;
      gw[d] -= diff;
    }
  }
  return grad_x;
}

L2Penalty l2_reg(const ClusterHead& head) {
  L2Penalty out{0.0, head.weights};
  for (double& v : out.grad.values()) {
    out.value += v * v;
    v *= 2.0;
  }
  return out;
}

double balance_metric(const Assignment& assignment, std::size_t n) {
  const auto& counts = assignment.counts;
  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  if (n == 0 || total != n) {
    throw precondition_error("balance_metric: counts sum to " + std::to_string(total) +
                             ", expected N=" + std::to_string(n) + " >= 1");
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    for (std::size_t j = k + 1; j < counts.size(); ++j) {
      acc += std::abs(static_cast<double>(counts[k]) - static_cast<double>(counts[j]));
    }
  }
  return acc / (static_cast<double>(n) * static_cast<double>(counts.size()));
}

std::optional<ClusterInit> parse_cluster_init(std::string_view name) {
  if (name == "random_normal") return ClusterInit::random_normal;
  if (name == "sample_points") return ClusterInit::sample_points;
  if (name == "kmeanspp") return ClusterInit::kmeanspp;
  if (name == "lloyd") return ClusterInit::lloyd;
  return std::nullopt;
}

std::string_view to_string(ClusterInit scheme) noexcept {
  switch (scheme) {
    case ClusterInit::random_normal: return "random_normal";
    case ClusterInit::sample_points: return "sample_points";
    case ClusterInit::kmeanspp: return "kmeanspp";
    case ClusterInit::lloyd: return "lloyd";
  }
  return "unknown";
}

double min_pairwise_distance(const Matrix& w) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < w.rows(); ++i) {
    for (std::size_t j = i + 1; j < w.rows(); ++j) {
      best = std::min(best, std::sqrt(squared_distance(w.row(i), w.row(j))));
    }
  }
  return best;
}

namespace {

// Picks k rows of points such that no two are within kMinSeparation of each
// other. Rows are drawn uniformly or, for weighted, by squared distance to
// the nearest row already picked.
Matrix pick_distinct_rows(const Matrix& points, std::size_t k, std::mt19937_64& rng, bool weighted) {
  const std::size_t n = points.rows();
  std::vector<std::size_t> chosen;
  chosen.reserve(k);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());

  auto too_close = [&](std::size_t i) { return nearest[i] <= kMinSeparation * kMinSeparation; };
  auto update_nearest = [&](std::size_t picked) {
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(points.row(i), points.row(picked)));
    }
  };

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  chosen.push_back(order.front());
  update_nearest(order.front());

  while (chosen.size() < k) {
    std::vector<double> weights(n, 0.0);
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (too_close(i)) continue;
      weights[i] = weighted ? nearest[i] : 1.0;
      any = true;
    }
    if (!any) {
      throw init_error("init_clusters: only " + std::to_string(chosen.size()) +
                       " distinct points available for K=" + std::to_string(k));
    }
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    const std::size_t next = pick(rng);
    chosen.push_back(next);
    update_nearest(next);
  }
  return gather_rows(points, chosen);
}

}  // namespace

ClusterHead init_clusters(std::size_t dim, std::size_t k, std::uint64_t seed, ClusterInit scheme,
                          const Matrix* points) {
  if (k < 2) throw precondition_error("init_clusters: K must be at least 2");
  std::mt19937_64 rng(seed);
  if (scheme == ClusterInit::random_normal) {
    if (dim == 0) throw precondition_error("init_clusters: dimension must be positive");
    std::normal_distribution<double> dist(0.0, 0.1);
    Matrix w(k, dim);
    // Redraw on the (measure-zero) chance of coincident means.
    do {
      for (double& v : w.values()) v = dist(rng);
    } while (min_pairwise_distance(w) <= kMinSeparation);
    return ClusterHead(std::move(w));
  }
  if (points == nullptr) throw precondition_error("init_clusters: point-based scheme needs points");
  if (points->cols() != dim) {
    throw dimension_error("init_clusters: points " + points->shape_string() + " do not have dimension " +
                          std::to_string(dim));
  }
  if (points->rows() < k) {
    throw init_error("init_clusters: " + std::to_string(points->rows()) + " points for K=" +
                     std::to_string(k));
  }
  if (scheme == ClusterInit::lloyd) {
    Matrix centers;
    double best = std::numeric_limits<double>::infinity();
    for (std::uint64_t r = 0; r < kLloydRestarts; ++r) {
      LloydResult run = lloyd_kmeans(*points, k, seed + r);
      if (run.objective.back() < best) {
        best = run.objective.back();
        centers = std::move(run.centers);
      }
    }
    if (min_pairwise_distance(centers) <= kMinSeparation) {
      throw init_error("init_clusters: Lloyd's k-means produced coincident centers");
    }
    return ClusterHead(std::move(centers));
  }
  return ClusterHead(pick_distinct_rows(*points, k, rng, scheme == ClusterInit::kmeanspp));
}

Matrix sample_distinct_rows(const Matrix& points, std::size_t k, std::uint64_t seed, bool d2_weighted) {
  if (k == 0) throw precondition_error("sample_distinct_rows: K must be positive");
  if (points.rows() < k) {
    throw init_error("sample_distinct_rows: " + std::to_string(points.rows()) + " points for K=" +
                     std::to_string(k));
  }
  std::mt19937_64 rng(seed);
  return pick_distinct_rows(points, k, rng, d2_weighted);
}

}  // namespace dkm
