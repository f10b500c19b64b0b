#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "dkm/cluster_head.hpp"
#include "dkm/data.hpp"
#include "dkm/matrix.hpp"
#include "dkm/trainer.hpp"

namespace dkm {

/// Cluster-by-class count table and the statistics derived from it.
struct ConfusionReport {
  std::vector<int> class_ids;                    // C distinct classes, ascending
  std::vector<std::vector<std::size_t>> counts;  // K x C
  Matrix per_class_pct;                          // K x C, each nonempty column sums to 1
  std::vector<int> majority_map;                 // K entries, class id with the largest count
  double purity = 0.0;                           // sum_k max_c counts[k][c] / total
  double matched_accuracy = 0.0;                 // best one-to-one cluster/class matching
  std::size_t total = 0;

  std::size_t num_clusters() const noexcept { return counts.size(); }
  std::size_t num_classes() const noexcept { return class_ids.size(); }
};

ConfusionReport confusion(const Assignment& assignment, std::span<const int> hidden_classes);

// Builds the report directly from a K x C count table.
ConfusionReport confusion_from_counts(std::vector<std::vector<std::size_t>> counts, std::vector<int> class_ids);

/// Largest total count over one-to-one pairings of clusters with classes,
/// searched exhaustively. Requires min(K, C) <= 10.
std::size_t best_matching_count(const std::vector<std::vector<std::size_t>>& counts);

struct LloydResult {
  Matrix centers;
  Assignment assignment;
  std::vector<double> objective;  // sum_n min_k ||x_n - c_k||^2 after each assignment step
  std::size_t iterations = 0;
  bool converged = false;
};

/// Lloyd's algorithm with k-means++ seeding over distinct points. A cluster
/// that loses all its points is moved onto the point farthest from its
/// assigned center. Stops once no center moves by tol or more, or after
/// max_iter updates.
LloydResult lloyd_kmeans(const Matrix& x, std::size_t k, std::uint64_t seed, std::size_t max_iter = 300,
                         double tol = 1e-9);

struct EvalResult {
  ConfusionReport report;
  double fg_accuracy = 0.0;   // classifier accuracy over the whole test set
  std::size_t fg_count = 0;
  bool no_foreground = false;
};

/// Embeds the foreground test rows, assigns them with the trained head and
/// tabulates clusters against hidden classes. `test` must already be in the
/// network's input space (standardised).
EvalResult evaluate_model(const EmbeddingNet& net, const ClusterHead& head, const Dataset& test);

// Rows "counts,<k>,..." then "percent,<k>,..." under header table,cluster,class_<id>...
void write_confusion_csv(std::ostream& out, const ConfusionReport& report);

}  // namespace dkm
