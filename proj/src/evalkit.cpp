#include "dkm/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <set>
#include <string>

#include "dkm/errors.hpp"
#include "dkm/format.hpp"

namespace dkm {

std::size_t best_matching_count(const std::vector<std::vector<std::size_t>>& counts) {
  const std::size_t k_count = counts.size();
  const std::size_t c_count = k_count == 0 ? 0 : counts.front().size();
  const bool clusters_smaller = k_count <= c_count;
  const std::size_t small = std::min(k_count, c_count);
  const std::size_t large = std::max(k_count, c_count);
  if (small > 10) throw precondition_error("best_matching_count: more than 10 clusters and classes");

  auto at = [&](std::size_t s, std::size_t l) { return clusters_smaller ? counts[s][l] : counts[l][s]; };
  std::vector<bool> used(large, false);
  std::size_t best = 0;
  std::function<void(std::size_t, std::size_t)> search = [&](std::size_t s, std::size_t acc) {
    if (s == small) {
      best = std::max(best, acc);
      return;
    }
    for (std::size_t l = 0; l < large; ++l) {
      if (used[l]) continue;
      used[l] = true;
      search(s + 1, acc + at(s, l));
      used[l] = false;
    }
  };
  search(0, 0);
  return best;
}

ConfusionReport confusion_from_counts(std::vector<std::vector<std::size_t>> counts, std::vector<int> class_ids) {
  if (counts.empty() || class_ids.empty()) throw precondition_error("confusion: empty table");
  ConfusionReport r;
  r.class_ids = std::move(class_ids);
  r.counts = std::move(counts);
  const std::size_t k_count = r.counts.size();
  const std::size_t c_count = r.class_ids.size();
  for (const auto& row : r.counts) {
    if (row.size() != c_count) throw dimension_error("confusion: ragged count table");
  }

  std::vector<std::size_t> class_totals(c_count, 0);
  std::size_t majority_sum = 0;
  r.majority_map.resize(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    std::size_t best_c = 0;
    for (std::size_t c = 0; c < c_count; ++c) {
      class_totals[c] += r.counts[k][c];
      r.total += r.counts[k][c];
      if (r.counts[k][c] > r.counts[k][best_c]) best_c = c;
    }
    r.majority_map[k] = r.class_ids[best_c];
    majority_sum += r.counts[k][best_c];
  }
  if (r.total == 0) throw precondition_error("confusion: table has no samples");

  r.per_class_pct = Matrix(k_count, c_count);
  for (std::size_t c = 0; c < c_count; ++c) {
    if (class_totals[c] == 0) continue;
    for (std::size_t k = 0; k < k_count; ++k) {
      r.per_class_pct(k, c) = static_cast<double>(r.counts[k][c]) / static_cast<double>(class_totals[c]);
    }
  }
  r.purity = static_cast<double>(majority_sum) / static_cast<double>(r.total);
  r.matched_accuracy = static_cast<double>(best_matching_count(r.counts)) / static_cast<double>(r.total);
  return r;
}

ConfusionReport confusion(const Assignment& assignment, std::span<const int> hidden_classes) {
  if (assignment.size() != hidden_classes.size()) {
    throw dimension_error("confusion: " + std::to_string(assignment.size()) + " assignments for " +
                          std::to_string(hidden_classes.size()) + " class labels");
  }
  if (hidden_classes.empty()) throw precondition_error("confusion: empty input");
  const std::set<int> distinct(hidden_classes.begin(), hidden_classes.end());
  std::vector<int> class_ids(distinct.begin(), distinct.end());
  std::vector<std::vector<std::size_t>> counts(assignment.num_clusters(),
                                               std::vector<std::size_t>(class_ids.size(), 0));
  for (std::size_t n = 0; n < hidden_classes.size(); ++n) {
    const auto c = static_cast<std::size_t>(
        std::lower_bound(class_ids.begin(), class_ids.end(), hidden_classes[n]) - class_ids.begin());
    ++counts[assignment.cluster_of[n]][c];
  }
  return confusion_from_counts(std::move(counts), std::move(class_ids));
}

namespace {

double assignment_objective(const Matrix& x, const Matrix& centers, const Assignment& a) {
  double acc = 0.0;
  for (std::size_t n = 0; n < x.rows(); ++n) acc += squared_distance(x.row(n), centers.row(a.cluster_of[n]));
  return acc;
}

Assignment nearest_centers(const Matrix& x, const Matrix& centers) {
  ClusterHead head;
  head.weights = centers;
  return assign(x, head);
}

}  // namespace

LloydResult lloyd_kmeans(const Matrix& x, std::size_t k, std::uint64_t seed, std::size_t max_iter, double tol) {
  if (k == 0) throw precondition_error("lloyd_kmeans: K must be positive");
  if (x.rows() < k) {
    throw precondition_error("lloyd_kmeans: " + std::to_string(x.rows()) + " points for K=" + std::to_string(k));
  }
  LloydResult r;
  r.centers = sample_distinct_rows(x, k, seed, true);
  r.assignment = nearest_centers(x, r.centers);
  r.objective.push_back(assignment_objective(x, r.centers, r.assignment));

  const std::size_t dim = x.cols();
  while (r.iterations < max_iter && !r.converged) {
    Matrix next(k, dim);
    for (std::size_t n = 0; n < x.rows(); ++n) {
      auto dst = next.row(r.assignment.cluster_of[n]);
      auto src = x.row(n);
      for (std::size_t d = 0; d < dim; ++d) dst[d] += src[d];
    }
    std::vector<bool> taken(x.rows(), false);
    for (std::size_t c = 0; c < k; ++c) {
      auto row = next.row(c);
      if (r.assignment.counts[c] > 0) {
        const double inv = 1.0 / static_cast<double>(r.assignment.counts[c]);
        for (double& v : row) v *= inv;
        continue;
      }
      // Empty cluster: move it onto the point farthest from its current center.
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t n = 0; n < x.rows(); ++n) {
        if (taken[n]) continue;
        const double d = squared_distance(x.row(n), r.centers.row(r.assignment.cluster_of[n]));
        if (d > far_d) {
          far_d = d;
          far = n;
        }
      }
      taken[far] = true;
      auto src = x.row(far);
      std::copy(src.begin(), src.end(), row.begin());
    }

    double movement = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      movement = std::max(movement, std::sqrt(squared_distance(next.row(c), r.centers.row(c))));
    }
    r.centers = std::move(next);
    r.assignment = nearest_centers(x, r.centers);
    r.objective.push_back(assignment_objective(x, r.centers, r.assignment));
    ++r.iterations;
    r.converged = movement < tol;
  }
  return r;
}

EvalResult evaluate_model(const EmbeddingNet& net, const ClusterHead& head, const Dataset& test) {
  test.validate();
  if (test.size() == 0) throw precondition_error("evaluate_model: empty test set");
  EvalResult out;
  const auto acts = net.forward(test.features);
  std::size_t correct = 0;
  for (std::size_t n = 0; n < test.size(); ++n) {
    const std::uint8_t predicted = acts.logits(n, 1) > acts.logits(n, 0) ? 1 : 0;
    if (predicted == test.fg_flags[n]) ++correct;
  }
  out.fg_accuracy = static_cast<double>(correct) / static_cast<double>(test.size());

  std::vector<std::size_t> fg;
  std::vector<int> classes;
  for (std::size_t n = 0; n < test.size(); ++n) {
    if (test.fg_flags[n] == 1) {
      fg.push_back(n);
      classes.push_back(test.hidden_class[n]);
    }
  }
  out.fg_count = fg.size();
  if (fg.empty()) {
    out.no_foreground = true;
    return out;
  }
  const Assignment a = assign(gather_rows(acts.embedding, fg), head);
  out.report = confusion(a, classes);
  return out;
}

void write_confusion_csv(std::ostream& out, const ConfusionReport& report) {
  out << "table,cluster";
  for (int c : report.class_ids) out << ",class_" << c;
  out << '\n';
  for (std::size_t k = 0; k < report.num_clusters(); ++k) {
    out << "counts," << k;
    for (std::size_t v : report.counts[k]) out << ',' << v;
    out << '\n';
  }
  for (std::size_t k = 0; k < report.num_clusters(); ++k) {
    out << "percent," << k;
    for (std::size_t c = 0; c < report.num_classes(); ++c) out << ',' << format_double(report.per_class_pct(k, c));
    out << '\n';
  }
}

}  // namespace dkm
