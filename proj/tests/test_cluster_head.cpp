#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "dkm/cluster_head.hpp"
#include "dkm/diffmath.hpp"
#include "dkm/errors.hpp"

using namespace dkm;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix m(r, c);
  for (double& v : m.values()) v = dist(rng);
  return m;
}

// Smallest gap between nearest and second-nearest squared distance.
double tie_margin(const Matrix& x, const Matrix& w) {
  double margin = INFINITY;
  for (std::size_t n = 0; n < x.rows(); ++n) {
    std::vector<double> d;
    for (std::size_t k = 0; k < w.rows(); ++k) d.push_back(squared_distance(x.row(n), w.row(k)));
    std::sort(d.begin(), d.end());
    margin = std::min(margin, d[1] - d[0]);
  }
  return margin;
}

}  // namespace

TEST_CASE("assign hand cases") {
  SUBCASE("points on the means") {
    const auto a = assign({{0}, {10}}, ClusterHead({{0}, {10}}));
    CHECK(a.cluster_of == std::vector<std::size_t>{0, 1});
    CHECK(a.counts == std::vector<std::size_t>{1, 1});
  }
  SUBCASE("exact tie goes to the lowest index") {
    CHECK(assign({{5}}, ClusterHead({{0}, {10}})).cluster_of == std::vector<std::size_t>{0});
    CHECK(assign({{5}}, ClusterHead({{10}, {0}})).cluster_of == std::vector<std::size_t>{0});
  }
  SUBCASE("hand distances") {
    const auto a = assign({{1}, {2}, {9}}, ClusterHead({{0}, {10}}));
    CHECK(a.cluster_of == std::vector<std::size_t>{0, 0, 1});
    CHECK(a.counts == std::vector<std::size_t>{2, 1});
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(assign({{1, 2}}, ClusterHead({{0}, {10}})), dimension_error);
  }
}

TEST_CASE("kmeans_loss hand cases") {
  CHECK(kmeans_loss({{0, 1}, {3, 3}}, ClusterHead({{0, 1}, {3, 3}})).value == 0.0);
  CHECK(kmeans_loss({{1}}, ClusterHead({{0}, {2}})).value == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(kmeans_loss({{1}, {3}}, ClusterHead({{0}, {4}})).value == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(kmeans_loss(Matrix(0, 1), ClusterHead({{0}, {4}})), precondition_error);
}

TEST_CASE("kmeans_backward hand cases") {
  SUBCASE("points on their means give zero gradients") {
    ClusterHead head({{1, 1}, {4, 0}});
    const Matrix x{{1, 1}, {4, 0}, {4, 0}};
    const auto loss = kmeans_loss(x, head);
    const Matrix gx = kmeans_backward(x, head, loss.assignment);
    CHECK(gx == Matrix(3, 2));
    CHECK(head.grad_weights == Matrix(2, 2));
  }
  SUBCASE("single point") {
    ClusterHead head({{0}, {9}});
    const Matrix x{{1}};
    const Matrix gx = kmeans_backward(x, head, kmeans_loss(x, head).assignment);
    CHECK(head.grad_weights == Matrix{{-1}, {0}});
    CHECK(gx == Matrix{{1}});
  }
  SUBCASE("stale assignment") {
    ClusterHead head({{0}, {9}});
    const auto stale = assign({{1}, {2}}, head);
    CHECK_THROWS_AS(kmeans_backward({{1}}, head, stale), precondition_error);
  }
}

TEST_CASE("kmeans gradients match finite differences away from ties") {
  std::mt19937_64 rng(2024);
  int checked = 0;
  while (checked < 25) {
    std::uniform_int_distribution<int> n_dist(1, 8), d_dist(1, 5), k_dist(2, 4);
    const std::size_t n = n_dist(rng), d = d_dist(rng), k = k_dist(rng);
    const Matrix x = random_matrix(n, d, rng);
    const Matrix w = random_matrix(k, d, rng);
    if (tie_margin(x, w) <= 1e-3) continue;
    ++checked;

    auto f_w = [&](const Matrix& weights, Matrix* grad) {
      ClusterHead head(weights);
      const auto loss = kmeans_loss(x, head);
      if (grad) {
        kmeans_backward(x, head, loss.assignment);
        *grad = head.grad_weights;
      }
      return loss.value;
    };
    auto f_x = [&](const Matrix& points, Matrix* grad) {
      ClusterHead head(w);
      const auto loss = kmeans_loss(points, head);
      if (grad) *grad = kmeans_backward(points, head, loss.assignment);
      return loss.value;
    };
    CHECK(grad_check(f_w, w).max_rel_error < 1e-5);
    CHECK(grad_check(f_x, x).max_rel_error < 1e-5);
  }
}

TEST_CASE("l2_reg") {
  CHECK(l2_reg(ClusterHead(Matrix(2, 3))).value == 0.0);
  const auto p = l2_reg(ClusterHead(Matrix{{1, 2}}));
  CHECK(p.value == 5.0);
  CHECK(p.grad == Matrix{{2, 4}});

  std::mt19937_64 rng(8);
  const double alpha_r = 0.25;
  const Matrix w = random_matrix(3, 4, rng);
  auto f = [&](const Matrix& weights, Matrix* grad) {
    const auto pen = l2_reg(ClusterHead(weights));
    if (grad) {
      *grad = pen.grad;
      for (double& v : grad->values()) v *= alpha_r;
    }
    return alpha_r * pen.value;
  };
  CHECK(grad_check(f, w).max_rel_error < 1e-6);
}

TEST_CASE("balance_metric hand cases") {
  CHECK(balance_metric(make_assignment({0, 0, 1, 1}, 2), 4) == 0.0);
  CHECK(balance_metric(make_assignment({0, 0, 0, 0}, 2), 4) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std::abs(balance_metric(make_assignment({0, 0, 0, 1, 1, 2}, 3), 6) - 4.0 / 18.0) < 1e-12);
  CHECK_THROWS_AS(balance_metric(make_assignment({0, 1}, 2), 3), precondition_error);
  CHECK_THROWS_AS(balance_metric(make_assignment({}, 2), 0), precondition_error);
}

TEST_CASE("balance_metric is zero iff counts are equal and maximal when degenerate") {
  // Every assignment of N=6 points to K=2 clusters.
  const std::size_t n = 6;
  double max_value = -1.0;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    std::vector<std::size_t> of(n);
    for (std::size_t i = 0; i < n; ++i) of[i] = (mask >> i) & 1u;
    const auto a = make_assignment(of, 2);
    const double m = balance_metric(a, n);
    CHECK((m == 0.0) == (a.counts[0] == a.counts[1]));
    max_value = std::max(max_value, m);
  }
  CHECK(balance_metric(make_assignment(std::vector<std::size_t>(n, 1), 2), n) == max_value);
}

TEST_CASE("kmeans_loss invariants") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = random_matrix(7, 3, rng);
    const Matrix w = random_matrix(3, 3, rng);
    const double base = kmeans_loss(x, ClusterHead(w)).value;

    SUBCASE("permuting cluster rows") {
      std::vector<std::size_t> perm{2, 0, 1};
      CHECK(kmeans_loss(x, ClusterHead(gather_rows(w, perm))).value == doctest::Approx(base).epsilon(1e-14));
    }
    SUBCASE("moving a mean to its centroid never increases the loss") {
      const auto a = assign(x, ClusterHead(w));
      for (std::size_t k = 0; k < w.rows(); ++k) {
        if (a.counts[k] == 0) continue;
        Matrix moved = w;
        auto row = moved.row(k);
        std::fill(row.begin(), row.end(), 0.0);
        for (std::size_t n = 0; n < x.rows(); ++n) {
          if (a.cluster_of[n] != k) continue;
          for (std::size_t d = 0; d < x.cols(); ++d) row[d] += x(n, d) / static_cast<double>(a.counts[k]);
        }
        // Loss under the fixed assignment, evaluated directly.
        double fixed = 0.0;
        for (std::size_t n = 0; n < x.rows(); ++n) fixed += squared_distance(x.row(n), moved.row(a.cluster_of[n]));
        fixed /= 2.0 * static_cast<double>(x.rows());
        CHECK(fixed <= base + 1e-15);
        CHECK(kmeans_loss(x, ClusterHead(moved)).value <= fixed + 1e-15);
      }
    }
    SUBCASE("scaling points and means together keeps assignments") {
      Matrix xs = x, ws = w;
      for (double& v : xs.values()) v *= 3.5;
      for (double& v : ws.values()) v *= 3.5;
      CHECK(assign(xs, ClusterHead(ws)).cluster_of == assign(x, ClusterHead(w)).cluster_of);
    }
  }
  SUBCASE("one mean per point") {
    const Matrix x = random_matrix(5, 4, rng);
    CHECK(kmeans_loss(x, ClusterHead(x)).value == 0.0);
  }
}

TEST_CASE("init_clusters") {
  SUBCASE("deterministic per seed") {
    for (auto scheme : {ClusterInit::random_normal, ClusterInit::sample_points, ClusterInit::kmeanspp,
                        ClusterInit::lloyd}) {
      std::mt19937_64 rng(1);
      const Matrix pts = random_matrix(30, 4, rng);
      const auto a = init_clusters(4, 3, 42, scheme, &pts);
      const auto b = init_clusters(4, 3, 42, scheme, &pts);
      CHECK(a.weights == b.weights);
      CHECK(a.grad_weights == Matrix(3, 4));
    }
  }
  SUBCASE("random_normal spread and distinctness") {
    const auto head = init_clusters(16, 3, 7, ClusterInit::random_normal);
    CHECK(head.weights.rows() == 3);
    CHECK(head.weights.cols() == 16);
    CHECK(min_pairwise_distance(head.weights) > 1e-6);

    const auto big = init_clusters(500, 40, 3, ClusterInit::random_normal);
    double sum = 0.0, sq = 0.0;
    for (double v : big.weights.values()) {
      sum += v;
      sq += v * v;
    }
    const double n = static_cast<double>(big.weights.size());
    CHECK(std::abs(sum / n) < 0.005);
    CHECK(std::sqrt(sq / n) == doctest::Approx(0.1).epsilon(0.02));
  }
  SUBCASE("sample_points on three distinct rows is a permutation of them") {
    const Matrix pts{{0, 0}, {1, 0}, {0, 5}};
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto head = init_clusters(2, 3, seed, ClusterInit::sample_points, &pts);
      std::vector<std::vector<double>> got, want;
      for (std::size_t r = 0; r < 3; ++r) {
        got.emplace_back(head.weights.row(r).begin(), head.weights.row(r).end());
        want.emplace_back(pts.row(r).begin(), pts.row(r).end());
      }
      std::sort(got.begin(), got.end());
      std::sort(want.begin(), want.end());
      CHECK(got == want);
    }
  }
  SUBCASE("duplicates are never picked twice") {
    const Matrix pts{{1, 1}, {1, 1}, {1, 1}, {2, 2}};
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto head = init_clusters(2, 2, seed, ClusterInit::sample_points, &pts);
      CHECK(min_pairwise_distance(head.weights) > 1e-6);
    }
  }
  SUBCASE("too few distinct points") {
    const Matrix pts{{1, 1}, {1, 1}, {2, 2}};
    CHECK_THROWS_AS(init_clusters(2, 3, 0, ClusterInit::sample_points, &pts), init_error);
    CHECK_THROWS_AS(init_clusters(2, 3, 0, ClusterInit::kmeanspp, &pts), init_error);
    const Matrix two{{1, 1}, {2, 2}};
    CHECK_THROWS_AS(init_clusters(2, 3, 0, ClusterInit::sample_points, &two), init_error);
  }
  SUBCASE("K must be at least 2") {
    CHECK_THROWS_AS(init_clusters(4, 1, 0, ClusterInit::random_normal), precondition_error);
  }
  SUBCASE("point schemes need points") {
    CHECK_THROWS_AS(init_clusters(4, 2, 0, ClusterInit::sample_points), precondition_error);
  }
  SUBCASE("scheme names round-trip") {
    for (auto scheme : {ClusterInit::random_normal, ClusterInit::sample_points, ClusterInit::kmeanspp,
                        ClusterInit::lloyd}) {
      CHECK(parse_cluster_init(to_string(scheme)) == scheme);
    }
    CHECK_FALSE(parse_cluster_init("bogus").has_value());
  }
}
