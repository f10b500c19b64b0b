#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dkm/cluster_head.hpp"
#include "dkm/data.hpp"
#include "dkm/diffmath.hpp"
#include "dkm/trainer.hpp"

namespace dkm {

/// A small random problem on which the full objective is checked against
/// finite differences.
struct GradCheckInstance {
  SampleBatch batch;
  EmbeddingNet net;
  ClusterHead head;
  TrainConfig cfg;
};

struct InstanceShape {
  std::size_t n = 8;     // samples
  std::size_t dim = 6;   // input width
  std::size_t k = 2;     // clusters
  std::vector<std::size_t> hidden{5, 4};
};

// Random inputs, fg flags with at least one fg and one bg row, network
// weights from N(0, 0.5^2), cluster weights from N(0, 1).
GradCheckInstance random_instance(std::uint64_t seed, const InstanceShape& shape);

/// Distance of the instance from the kinks of the objective: the smallest
/// |pre-activation| of any ReLU, and the smallest gap between the nearest and
/// second-nearest squared cluster distance of any foreground row.
struct KinkMargins {
  double relu = 0.0;
  double assignment = 0.0;
};
KinkMargins kink_margins(const GradCheckInstance& inst);

// True when both margins exceed 1e-3, the regime where finite differences
// of the piecewise-smooth objective are meaningful.
bool is_non_degenerate(const GradCheckInstance& inst);

struct ParamCheck {
  std::string name;
  GradCheckReport report;
};

/// Checks dL/dp for every parameter tensor p (network layers and cluster
/// weights) of total_loss against central differences with step epsilon.
/// corrupt_gradient perturbs the analytic cluster gradient, for negative
/// controls.
std::vector<ParamCheck> check_full_gradient(const GradCheckInstance& inst, double epsilon = 1e-4,
                                            bool corrupt_gradient = false);

}  // namespace dkm
