#include "dkm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace dkm {

GradCheckInstance random_instance(std::uint64_t seed, const InstanceShape& shape) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  GradCheckInstance inst;
  inst.batch.features = Matrix(shape.n, shape.dim);
  for (double& v : inst.batch.features.values()) v = unit(rng);
  std::bernoulli_distribution coin(0.6);
  inst.batch.fg_flags.resize(shape.n);
  for (auto& f : inst.batch.fg_flags) f = coin(rng) ? 1 : 0;
  if (shape.n >= 2) {
    inst.batch.fg_flags[0] = 1;
    inst.batch.fg_flags[1] = 0;
  }
  inst.net = EmbeddingNet::random(shape.dim, shape.hidden, 0.5, rng);
  for (auto& layer : inst.net.hidden_layers()) {
    for (double& b : layer.bias.values()) b = 0.1 * unit(rng);
  }
  Matrix w(shape.k, inst.net.embed_dim());
  for (double& v : w.values()) v = unit(rng);
  inst.head = ClusterHead(std::move(w));
  return inst;
}

KinkMargins kink_margins(const GradCheckInstance& inst) {
  KinkMargins m{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  const auto acts = inst.net.forward(inst.batch.features);
  for (const auto& z : acts.preacts) {
    for (double v : z.values()) m.relu = std::min(m.relu, std::abs(v));
  }
  for (std::size_t n = 0; n < inst.batch.size(); ++n) {
    if (inst.batch.fg_flags[n] != 1) continue;
    double first = std::numeric_limits<double>::infinity();
    double second = first;
    for (std::size_t k = 0; k < inst.head.num_clusters(); ++k) {
      const double d = squared_distance(acts.embedding.row(n), inst.head.weights.row(k));
      if (d < first) {
        second = first;
        first = d;
      } else if (d < second) {
        second = d;
      }
    }
    m.assignment = std::min(m.assignment, second - first);
  }
  return m;
}

bool is_non_degenerate(const GradCheckInstance& inst) {
  const KinkMargins m = kink_margins(inst);
  return m.relu > 1e-3 && m.assignment > 1e-3;
}

std::vector<ParamCheck> check_full_gradient(const GradCheckInstance& inst, double epsilon,
                                            bool corrupt_gradient) {
  EmbeddingNet net = inst.net;
  ClusterHead head = inst.head;
  auto params = all_parameters(net, head);

  std::vector<ParamCheck> out;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const std::string name = params[p].name;
    ScalarFunction f = [&, p](const Matrix& at, Matrix* grad) {
      EmbeddingNet trial_net = inst.net;
      ClusterHead trial_head = inst.head;
      auto trial = all_parameters(trial_net, trial_head);
      *trial[p].value = at;
      if (grad == nullptr) return evaluate_objective(inst.batch, trial_net, trial_head, inst.cfg).total;
      const double value = total_loss(inst.batch, trial_net, trial_head, inst.cfg).total;
      *grad = *trial[p].grad;
      if (corrupt_gradient && name == "clusters.weight") (*grad)(0, 0) += 0.01 + 0.1 * std::abs((*grad)(0, 0));
      return value;
    };
    out.push_back({name, grad_check(f, *params[p].value, epsilon)});
  }
  return out;
}

}  // namespace dkm
