#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dkm/cluster_head.hpp"
#include "dkm/data.hpp"
#include "dkm/diffmath.hpp"
#include "dkm/matrix.hpp"

namespace dkm {

struct TrainConfig {
  double alpha_r = 0.01;  // weight of the cluster-weight L2 term; see README on 0.25
  double alpha_c = 1.0;   // weight of the fg/bg cross-entropy term
  double learning_rate = 0.045;
  double rms_decay = 0.9;
  double momentum = 0.9;
  double epsilon = 1.0;
  std::size_t k = 3;
  std::size_t batch_size = 64;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden_dims{128, 64};
  ClusterInit cluster_init = ClusterInit::lloyd;
  double init_stddev = 0.1;
  // Optional L2 decay on network weight matrices (not biases, not clusters).
  double weight_decay = 0.0;
  // Train only the cluster weights; network layers stay at their initial values.
  bool freeze_net = false;
  // When > 0, the cluster head is re-initialised from the foreground
  // embeddings after this many epochs. No effect when above epochs.
  std::size_t cluster_warmup = 3;

  // Throws config_error naming the first invalid field.
  void validate() const;
};

/// Gradient buffers and values of one trainable tensor.
struct ParamRef {
  std::string name;
  Matrix* value = nullptr;
  Matrix* grad = nullptr;
};

/// Stack of affine+ReLU layers. The output of the last one is the embedding
/// that the cluster head operates on; a final affine layer maps it to two
/// fg/bg logits.
class EmbeddingNet {
 public:
  struct Activations {
    std::vector<Matrix> inputs;   // input to each hidden layer
    std::vector<Matrix> preacts;  // affine output of each hidden layer, before ReLU
    Matrix embedding;
    Matrix logits;
  };

  EmbeddingNet() = default;
  EmbeddingNet(std::vector<AffineLayer> hidden, AffineLayer classifier);

  static EmbeddingNet random(std::size_t input_dim, std::span<const std::size_t> hidden_dims,
                             double stddev, std::mt19937_64& rng);

  std::size_t input_dim() const;
  std::size_t embed_dim() const;

  Activations forward(const Matrix& x) const;
  Matrix embed(const Matrix& x) const;

  // Accumulates parameter gradients given dL/dlogits and an additional
  // dL/dembedding from the cluster head (may be empty, meaning zero).
  void backward(const Activations& acts, const Matrix& grad_logits, const Matrix& grad_embedding);

  void zero_grad();
  std::vector<ParamRef> parameters();

  std::vector<AffineLayer>& hidden_layers() noexcept { return hidden_; }
  const std::vector<AffineLayer>& hidden_layers() const noexcept { return hidden_; }
  AffineLayer& classifier() noexcept { return classifier_; }
  const AffineLayer& classifier() const noexcept { return classifier_; }

 private:
  std::vector<AffineLayer> hidden_;
  AffineLayer classifier_;
};

// Network parameters followed by the cluster weights ("clusters.weight").
std::vector<ParamRef> all_parameters(EmbeddingNet& net, ClusterHead& head);

struct LossComponents {
  double total = 0.0;         // kmeans + alpha_r l2 + alpha_c xent + weight_decay term
  double kmeans = 0.0;        // L_k over foreground rows, 0 when there are none
  double l2 = 0.0;            // sum of squared cluster weights
  double xent = 0.0;          // L_C over all rows
  double decay = 0.0;         // weight_decay * sum of squared network weights
  double balance = 0.0;       // M_C over the foreground rows
  double fg_accuracy = 0.0;   // classifier accuracy over all rows
  std::size_t fg_count = 0;
};

/// Combined objective L = L_k + alpha_r L_2 + alpha_c L_C. L_k and its
/// gradients only see foreground-flagged rows. Zeroes and then fills the
/// gradient buffers of net and head.
LossComponents total_loss(const SampleBatch& batch, EmbeddingNet& net, ClusterHead& head,
                          const TrainConfig& cfg);

// Same value as total_loss without touching gradient buffers.
LossComponents evaluate_objective(const SampleBatch& batch, const EmbeddingNet& net,
                                  const ClusterHead& head, const TrainConfig& cfg);

struct RmsSlot {
  Matrix mean_square;
  Matrix momentum;
};

/// Non-centred RMSProp with classic momentum:
///   ms  <- decay ms + (1 - decay) g^2
///   mom <- momentum mom + lr g / sqrt(ms + eps)
///   p   <- p - mom
void rmsprop_step(Matrix& param, const Matrix& grad, RmsSlot& slot, const TrainConfig& cfg);

class RmsState {
 public:
  RmsState() = default;
  explicit RmsState(std::span<const ParamRef> params);

  void step(std::span<const ParamRef> params, const TrainConfig& cfg);
  // Zeroes the accumulators of parameter i.
  void reset(std::size_t i);
  const std::vector<RmsSlot>& slots() const noexcept { return slots_; }

 private:
  std::vector<RmsSlot> slots_;
};

struct EpochStats {
  std::size_t epoch = 0;  // 0 is the state before any update
  double loss = 0.0;
  double kmeans = 0.0;
  double xent = 0.0;
  double balance = 0.0;
  double fg_accuracy = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::vector<std::string> warnings;
};

// Header epoch,L,L_k,L_C,M_C,fg_accuracy.
void write_history_csv(std::ostream& out, const TrainHistory& history);

struct TrainedModel {
  EmbeddingNet net;
  ClusterHead head;
  TrainHistory history;
};

/// Seeded mini-batch RMSProp training of network and cluster head. Epoch
/// statistics are computed over the whole training set after each epoch.
/// Throws divergence_error if the loss becomes non-finite.
TrainedModel train(const SampleBatch& data, const TrainConfig& cfg,
                   std::optional<EmbeddingNet> initial_net = std::nullopt);

}  // namespace dkm
