#include "dkm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "dkm/errors.hpp"
#include "dkm/format.hpp"

namespace dkm {

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw config_error(field + ": " + why);
  };
  if (!(learning_rate > 0.0)) fail("learning_rate", "must be > 0");
  if (!(rms_decay >= 0.0 && rms_decay < 1.0)) fail("rms_decay", "must lie in [0, 1)");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum", "must lie in [0, 1)");
  if (!(epsilon > 0.0)) fail("epsilon", "must be > 0");
  if (!(alpha_r >= 0.0)) fail("alpha_r", "must be >= 0");
  if (!(alpha_c >= 0.0)) fail("alpha_c", "must be >= 0");
  if (!(weight_decay >= 0.0)) fail("weight_decay", "must be >= 0");
  if (!(init_stddev > 0.0)) fail("init_stddev", "must be > 0");
  if (k < 2) fail("K", "must be >= 2");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (hidden_dims.empty()) fail("hidden_dims", "needs at least one layer");
  for (std::size_t d : hidden_dims) {
    if (d == 0) fail("hidden_dims", "layer widths must be positive");
  }
}

EmbeddingNet::EmbeddingNet(std::vector<AffineLayer> hidden, AffineLayer classifier)
    : hidden_(std::move(hidden)), classifier_(std::move(classifier)) {
  if (hidden_.empty()) throw precondition_error("EmbeddingNet: needs at least one hidden layer");
  for (std::size_t i = 1; i < hidden_.size(); ++i) {
    if (hidden_[i].in_dim() != hidden_[i - 1].out_dim()) {
      throw dimension_error("EmbeddingNet: layer " + std::to_string(i) + " input width does not match");
    }
  }
  if (classifier_.in_dim() != hidden_.back().out_dim() || classifier_.out_dim() != 2) {
    throw dimension_error("EmbeddingNet: classifier must map embedding to 2 logits, got " +
                          classifier_.weight.shape_string());
  }
}

EmbeddingNet EmbeddingNet::random(std::size_t input_dim, std::span<const std::size_t> hidden_dims,
                                  double stddev, std::mt19937_64& rng) {
  std::vector<AffineLayer> hidden;
  std::size_t in = input_dim;
  for (std::size_t width : hidden_dims) {
    hidden.push_back(AffineLayer::random(in, width, stddev, rng));
    in = width;
  }
  AffineLayer classifier = AffineLayer::random(in, 2, stddev, rng);
  return EmbeddingNet(std::move(hidden), std::move(classifier));
}

std::size_t EmbeddingNet::input_dim() const { return hidden_.front().in_dim(); }
std::size_t EmbeddingNet::embed_dim() const { return hidden_.back().out_dim(); }

EmbeddingNet::Activations EmbeddingNet::forward(const Matrix& x) const {
  Activations acts;
  acts.inputs.reserve(hidden_.size());
  acts.preacts.reserve(hidden_.size());
  Matrix h = x;
  for (const auto& layer : hidden_) {
    Matrix z = affine_forward(h, layer);
    acts.inputs.push_back(std::move(h));
    h = relu_forward(z);
    acts.preacts.push_back(std::move(z));
  }
  acts.logits = affine_forward(h, classifier_);
  acts.embedding = std::move(h);
  return acts;
}

Matrix EmbeddingNet::embed(const Matrix& x) const {
  Matrix h = x;
  for (const auto& layer : hidden_) h = relu_forward(affine_forward(h, layer));
  return h;
}

void EmbeddingNet::backward(const Activations& acts, const Matrix& grad_logits,
                            const Matrix& grad_embedding) {
  Matrix g = affine_backward(acts.embedding, classifier_, grad_logits);
  if (!grad_embedding.empty()) {
    require_same_shape(g, grad_embedding, "EmbeddingNet::backward");
    auto gv = g.values();
    auto ev = grad_embedding.values();
    for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += ev[i];
  }
  for (std::size_t i = hidden_.size(); i-- > 0;) {
    g = relu_backward(acts.preacts[i], g);
    // The input gradient of the first layer is never used.
    g = affine_backward(acts.inputs[i], hidden_[i], g, i > 0);
  }
}

void EmbeddingNet::zero_grad() {
  for (auto& layer : hidden_) layer.zero_grad();
  classifier_.zero_grad();
}

std::vector<ParamRef> EmbeddingNet::parameters() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < hidden_.size(); ++i) {
    const std::string prefix = "hidden." + std::to_string(i);
    out.push_back({prefix + ".weight", &hidden_[i].weight, &hidden_[i].grad_weight});
    out.push_back({prefix + ".bias", &hidden_[i].bias, &hidden_[i].grad_bias});
  }
  out.push_back({"classifier.weight", &classifier_.weight, &classifier_.grad_weight});
  out.push_back({"classifier.bias", &classifier_.bias, &classifier_.grad_bias});
  return out;
}

std::vector<ParamRef> all_parameters(EmbeddingNet& net, ClusterHead& head) {
  auto params = net.parameters();
  params.push_back({"clusters.weight", &head.weights, &head.grad_weights});
  return params;
}

namespace {

std::vector<std::size_t> foreground_rows(const SampleBatch& batch) {
  std::vector<std::size_t> rows;
  for (std::size_t n = 0; n < batch.fg_flags.size(); ++n) {
    if (batch.fg_flags[n] == 1) rows.push_back(n);
  }
  return rows;
}

void check_batch(const SampleBatch& batch, const EmbeddingNet& net, const ClusterHead& head) {
  if (batch.size() == 0) throw precondition_error("total_loss: empty batch");
  if (batch.fg_flags.size() != batch.size()) {
    throw dimension_error("total_loss: " + std::to_string(batch.fg_flags.size()) + " flags for " +
                          std::to_string(batch.size()) + " rows");
  }
  if (head.dim() != net.embed_dim()) {
    throw dimension_error("total_loss: cluster weights " + head.weights.shape_string() +
                          " do not match embedding width " + std::to_string(net.embed_dim()));
  }
}

double classifier_accuracy(const Matrix& logits, std::span<const std::uint8_t> flags) {
  std::size_t correct = 0;
  for (std::size_t n = 0; n < logits.rows(); ++n) {
    const std::uint8_t predicted = logits(n, 1) > logits(n, 0) ? 1 : 0;
    if (predicted == flags[n]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

double squared_network_weights(const EmbeddingNet& net) {
  double acc = 0.0;
  auto add = [&](const Matrix& w) {
    for (double v : w.values()) acc += v * v;
  };
  for (const auto& layer : net.hidden_layers()) add(layer.weight);
  add(net.classifier().weight);
  return acc;
}

// Shared forward pass; fills gradients only when net_grads/head_grads are given.
LossComponents objective(const SampleBatch& batch, const EmbeddingNet& net, const ClusterHead& head,
                         const TrainConfig& cfg, EmbeddingNet* net_grads, ClusterHead* head_grads) {
  check_batch(batch, net, head);
  LossComponents out;
  const auto acts = net.forward(batch.features);

  XentResult xent = softmax_xent(acts.logits, batch.fg_flags);
  out.xent = xent.loss;
  out.fg_accuracy = classifier_accuracy(acts.logits, batch.fg_flags);

  const auto fg = foreground_rows(batch);
  out.fg_count = fg.size();
  Matrix grad_embedding;
  if (!fg.empty()) {
    const Matrix fg_embedding = gather_rows(acts.embedding, fg);
    KMeansLoss km = kmeans_loss(fg_embedding, head);
    out.kmeans = km.value;
    out.balance = balance_metric(km.assignment, fg.size());
    if (head_grads != nullptr) {
      const Matrix grad_fg = kmeans_backward(fg_embedding, *head_grads, km.assignment);
      grad_embedding = Matrix(acts.embedding.rows(), acts.embedding.cols());
      for (std::size_t i = 0; i < fg.size(); ++i) {
        auto src = grad_fg.row(i);
        std::copy(src.begin(), src.end(), grad_embedding.row(fg[i]).begin());
      }
    }
  }

  L2Penalty l2 = l2_reg(head);
  out.l2 = l2.value;
  if (cfg.weight_decay > 0.0) out.decay = cfg.weight_decay * squared_network_weights(net);
  out.total = out.kmeans + cfg.alpha_r * out.l2 + cfg.alpha_c * out.xent + out.decay;

  if (head_grads != nullptr) {
    auto gw = head_grads->grad_weights.values();
    auto gl = l2.grad.values();
    for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += cfg.alpha_r * gl[i];
  }
  if (net_grads != nullptr) {
    for (double& g : xent.grad_logits.values()) g *= cfg.alpha_c;
    net_grads->backward(acts, xent.grad_logits, grad_embedding);
    if (cfg.weight_decay > 0.0) {
      auto add_decay = [&](AffineLayer& layer) {
        auto g = layer.grad_weight.values();
        auto w = layer.weight.values();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * cfg.weight_decay * w[i];
      };
      for (auto& layer : net_grads->hidden_layers()) add_decay(layer);
      add_decay(net_grads->classifier());
    }
  }
  return out;
}

}  // namespace

LossComponents total_loss(const SampleBatch& batch, EmbeddingNet& net, ClusterHead& head,
                          const TrainConfig& cfg) {
  net.zero_grad();
  head.zero_grad();
  return objective(batch, net, head, cfg, &net, &head);
}

LossComponents evaluate_objective(const SampleBatch& batch, const EmbeddingNet& net,
                                  const ClusterHead& head, const TrainConfig& cfg) {
  return objective(batch, net, head, cfg, nullptr, nullptr);
}

void rmsprop_step(Matrix& param, const Matrix& grad, RmsSlot& slot, const TrainConfig& cfg) {
  require_same_shape(param, grad, "rmsprop_step");
  require_same_shape(param, slot.mean_square, "rmsprop_step");
  require_same_shape(param, slot.momentum, "rmsprop_step");
  auto p = param.values();
  auto g = grad.values();
  auto ms = slot.mean_square.values();
  auto mom = slot.momentum.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    ms[i] = cfg.rms_decay * ms[i] + (1.0 - cfg.rms_decay) * g[i] * g[i];
    mom[i] = cfg.momentum * mom[i] + cfg.learning_rate * g[i] / std::sqrt(ms[i] + cfg.epsilon);
    p[i] -= mom[i];
  }
}

RmsState::RmsState(std::span<const ParamRef> params) {
  slots_.reserve(params.size());
  for (const auto& p : params) {
    slots_.push_back({Matrix(p.value->rows(), p.value->cols()), Matrix(p.value->rows(), p.value->cols())});
  }
}

void RmsState::step(std::span<const ParamRef> params, const TrainConfig& cfg) {
  if (params.size() != slots_.size()) {
    throw dimension_error("RmsState::step: " + std::to_string(params.size()) + " parameters for " +
                          std::to_string(slots_.size()) + " slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    rmsprop_step(*params[i].value, *params[i].grad, slots_[i], cfg);
  }
}

void RmsState::reset(std::size_t i) {
  if (i >= slots_.size()) throw precondition_error("RmsState::reset: no slot " + std::to_string(i));
  slots_[i].mean_square.fill(0.0);
  slots_[i].momentum.fill(0.0);
}

void write_history_csv(std::ostream& out, const TrainHistory& history) {
  out << "epoch,L,L_k,L_C,M_C,fg_accuracy\n";
  for (const auto& e : history.epochs) {
    out << e.epoch << ',' << format_double(e.loss) << ',' << format_double(e.kmeans) << ','
        << format_double(e.xent) << ',' << format_double(e.balance) << ','
        << format_double(e.fg_accuracy) << '\n';
  }
}

namespace {

// Seed streams derived from the run seed so that each consumer is independent.
constexpr std::uint64_t kNetStream = 0x6e6574;
constexpr std::uint64_t kClusterStream = 0x636c7573;
constexpr std::uint64_t kShuffleStream = 0x73687566;

EpochStats epoch_stats(std::size_t epoch, const SampleBatch& data, const EmbeddingNet& net,
                       const ClusterHead& head, const TrainConfig& cfg) {
  const LossComponents c = evaluate_objective(data, net, head, cfg);
  if (!std::isfinite(c.total)) {
    throw divergence_error("training diverged: non-finite loss in epoch " + std::to_string(epoch),
                           static_cast<int>(epoch));
  }
  return {epoch, c.total, c.kmeans, c.xent, c.balance, c.fg_accuracy};
}

ClusterHead initial_head(const SampleBatch& data, const EmbeddingNet& net, const TrainConfig& cfg,
                         TrainHistory& history) {
  const std::uint64_t seed = cfg.seed ^ kClusterStream;
  const auto fg = foreground_rows(data);
  if (cfg.cluster_init == ClusterInit::random_normal || fg.empty()) {
    return init_clusters(net.embed_dim(), cfg.k, seed, ClusterInit::random_normal);
  }
  const Matrix fg_embedding = net.embed(gather_rows(data.features, fg));
  try {
    return init_clusters(net.embed_dim(), cfg.k, seed, cfg.cluster_init, &fg_embedding);
  } catch (const init_error& e) {
    history.warnings.push_back(std::string(e.what()) + "; falling back to random_normal");
    return init_clusters(net.embed_dim(), cfg.k, seed, ClusterInit::random_normal);
  }
}

}  // namespace

TrainedModel train(const SampleBatch& data, const TrainConfig& cfg, std::optional<EmbeddingNet> initial_net) {
  cfg.validate();
  if (data.size() == 0) throw precondition_error("train: empty dataset");
  if (data.fg_flags.size() != data.size()) throw dimension_error("train: flag count does not match rows");

  TrainedModel model;
  const std::size_t n_fg = data.foreground_count();
  if (n_fg == 0) model.history.warnings.push_back("dataset has no foreground samples; clustering term is inactive");
  if (n_fg == data.size()) model.history.warnings.push_back("dataset has no background samples");

  if (initial_net) {
    if (initial_net->input_dim() != data.features.cols()) {
      throw dimension_error("train: initial network expects input width " +
                            std::to_string(initial_net->input_dim()) + ", data has " +
                            std::to_string(data.features.cols()));
    }
    model.net = std::move(*initial_net);
  } else {
    std::mt19937_64 net_rng(cfg.seed ^ kNetStream);
    model.net = EmbeddingNet::random(data.features.cols(), cfg.hidden_dims, cfg.init_stddev, net_rng);
  }
  model.head = initial_head(data, model.net, cfg, model.history);

  model.history.epochs.push_back(epoch_stats(0, data, model.net, model.head, cfg));

  std::vector<ParamRef> params = cfg.freeze_net
                                     ? std::vector<ParamRef>{{"clusters.weight", &model.head.weights,
                                                              &model.head.grad_weights}}
                                     : all_parameters(model.net, model.head);
  RmsState rms(params);

  std::mt19937_64 shuffle_rng(cfg.seed ^ kShuffleStream);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::span<const std::size_t> idx(order.data() + start, stop - start);
      SampleBatch batch{gather_rows(data.features, idx), {}};
      batch.fg_flags.reserve(idx.size());
      for (std::size_t i : idx) batch.fg_flags.push_back(data.fg_flags[i]);

      const LossComponents c = total_loss(batch, model.net, model.head, cfg);
      if (!std::isfinite(c.total)) {
        throw divergence_error("training diverged: non-finite loss in epoch " + std::to_string(epoch),
                               static_cast<int>(epoch));
      }
      rms.step(params, cfg);
    }
    if (epoch == cfg.cluster_warmup && n_fg > 0) {
      model.head = initial_head(data, model.net, cfg, model.history);
      rms.reset(params.size() - 1);
    }
    model.history.epochs.push_back(epoch_stats(epoch, data, model.net, model.head, cfg));
  }
  return model;
}

}  // namespace dkm
