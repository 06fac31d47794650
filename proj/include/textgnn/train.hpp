#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "textgnn/checkpoint.hpp"
#include "textgnn/graph.hpp"
#include "textgnn/model.hpp"
#include "textgnn/pairs.hpp"
#include "textgnn/rng.hpp"

namespace textgnn {

struct RelevanceExample {
  NodeRecord query;
  NodeRecord keyword;
  std::optional<double> teacher_score;  // distillation target in [0,1]
  std::optional<int> binary_label;      // fine-tune target
};

enum class TrainStage { kDistill, kFinetune };

struct TrainConfig {
  TrainStage stage = TrainStage::kDistill;
  int epochs = 10;
  int batch_size = 16;
  Real learning_rate = Real(1e-3);
  std::uint64_t seed = 0;
  std::string checkpoint_prefix;  // when set, the checkpoint is rewritten after every epoch

  void validate() const {
    if (epochs < 1) throw DataError("train config: epochs must be >= 1");
    if (batch_size < 1) throw DataError("train config: batch_size must be >= 1");
  }
};

// Squared error against the teacher score; the batch loss is the mean.
inline TensorPtr distill_loss(Tape& tape, const TensorPtr& pred, double teacher) {
  if (!pred->is_scalar()) throw ContractError("distill_loss: prediction must be scalar");
  if (teacher < 0.0 || teacher > 1.0)
    throw DataError("teacher score " + std::to_string(teacher) + " outside [0,1]");
  auto diff = sub(tape, pred, Tensor::scalar(static_cast<Real>(teacher)));
  return mul(tape, diff, diff);
}

// Binary cross-entropy with the prediction clamped to [1e-7, 1-1e-7] before
// the logs; gradient is zero where the clamp is active.
inline TensorPtr finetune_loss(Tape& tape, const TensorPtr& pred, int label) {
  if (!pred->is_scalar()) throw ContractError("finetune_loss: prediction must be scalar");
  if (label != 0 && label != 1)
    throw DataError("binary label must be 0 or 1, got " + std::to_string(label));
  constexpr Real lo = Real(1e-7);
  constexpr Real hi = Real(1) - Real(1e-7);
  bool track = tape.recording() && pred->requires_grad;
  auto out = Tensor::zeros({1});
  const Real p = std::clamp(pred->data[0], lo, hi);
  out->data[0] = label ? -std::log(p) : -std::log(Real(1) - p);
  if (track) {
    out->requires_grad = true;
    out->alloc_grad();
    tape.record([pred, out, label, p, lo, hi] {
      if (pred->data[0] < lo || pred->data[0] > hi) return;  // clamped: no gradient
      pred->alloc_grad();
      const Real d = label ? -Real(1) / p : Real(1) / (Real(1) - p);
      pred->grad[0] += out->grad[0] * d;
    });
  }
  return out;
}

// ---- example assembly ----

inline NodeRecord node_record(const std::string& text, Side side, const BehaviorGraph* graph) {
  NodeRecord rec;
  rec.text = text;
  rec.side = side;
  if (graph != nullptr) {
    if (const auto* nb = graph->find(side, normalize_text(text))) rec.neighbors = *nb;
  }
  return rec;
}

inline std::vector<RelevanceExample> examples_from_scored(const std::vector<ScoredPair>& pairs,
                                                          const BehaviorGraph* graph) {
  std::vector<RelevanceExample> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    RelevanceExample ex;
    ex.query = node_record(p.query, Side::kQuery, graph);
    ex.keyword = node_record(p.keyword, Side::kKeyword, graph);
    ex.teacher_score = p.teacher;
    out.push_back(std::move(ex));
  }
  return out;
}

inline std::vector<RelevanceExample> examples_from_binary(const std::vector<BinaryPair>& pairs,
                                                          const BehaviorGraph* graph) {
  std::vector<RelevanceExample> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    RelevanceExample ex;
    ex.query = node_record(p.query, Side::kQuery, graph);
    ex.keyword = node_record(p.keyword, Side::kKeyword, graph);
    ex.binary_label = p.label;
    out.push_back(std::move(ex));
  }
  return out;
}

inline PreparedNode prepare_from_record(const TextGnnModel& model, const NodeRecord& rec) {
  PreparedNode node;
  node.center = model.prepare(rec.text);
  if (!model.config().use_graph) return node;
  for (std::size_t i = 0; i < rec.neighbors.size() && i < 3; ++i) {
    node.neighbors[i] = model.prepare(rec.neighbors[i].text);
    node.neighbor_mask[i] = true;
  }
  return node;
}

struct TrainResult {
  std::vector<double> epoch_losses;  // mean per-example loss per epoch
};

// Shuffled mini-batch training with Adam. Deterministic: shuffles and the
// optimizer state are functions of (seed, data, config) only.
inline TrainResult train(TextGnnModel& model, const std::vector<RelevanceExample>& examples,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (examples.empty()) throw DataError("train: no examples");
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    if (!ex.teacher_score && !ex.binary_label)
      throw DataError("example " + std::to_string(i) + " carries neither target");
    if (cfg.stage == TrainStage::kDistill && !ex.teacher_score)
      throw DataError("distill stage: example " + std::to_string(i) + " lacks a teacher score");
    if (cfg.stage == TrainStage::kFinetune && !ex.binary_label)
      throw DataError("finetune stage: example " + std::to_string(i) + " lacks a binary label");
  }

  // tokenize once up front
  std::vector<std::pair<PreparedNode, PreparedNode>> prepared;
  prepared.reserve(examples.size());
  for (const auto& ex : examples)
    prepared.emplace_back(prepare_from_record(model, ex.query),
                          prepare_from_record(model, ex.keyword));

  AdamState adam;
  adam.lr = cfg.learning_rate;
  zero_grads(model.parameters());

  TrainResult result;
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    CounterRng shuffle_rng(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0;
    long batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Tape tape;
      TensorPtr batch_sum;
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = examples[order[i]];
        auto pred = model.score(tape, prepared[order[i]].first, prepared[order[i]].second);
        auto loss = cfg.stage == TrainStage::kDistill
                        ? distill_loss(tape, pred, *ex.teacher_score)
                        : finetune_loss(tape, pred, *ex.binary_label);
        batch_sum = batch_sum ? add(tape, batch_sum, loss) : loss;
      }
      auto batch_loss = scale(tape, batch_sum, Real(1) / static_cast<Real>(end - start));
      const double loss_value = static_cast<double>(batch_loss->data[0]);
      if (!std::isfinite(loss_value))
        throw NumericError("training divergence: non-finite loss in epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(batch_index));
      epoch_loss += loss_value * static_cast<double>(end - start);
      tape.backward(batch_loss);
      adam_step(model.parameters(), adam);
      zero_grads(model.parameters());
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(examples.size()));
    if (!cfg.checkpoint_prefix.empty()) save_checkpoint(model, cfg.checkpoint_prefix);
  }
  return result;
}

}  // namespace textgnn
