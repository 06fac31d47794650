#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "textgnn/aggregate.hpp"
#include "textgnn/encoder.hpp"
#include "textgnn/graph.hpp"
#include "textgnn/params.hpp"
#include "textgnn/tokenize.hpp"

namespace textgnn {

enum class SkipMode { kConcat, kAdd };

struct ModelConfig {
  EncoderConfig encoder;
  AggregatorConfig aggregator;
  SkipMode skip_mode = SkipMode::kConcat;
  bool share_across_towers = true;
  bool use_graph = false;
  int crossing_hidden_dim = 64;
  int vocab_min_count = 1;
  int vocab_max_size = 30000;

  int tower_output_dim() const {
    if (!use_graph || skip_mode == SkipMode::kAdd) return encoder.output_dim;
    return 2 * encoder.output_dim;
  }

  void validate() const {
    encoder.validate();
    if (use_graph) aggregator.validate(encoder.output_dim);
    if (crossing_hidden_dim < 1) throw ContractError("crossing_hidden_dim must be positive");
  }
};

// ---- config JSON ----

inline nlohmann::json model_config_to_json(const ModelConfig& m) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["encoder"] = {
      {"kind", m.encoder.kind == EncoderKind::kCdssm ? "cdssm" : "mini_transformer"},
      {"embed_dim", m.encoder.embed_dim},
      {"hidden_dim", m.encoder.hidden_dim},
      {"output_dim", m.encoder.output_dim},
      {"n_layers", m.encoder.n_layers},
      {"n_heads", m.encoder.n_heads},
      {"conv_window", m.encoder.conv_window},
      {"max_seq_len", m.encoder.max_seq_len},
      {"trigram_buckets", m.encoder.trigram_buckets},
  };
  const char* agg_kind = m.aggregator.kind == AggregatorKind::kGat   ? "gat"
                         : m.aggregator.kind == AggregatorKind::kGcn ? "gcn"
                                                                     : "mean";
  j["aggregator"] = {
      {"kind", agg_kind},
      {"gat_heads", m.aggregator.gat_heads},
      {"leaky_relu_slope", m.aggregator.leaky_relu_slope},
      {"include_self", m.aggregator.include_self},
      {"output_dim", m.aggregator.output_dim},
  };
  j["skip_mode"] = m.skip_mode == SkipMode::kConcat ? "concat" : "add";
  j["share_across_towers"] = m.share_across_towers;
  j["use_graph"] = m.use_graph;
  j["crossing_hidden_dim"] = m.crossing_hidden_dim;
  j["vocab_min_count"] = m.vocab_min_count;
  j["vocab_max_size"] = m.vocab_max_size;
  return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig m;
  if (j.contains("schema_version") && j.at("schema_version").get<int>() != 1)
    throw DataError("unsupported model config schema_version");
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    if (e.contains("kind")) {
      const std::string k = e.at("kind").get<std::string>();
      if (k == "cdssm")
        m.encoder.kind = EncoderKind::kCdssm;
      else if (k == "mini_transformer")
        m.encoder.kind = EncoderKind::kMiniTransformer;
      else
        throw DataError("unknown encoder kind '" + k + "'");
    }
    if (e.contains("embed_dim")) m.encoder.embed_dim = e.at("embed_dim").get<int>();
    if (e.contains("hidden_dim")) m.encoder.hidden_dim = e.at("hidden_dim").get<int>();
    if (e.contains("output_dim")) m.encoder.output_dim = e.at("output_dim").get<int>();
    if (e.contains("n_layers")) m.encoder.n_layers = e.at("n_layers").get<int>();
    if (e.contains("n_heads")) m.encoder.n_heads = e.at("n_heads").get<int>();
    if (e.contains("conv_window")) m.encoder.conv_window = e.at("conv_window").get<int>();
    if (e.contains("max_seq_len")) m.encoder.max_seq_len = e.at("max_seq_len").get<int>();
    if (e.contains("trigram_buckets"))
      m.encoder.trigram_buckets = e.at("trigram_buckets").get<int>();
  }
  if (j.contains("aggregator")) {
    const auto& a = j.at("aggregator");
    if (a.contains("kind")) {
      const std::string k = a.at("kind").get<std::string>();
      if (k == "gat")
        m.aggregator.kind = AggregatorKind::kGat;
      else if (k == "gcn")
        m.aggregator.kind = AggregatorKind::kGcn;
      else if (k == "mean")
        m.aggregator.kind = AggregatorKind::kMean;
      else
        throw DataError("unknown aggregator kind '" + k + "'");
    }
    if (a.contains("gat_heads")) m.aggregator.gat_heads = a.at("gat_heads").get<int>();
    if (a.contains("leaky_relu_slope"))
      m.aggregator.leaky_relu_slope = a.at("leaky_relu_slope").get<Real>();
    if (a.contains("include_self")) m.aggregator.include_self = a.at("include_self").get<bool>();
    if (a.contains("output_dim")) m.aggregator.output_dim = a.at("output_dim").get<int>();
  }
  if (j.contains("skip_mode")) {
    const std::string s = j.at("skip_mode").get<std::string>();
    if (s == "concat")
      m.skip_mode = SkipMode::kConcat;
    else if (s == "add")
      m.skip_mode = SkipMode::kAdd;
    else
      throw DataError("unknown skip_mode '" + s + "'");
  }
  if (j.contains("share_across_towers"))
    m.share_across_towers = j.at("share_across_towers").get<bool>();
  if (j.contains("use_graph")) m.use_graph = j.at("use_graph").get<bool>();
  if (j.contains("crossing_hidden_dim"))
    m.crossing_hidden_dim = j.at("crossing_hidden_dim").get<int>();
  if (j.contains("vocab_min_count")) m.vocab_min_count = j.at("vocab_min_count").get<int>();
  if (j.contains("vocab_max_size")) m.vocab_max_size = j.at("vocab_max_size").get<int>();
  m.validate();
  return m;
}

// ---- crossing layer ----

struct CrossingParams {
  TensorPtr w1, b1;   // [dx x hidden], [hidden]
  TensorPtr w2, b2;   // [hidden x dx], [dx]
  TensorPtr w_out;    // [dx]
  TensorPtr b_out;    // [1]
};

inline CrossingParams make_crossing_params(ParamRegistry& reg, int dx, int hidden,
                                           CounterRng& rng) {
  CrossingParams p;
  p.w1 = reg.xavier("cross.w1", {dx, hidden}, dx, hidden, rng);
  p.b1 = reg.zeros("cross.b1", {hidden});
  p.w2 = reg.xavier("cross.w2", {hidden, dx}, hidden, dx, rng);
  p.b2 = reg.zeros("cross.b2", {dx});
  p.w_out = reg.xavier("cross.w_out", {dx}, dx, 1, rng);
  p.b_out = reg.zeros("cross.b_out", {1});
  return p;
}

// y = F(x) + x with F a hidden ReLU map projected back to dim(x); the score
// is a logistic read-out of y.
inline TensorPtr crossing_residual(Tape& tape, const CrossingParams& p, const TensorPtr& x) {
  auto h = relu(tape, add_bias(tape, vecmat(tape, x, p.w1), p.b1));
  auto f = add_bias(tape, vecmat(tape, h, p.w2), p.b2);
  return add(tape, f, x);
}

inline TensorPtr crossing_score(Tape& tape, const CrossingParams& p, const TensorPtr& q,
                                const TensorPtr& k) {
  auto x = concat_vec(tape, {q, k});
  if (x->numel() != p.w1->shape[0])
    throw ShapeError("crossing_score: tower vectors " + shape_str(x->shape) +
                     " do not match crossing input dim " + std::to_string(p.w1->shape[0]));
  auto y = crossing_residual(tape, p, x);
  return sigmoid(tape, add(tape, dot(tape, p.w_out, y), p.b_out));
}

// ---- tower ----

// Text prepared for whichever encoder family the model uses.
struct NodeInput {
  TokenSequence tokens;              // transformer path
  std::vector<SparseCounts> trigrams;  // cdssm path
};

struct PreparedNode {
  NodeInput center;
  std::array<NodeInput, 3> neighbors;
  std::array<bool, 3> neighbor_mask = {false, false, false};
};

struct TowerParams {
  CdssmParams cdssm;
  TransformerParams tf;
  AggregatorParams agg;
  TensorPtr rescale_w, rescale_b;  // present only when dims differ
};

class TextGnnModel {
 public:
  TextGnnModel(ModelConfig cfg, Vocabulary vocab, std::uint64_t seed)
      : cfg_(std::move(cfg)), vocab_(std::move(vocab)), seed_(seed) {
    cfg_.validate();
    if (cfg_.encoder.kind == EncoderKind::kMiniTransformer && vocab_.size() < 4)
      throw ContractError("transformer encoder needs a vocabulary");
    CounterRng rng(seed, /*stream=*/0xC0FFEE);
    if (cfg_.share_across_towers) {
      q_tower_ = build_tower("tower", rng);
      k_tower_ = q_tower_;
    } else {
      q_tower_ = build_tower("q_tower", rng);
      k_tower_ = build_tower("k_tower", rng);
    }
    const int dx = 2 * cfg_.tower_output_dim();
    cross_ = make_crossing_params(reg_, dx, cfg_.crossing_hidden_dim, rng);
  }

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<TensorPtr>& parameters() const { return reg_.all(); }
  const CrossingParams& crossing() const { return cross_; }

  NodeInput prepare(const std::string& text) const {
    NodeInput in;
    if (cfg_.encoder.kind == EncoderKind::kCdssm) {
      in.trigrams = trigram_counts_per_word(text, cfg_.encoder.trigram_buckets);
    } else {
      in.tokens = tokenize(text, vocab_, /*add_special=*/true);
    }
    return in;
  }

  // Pulls the node's neighbor texts (when the model uses the graph) and
  // prepares everything for the tower.
  PreparedNode prepare_node(const std::string& text, const BehaviorGraph* graph, Side side) const {
    PreparedNode node;
    node.center = prepare(text);
    if (!cfg_.use_graph || graph == nullptr) return node;
    const auto* neighbors = graph->find(side, normalize_text(text));
    if (neighbors == nullptr) return node;
    for (std::size_t i = 0; i < neighbors->size() && i < 3; ++i) {
      node.neighbors[i] = prepare((*neighbors)[i].text);
      node.neighbor_mask[i] = true;
    }
    return node;
  }

  TensorPtr encode_center(Tape& tape, Side side, const NodeInput& in) const {
    return encode_one(tape, tower(side), in);
  }

  TensorPtr tower_forward(Tape& tape, Side side, const PreparedNode& node) const {
    const TowerParams& tp = tower(side);
    auto center = encode_one(tape, tp, node.center);
    if (!cfg_.use_graph) return center;

    NeighborBundle bundle;
    bundle.center = center;
    for (int i = 0; i < 3; ++i) {
      if (node.neighbor_mask[i]) {
        bundle.neighbors[i] = encode_one(tape, tp, node.neighbors[i]);
        bundle.neighbor_mask[i] = true;
      } else {
        bundle.neighbors[i] = Tensor::zeros({cfg_.encoder.output_dim});
      }
    }
    auto agg = aggregate(tape, tp.agg, cfg_.aggregator, bundle);
    if (tp.rescale_w) agg = add_bias(tape, vecmat(tape, agg, tp.rescale_w), tp.rescale_b);
    if (cfg_.skip_mode == SkipMode::kAdd) return add(tape, center, agg);
    return concat_vec(tape, {center, agg});
  }

  TensorPtr score(Tape& tape, const PreparedNode& query, const PreparedNode& keyword) const {
    auto q = tower_forward(tape, Side::kQuery, query);
    auto k = tower_forward(tape, Side::kKeyword, keyword);
    return crossing_score(tape, cross_, q, k);
  }

  TensorPtr score_from_vectors(Tape& tape, const TensorPtr& q_vec, const TensorPtr& k_vec) const {
    return crossing_score(tape, cross_, q_vec, k_vec);
  }

  double score_texts(const std::string& query, const std::string& keyword,
                     const BehaviorGraph* graph) const {
    Tape tape(false);
    auto q = prepare_node(query, graph, Side::kQuery);
    auto k = prepare_node(keyword, graph, Side::kKeyword);
    return static_cast<double>(score(tape, q, k)->data[0]);
  }

  // Deterministic text -> tower vector table for one side.
  std::vector<std::pair<std::string, std::vector<Real>>> export_tower_embeddings(
      const std::vector<std::string>& texts, Side side, const BehaviorGraph* graph) const {
    std::vector<std::pair<std::string, std::vector<Real>>> table;
    table.reserve(texts.size());
    for (const auto& text : texts) {
      Tape tape(false);
      auto vec = tower_forward(tape, side, prepare_node(text, graph, side));
      table.emplace_back(text, std::vector<Real>(vec->data.begin(), vec->data.end()));
    }
    return table;
  }

 private:
  TowerParams build_tower(const std::string& prefix, CounterRng& rng) {
    TowerParams tp;
    if (cfg_.encoder.kind == EncoderKind::kCdssm)
      tp.cdssm = make_cdssm_params(reg_, prefix + ".enc", cfg_.encoder, rng);
    else
      tp.tf = make_transformer_params(reg_, prefix + ".enc", cfg_.encoder, vocab_.size(), rng);
    if (cfg_.use_graph) {
      tp.agg = make_aggregator_params(reg_, prefix + ".agg", cfg_.aggregator,
                                      cfg_.encoder.output_dim, rng);
      const int agg_out = cfg_.aggregator.resolved_output_dim(cfg_.encoder.output_dim);
      if (agg_out != cfg_.encoder.output_dim) {
        tp.rescale_w = reg_.xavier(prefix + ".rescale.w", {agg_out, cfg_.encoder.output_dim},
                                   agg_out, cfg_.encoder.output_dim, rng);
        tp.rescale_b = reg_.zeros(prefix + ".rescale.b", {cfg_.encoder.output_dim});
      }
    }
    return tp;
  }

  const TowerParams& tower(Side side) const {
    return side == Side::kQuery ? q_tower_ : k_tower_;
  }

  TensorPtr encode_one(Tape& tape, const TowerParams& tp, const NodeInput& in) const {
    if (cfg_.encoder.kind == EncoderKind::kCdssm) return encode_cdssm(tape, tp.cdssm, in.trigrams);
    return encode_transformer(tape, tp.tf, in.tokens);
  }

  ModelConfig cfg_;
  Vocabulary vocab_;
  std::uint64_t seed_;
  ParamRegistry reg_;
  TowerParams q_tower_, k_tower_;
  CrossingParams cross_;
};

}  // namespace textgnn
