#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "textgnn/params.hpp"
#include "textgnn/tensor.hpp"

namespace textgnn {

enum class AggregatorKind { kGat, kGcn, kMean };

struct AggregatorConfig {
  AggregatorKind kind = AggregatorKind::kGat;
  int gat_heads = 2;
  Real leaky_relu_slope = Real(0.2);
  bool include_self = true;
  int output_dim = 0;  // 0: match the encoder output dim

  int resolved_output_dim(int encoder_dim) const { return output_dim > 0 ? output_dim : encoder_dim; }

  void validate(int encoder_dim) const {
    const int out = resolved_output_dim(encoder_dim);
    if (out < 1) throw ContractError("aggregator output dim must be positive");
    if (kind == AggregatorKind::kGat) {
      if (gat_heads < 1 || out % gat_heads != 0)
        throw ContractError("gat_heads must be >= 1 and divide the aggregator output dim");
    }
  }
};

// Center sentence vector plus exactly three neighbor slots; masked slots hold
// the zero vector. Zero through three live neighbors are all legal.
struct NeighborBundle {
  TensorPtr center;
  std::array<TensorPtr, 3> neighbors;
  std::array<bool, 3> neighbor_mask = {false, false, false};
};

inline NeighborBundle make_bundle(const TensorPtr& center, std::vector<TensorPtr> live_neighbors) {
  if (live_neighbors.size() > 3)
    throw ContractError("at most 3 neighbors per bundle, got " +
                        std::to_string(live_neighbors.size()));
  NeighborBundle b;
  b.center = center;
  const int d = center->numel();
  for (int i = 0; i < 3; ++i) {
    if (i < static_cast<int>(live_neighbors.size())) {
      b.neighbors[i] = live_neighbors[i];
      b.neighbor_mask[i] = true;
    } else {
      b.neighbors[i] = Tensor::zeros({d});  // dummy padding
    }
  }
  return b;
}

struct GatHeadParams {
  TensorPtr w;      // [in x dh]
  TensorPtr a_src;  // [dh]
  TensorPtr a_dst;  // [dh]
};

struct AggregatorParams {
  std::vector<GatHeadParams> heads;  // gat
  TensorPtr lin_w;                   // gcn: [in x out], mean: [2*in x out]
  TensorPtr lin_b;
};

inline AggregatorParams make_aggregator_params(ParamRegistry& reg, const std::string& prefix,
                                               const AggregatorConfig& cfg, int in_dim,
                                               CounterRng& rng) {
  cfg.validate(in_dim);
  const int out = cfg.resolved_output_dim(in_dim);
  AggregatorParams p;
  switch (cfg.kind) {
    case AggregatorKind::kGat: {
      const int dh = out / cfg.gat_heads;
      for (int h = 0; h < cfg.gat_heads; ++h) {
        const std::string hp = prefix + ".head" + std::to_string(h);
        GatHeadParams head;
        head.w = reg.xavier(hp + ".w", {in_dim, dh}, in_dim, dh, rng);
        head.a_src = reg.xavier(hp + ".a_src", {dh}, dh, 1, rng);
        head.a_dst = reg.xavier(hp + ".a_dst", {dh}, dh, 1, rng);
        p.heads.push_back(std::move(head));
      }
      break;
    }
    case AggregatorKind::kGcn:
      p.lin_w = reg.xavier(prefix + ".w", {in_dim, out}, in_dim, out, rng);
      p.lin_b = reg.zeros(prefix + ".b", {out});
      break;
    case AggregatorKind::kMean:
      p.lin_w = reg.xavier(prefix + ".w", {2 * in_dim, out}, 2 * in_dim, out, rng);
      p.lin_b = reg.zeros(prefix + ".b", {out});
      break;
  }
  return p;
}

namespace detail {

inline std::vector<TensorPtr> live_candidates(const NeighborBundle& b, bool include_self) {
  std::vector<TensorPtr> cands;
  if (include_self) cands.push_back(b.center);
  for (int i = 0; i < 3; ++i)
    if (b.neighbor_mask[i]) cands.push_back(b.neighbors[i]);
  return cands;
}

}  // namespace detail

// Per head: shared projection W, attention logit
// LeakyReLU(a_src . Wh_center + a_dst . Wh_j), softmax over the live
// candidate set, attention-weighted sum; heads concatenated, then ELU.
inline TensorPtr aggregate_gat(Tape& tape, const AggregatorParams& p, const AggregatorConfig& cfg,
                               const NeighborBundle& b) {
  auto cands = detail::live_candidates(b, cfg.include_self);
  if (cands.empty()) throw MaskError("aggregate_gat: no unmasked candidates and include_self=false");
  std::vector<TensorPtr> head_outs;
  head_outs.reserve(p.heads.size());
  for (const auto& head : p.heads) {
    auto u_center = vecmat(tape, b.center, head.w);
    auto src_score = dot(tape, head.a_src, u_center);
    std::vector<TensorPtr> logits, projected;
    logits.reserve(cands.size());
    for (const auto& cand : cands) {
      auto u = (cand == b.center) ? u_center : vecmat(tape, cand, head.w);
      projected.push_back(u);
      logits.push_back(
          leaky_relu(tape, add(tape, src_score, dot(tape, head.a_dst, u)), cfg.leaky_relu_slope));
    }
    auto alpha = masked_softmax(tape, stack_scalars(tape, logits),
                                std::vector<bool>(cands.size(), true));
    head_outs.push_back(vecmat(tape, alpha, stack_rows(tape, projected)));
  }
  return elu(tape, concat_vec(tape, head_outs));
}

// Symmetric star-graph normalization with self loops: center degree n+1,
// each neighbor degree 2, coefficients 1/(n+1) for self and
// 1/sqrt(2(n+1)) per neighbor; then shared linear + ELU.
inline TensorPtr aggregate_gcn(Tape& tape, const AggregatorParams& p, const AggregatorConfig& cfg,
                               const NeighborBundle& b) {
  auto cands = detail::live_candidates(b, cfg.include_self);
  if (cands.empty()) throw MaskError("aggregate_gcn: no unmasked candidates and include_self=false");
  const int n = static_cast<int>(cands.size()) - (cfg.include_self ? 1 : 0);
  std::vector<Real> coeffs;
  if (cfg.include_self) {
    coeffs.push_back(Real(1) / static_cast<Real>(n + 1));
    for (int i = 0; i < n; ++i)
      coeffs.push_back(Real(1) / std::sqrt(Real(2) * static_cast<Real>(n + 1)));
  } else {
    for (int i = 0; i < n; ++i) coeffs.push_back(Real(1) / std::sqrt(static_cast<Real>(n)));
  }
  const int n_cands = static_cast<int>(coeffs.size());
  auto weights = Tensor::from_data({n_cands}, std::move(coeffs));
  auto h_agg = vecmat(tape, weights, stack_rows(tape, cands));
  return elu(tape, add_bias(tape, vecmat(tape, h_agg, p.lin_w), p.lin_b));
}

// GraphSAGE-style: mean of live neighbors (zero vector when none),
// concatenated with the center, linear + ELU.
inline TensorPtr aggregate_mean(Tape& tape, const AggregatorParams& p, const AggregatorConfig&,
                                const NeighborBundle& b) {
  std::vector<TensorPtr> live;
  for (int i = 0; i < 3; ++i)
    if (b.neighbor_mask[i]) live.push_back(b.neighbors[i]);
  TensorPtr mean_vec;
  if (live.empty()) {
    mean_vec = Tensor::zeros({b.center->numel()});
  } else {
    const int n_live = static_cast<int>(live.size());
    std::vector<Real> w(live.size(), Real(1) / static_cast<Real>(n_live));
    auto weights = Tensor::from_data({n_live}, std::move(w));
    mean_vec = vecmat(tape, weights, stack_rows(tape, live));
  }
  auto cat = concat_vec(tape, {b.center, mean_vec});
  return elu(tape, add_bias(tape, vecmat(tape, cat, p.lin_w), p.lin_b));
}

inline TensorPtr aggregate(Tape& tape, const AggregatorParams& p, const AggregatorConfig& cfg,
                           const NeighborBundle& b) {
  switch (cfg.kind) {
    case AggregatorKind::kGat:
      return aggregate_gat(tape, p, cfg, b);
    case AggregatorKind::kGcn:
      return aggregate_gcn(tape, p, cfg, b);
    case AggregatorKind::kMean:
      return aggregate_mean(tape, p, cfg, b);
  }
  throw ContractError("unknown aggregator kind");
}

}  // namespace textgnn
