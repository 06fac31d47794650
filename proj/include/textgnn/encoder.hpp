#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "textgnn/params.hpp"
#include "textgnn/tensor.hpp"
#include "textgnn/tokenize.hpp"

namespace textgnn {

enum class EncoderKind { kCdssm, kMiniTransformer };

struct EncoderConfig {
  EncoderKind kind = EncoderKind::kCdssm;
  int embed_dim = 64;
  int hidden_dim = 128;
  int output_dim = 64;
  int n_layers = 3;           // transformer
  int n_heads = 4;            // transformer
  int conv_window = 3;        // cdssm
  int max_seq_len = 16;       // transformer positional table size
  int trigram_buckets = 1024; // cdssm hashing width

  void validate() const {
    if (embed_dim < 1 || hidden_dim < 1 || output_dim < 1)
      throw ContractError("encoder dims must be positive");
    if (kind == EncoderKind::kMiniTransformer) {
      if (n_layers < 1) throw ContractError("transformer needs n_layers >= 1");
      if (n_heads < 1 || embed_dim % n_heads != 0)
        throw ContractError("n_heads must divide embed_dim");
      if (max_seq_len < 1) throw ContractError("max_seq_len must be positive");
    } else {
      if (conv_window < 1) throw ContractError("conv_window must be >= 1");
      if (trigram_buckets < 1) throw ContractError("trigram_buckets must be >= 1");
    }
  }
};

// ---- C-DSSM family: trigram projection -> 1-D conv + tanh -> global max
// pool -> dense tanh ----

struct CdssmParams {
  TensorPtr proj;    // [buckets x embed_dim]
  TensorPtr conv_w;  // [window*embed_dim x hidden_dim]
  TensorPtr conv_b;  // [hidden_dim]
  TensorPtr out_w;   // [hidden_dim x output_dim]
  TensorPtr out_b;   // [output_dim]
  int window = 3;
};

inline CdssmParams make_cdssm_params(ParamRegistry& reg, const std::string& prefix,
                                     const EncoderConfig& cfg, CounterRng& rng) {
  CdssmParams p;
  p.window = cfg.conv_window;
  p.proj = reg.xavier(prefix + ".proj", {cfg.trigram_buckets, cfg.embed_dim},
                      cfg.trigram_buckets, cfg.embed_dim, rng);
  const int win_in = cfg.conv_window * cfg.embed_dim;
  p.conv_w = reg.xavier(prefix + ".conv.w", {win_in, cfg.hidden_dim}, win_in, cfg.hidden_dim, rng);
  p.conv_b = reg.zeros(prefix + ".conv.b", {cfg.hidden_dim});
  p.out_w = reg.xavier(prefix + ".out.w", {cfg.hidden_dim, cfg.output_dim}, cfg.hidden_dim,
                       cfg.output_dim, rng);
  p.out_b = reg.zeros(prefix + ".out.b", {cfg.output_dim});
  return p;
}

// An empty word list encodes as a single all-zero position (the all-PAD
// window): defined output, not an error.
inline TensorPtr encode_cdssm(Tape& tape, const CdssmParams& p, std::vector<SparseCounts> words) {
  if (words.empty()) words.emplace_back();
  auto x = embed_bag(tape, p.proj, words);                    // [n x embed]
  auto win = window_concat(tape, x, p.window);                // [n x w*embed]
  auto conv = tanh_op(tape, add_bias(tape, matmul(tape, win, p.conv_w), p.conv_b));
  auto pooled = rowmax(tape, conv);                           // [hidden]
  return tanh_op(tape, add_bias(tape, vecmat(tape, pooled, p.out_w), p.out_b));
}

// ---- weighted-average pooling: learned scalar score per token, masked
// softmax over positions, convex combination of token vectors ----

inline TensorPtr weighted_average_pool(Tape& tape, const TensorPtr& token_vecs,
                                       const std::vector<bool>& mask, const TensorPtr& score_w) {
  auto scores = matvec(tape, token_vecs, score_w);  // [n]
  auto alpha = masked_softmax(tape, scores, mask);  // throws MaskError if all masked
  return vecmat(tape, alpha, token_vecs);
}

// ---- mini transformer: token + learned positional embeddings, n_layers of
// masked self-attention + FFN with residual/layer-norm, pooled ----

struct TransformerLayerParams {
  std::vector<TensorPtr> wq, wk, wv;  // per head, [d x dh]
  TensorPtr wo, bo;
  TensorPtr ln1_g, ln1_b;
  TensorPtr ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  TensorPtr ln2_g, ln2_b;
};

struct TransformerParams {
  TensorPtr tok_embed;  // [vocab x d]
  TensorPtr pos_embed;  // [max_seq_len x d]
  std::vector<TransformerLayerParams> layers;
  TensorPtr pool_w;     // [d]
  TensorPtr out_w;      // [d x output_dim]
  TensorPtr out_b;      // [output_dim]
  int n_heads = 1;
};

inline TransformerParams make_transformer_params(ParamRegistry& reg, const std::string& prefix,
                                                 const EncoderConfig& cfg, int vocab_size,
                                                 CounterRng& rng) {
  const int d = cfg.embed_dim;
  const int dh = d / cfg.n_heads;
  TransformerParams p;
  p.n_heads = cfg.n_heads;
  p.tok_embed = reg.xavier(prefix + ".tok_embed", {vocab_size, d}, vocab_size, d, rng);
  p.pos_embed = reg.xavier(prefix + ".pos_embed", {cfg.max_seq_len, d}, cfg.max_seq_len, d, rng);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string lp = prefix + ".layer" + std::to_string(l);
    TransformerLayerParams layer;
    for (int h = 0; h < cfg.n_heads; ++h) {
      const std::string hp = lp + ".head" + std::to_string(h);
      layer.wq.push_back(reg.xavier(hp + ".wq", {d, dh}, d, dh, rng));
      layer.wk.push_back(reg.xavier(hp + ".wk", {d, dh}, d, dh, rng));
      layer.wv.push_back(reg.xavier(hp + ".wv", {d, dh}, d, dh, rng));
    }
    layer.wo = reg.xavier(lp + ".wo", {d, d}, d, d, rng);
    layer.bo = reg.zeros(lp + ".bo", {d});
    layer.ln1_g = reg.ones(lp + ".ln1.g", {d});
    layer.ln1_b = reg.zeros(lp + ".ln1.b", {d});
    layer.ffn_w1 = reg.xavier(lp + ".ffn.w1", {d, cfg.hidden_dim}, d, cfg.hidden_dim, rng);
    layer.ffn_b1 = reg.zeros(lp + ".ffn.b1", {cfg.hidden_dim});
    layer.ffn_w2 = reg.xavier(lp + ".ffn.w2", {cfg.hidden_dim, d}, cfg.hidden_dim, d, rng);
    layer.ffn_b2 = reg.zeros(lp + ".ffn.b2", {d});
    layer.ln2_g = reg.ones(lp + ".ln2.g", {d});
    layer.ln2_b = reg.zeros(lp + ".ln2.b", {d});
    p.layers.push_back(std::move(layer));
  }
  p.pool_w = reg.xavier(prefix + ".pool.w", {d}, d, 1, rng);
  p.out_w = reg.xavier(prefix + ".out.w", {d, cfg.output_dim}, d, cfg.output_dim, rng);
  p.out_b = reg.zeros(prefix + ".out.b", {cfg.output_dim});
  return p;
}

inline TensorPtr transformer_layer(Tape& tape, const TransformerLayerParams& lp, const TensorPtr& x,
                                   const std::vector<bool>& mask) {
  const int d = x->shape[1];
  const int heads = static_cast<int>(lp.wq.size());
  const int dh = d / heads;
  const Real inv_sqrt_dh = Real(1) / std::sqrt(static_cast<Real>(dh));

  std::vector<TensorPtr> head_outs;
  head_outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    auto q = matmul(tape, x, lp.wq[h]);
    auto k = matmul(tape, x, lp.wk[h]);
    auto v = matmul(tape, x, lp.wv[h]);
    auto s = scale(tape, matmul(tape, q, transpose(tape, k)), inv_sqrt_dh);
    auto a = masked_softmax_rows(tape, s, mask);  // padded keys get zero weight
    head_outs.push_back(matmul(tape, a, v));
  }
  auto att = add_bias(tape, matmul(tape, concat_cols(tape, head_outs), lp.wo), lp.bo);
  auto x1 = layer_norm_rows(tape, add(tape, x, att), lp.ln1_g, lp.ln1_b);
  auto hidden = gelu(tape, add_bias(tape, matmul(tape, x1, lp.ffn_w1), lp.ffn_b1));
  auto f = add_bias(tape, matmul(tape, hidden, lp.ffn_w2), lp.ffn_b2);
  return layer_norm_rows(tape, add(tape, x1, f), lp.ln2_g, lp.ln2_b);
}

inline TensorPtr encode_transformer(Tape& tape, const TransformerParams& p,
                                    const TokenSequence& seq) {
  const int n = static_cast<int>(seq.ids.size());
  if (n == 0 || seq.real_token_count() == 0)
    throw MaskError("encode_transformer: sequence has no unmasked tokens");
  if (n > p.pos_embed->shape[0])
    throw ContractError("encode_transformer: sequence length " + std::to_string(n) +
                        " exceeds positional table " + std::to_string(p.pos_embed->shape[0]));
  auto tok = gather_rows(tape, p.tok_embed, seq.ids);
  std::vector<int> pos_ids(n);
  std::iota(pos_ids.begin(), pos_ids.end(), 0);
  auto x = add(tape, tok, gather_rows(tape, p.pos_embed, pos_ids));
  for (const auto& layer : p.layers) x = transformer_layer(tape, layer, x, seq.attention_mask);
  auto pooled = weighted_average_pool(tape, x, seq.attention_mask, p.pool_w);
  return tanh_op(tape, add_bias(tape, vecmat(tape, pooled, p.out_w), p.out_b));
}

}  // namespace textgnn
