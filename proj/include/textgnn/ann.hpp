#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <string>
#include <vector>

#include "textgnn/errors.hpp"
#include "textgnn/graph.hpp"
#include "textgnn/tensor.hpp"

namespace textgnn {

// Single-layer navigable-small-world proximity graph over unit vectors.
// Inserts link each new item bidirectionally to its m nearest found by beam
// search, with no pruning, so the adjacency stays symmetric and the graph
// connected. Deterministic given input order.
struct AnnIndex {
  std::vector<std::string> texts;
  std::vector<std::vector<Real>> vectors;  // unit-normalized (or zero)
  std::vector<std::vector<int>> links;
  int dim = 0;
  int m = 16;
  int entry_point = -1;

  int size() const { return static_cast<int>(texts.size()); }
};

namespace detail {

inline void unit_normalize(std::vector<Real>& v) {
  double norm2 = 0;
  for (Real x : v) norm2 += static_cast<double>(x) * x;
  if (norm2 <= 0) return;  // zero vector stays zero, cosine 0 against everything
  const Real inv = static_cast<Real>(1.0 / std::sqrt(norm2));
  for (Real& x : v) x *= inv;
}

inline double dot_d(const std::vector<Real>& a, const std::vector<Real>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

struct Scored {
  double sim;
  int id;
};
struct BetterFirst {  // max-heap on (sim desc, id asc)
  bool operator()(const Scored& a, const Scored& b) const {
    if (a.sim != b.sim) return a.sim < b.sim;
    return a.id > b.id;
  }
};
struct WorseFirst {  // min-heap
  bool operator()(const Scored& a, const Scored& b) const {
    if (a.sim != b.sim) return a.sim > b.sim;
    return a.id < b.id;
  }
};

// Best-first beam search; returns up to ef hits sorted by similarity desc.
inline std::vector<Scored> beam_search(const AnnIndex& index, const std::vector<Real>& probe,
                                       int ef) {
  std::vector<Scored> out;
  if (index.size() == 0 || ef < 1) return out;
  std::vector<char> visited(index.size(), 0);
  std::priority_queue<Scored, std::vector<Scored>, BetterFirst> candidates;
  std::priority_queue<Scored, std::vector<Scored>, WorseFirst> best;

  const int start = index.entry_point;
  visited[start] = 1;
  const Scored entry{dot_d(index.vectors[start], probe), start};
  candidates.push(entry);
  best.push(entry);

  while (!candidates.empty()) {
    const Scored cur = candidates.top();
    candidates.pop();
    if (static_cast<int>(best.size()) >= ef && cur.sim < best.top().sim) break;
    for (int nb : index.links[cur.id]) {
      if (visited[nb]) continue;
      visited[nb] = 1;
      const Scored cand{dot_d(index.vectors[nb], probe), nb};
      if (static_cast<int>(best.size()) < ef || cand.sim > best.top().sim) {
        candidates.push(cand);
        best.push(cand);
        if (static_cast<int>(best.size()) > ef) best.pop();
      }
    }
  }
  out.reserve(best.size());
  while (!best.empty()) {
    out.push_back(best.top());
    best.pop();
  }
  std::reverse(out.begin(), out.end());
  return out;
}

}  // namespace detail

inline AnnIndex build_index(const std::vector<std::pair<std::string, std::vector<Real>>>& items,
                            int m = 16, int ef_construction = 100) {
  if (items.empty()) throw ContractError("build_index: no items");
  if (m < 1) throw ContractError("build_index: m must be >= 1");
  AnnIndex index;
  index.dim = static_cast<int>(items[0].second.size());
  index.m = m;
  for (const auto& [text, vec] : items) {
    if (static_cast<int>(vec.size()) != index.dim)
      throw ShapeError("build_index: vector for '" + text + "' has dim " +
                       std::to_string(vec.size()) + ", expected " + std::to_string(index.dim));
    auto v = vec;
    detail::unit_normalize(v);
    const int id = index.size();
    index.texts.push_back(text);
    index.vectors.push_back(std::move(v));
    index.links.emplace_back();
    if (id == 0) {
      index.entry_point = 0;
      continue;
    }
    auto nearest = detail::beam_search(index, index.vectors[id], std::max(m, ef_construction));
    const int link_count = std::min<int>(m, static_cast<int>(nearest.size()));
    for (int i = 0; i < link_count; ++i) {
      const int nb = nearest[i].id;
      if (nb == id) continue;
      index.links[id].push_back(nb);
      index.links[nb].push_back(id);
    }
  }
  return index;
}

struct SearchHit {
  std::string text;
  double cosine = 0;
  int id = -1;
};

// Best match by cosine. ef >= index size degenerates to an exhaustive-
// equivalent sweep of the (connected) graph.
inline SearchHit search(const AnnIndex& index, const std::vector<Real>& probe, int ef = 64) {
  if (index.size() == 0) throw ContractError("search: empty index");
  if (static_cast<int>(probe.size()) != index.dim)
    throw ShapeError("search: probe dim " + std::to_string(probe.size()) + " vs index dim " +
                     std::to_string(index.dim));
  auto p = probe;
  detail::unit_normalize(p);
  auto hits = detail::beam_search(index, p, std::max(1, ef));
  const auto& top = hits.front();
  return {index.texts[top.id], top.sim, top.id};
}

// Exhaustive oracle, for tests and the exactness fallback.
inline SearchHit search_exhaustive(const AnnIndex& index, const std::vector<Real>& probe) {
  if (index.size() == 0) throw ContractError("search: empty index");
  auto p = probe;
  detail::unit_normalize(p);
  SearchHit best{index.texts[0], detail::dot_d(index.vectors[0], p), 0};
  for (int i = 1; i < index.size(); ++i) {
    const double sim = detail::dot_d(index.vectors[i], p);
    if (sim > best.cosine) best = {index.texts[i], sim, i};
  }
  return best;
}

// ---- neighbor completion ----

struct CompletionRecord {
  std::string original;
  std::string proxy;
  double similarity = 0;
  Side side = Side::kQuery;
};

struct CompletionStats {
  std::vector<CompletionRecord> completions;
  bool skipped_query_side = false;
  bool skipped_keyword_side = false;
  long completed_queries = 0;
  long completed_keywords = 0;
};

using TextEncoderFn = std::function<std::vector<Real>(const std::string&)>;

// Gives every zero-neighbor node the click neighbors of its nearest indexed
// same-side node, marked source=ann. Nodes that already have neighbors are
// never touched. A side with no indexed nodes is skipped.
inline CompletionStats complete_graph(BehaviorGraph& graph, const TextEncoderFn& encode,
                                      int m = 16, int ef = 64, bool exhaustive = false) {
  CompletionStats stats;
  for (Side side : {Side::kQuery, Side::kKeyword}) {
    auto& nodes = graph.side_map(side);
    std::vector<std::pair<std::string, std::vector<Real>>> indexed;
    for (const auto& [text, neighbors] : nodes)
      if (!neighbors.empty()) indexed.emplace_back(text, encode(text));
    if (indexed.empty()) {
      (side == Side::kQuery ? stats.skipped_query_side : stats.skipped_keyword_side) = true;
      continue;
    }
    auto index = build_index(indexed, m);
    for (auto& [text, neighbors] : nodes) {
      if (!neighbors.empty()) continue;
      const auto probe = encode(text);
      const SearchHit hit = exhaustive ? search_exhaustive(index, probe) : search(index, probe, ef);
      auto borrowed = *graph.find(side, hit.text);
      for (auto& nb : borrowed) nb.source = NeighborSource::kAnn;
      neighbors = std::move(borrowed);
      stats.completions.push_back({text, hit.text, hit.cosine, side});
      ++(side == Side::kQuery ? stats.completed_queries : stats.completed_keywords);
    }
  }
  return stats;
}

}  // namespace textgnn
