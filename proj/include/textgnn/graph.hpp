#pragma once

#include <array>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "textgnn/errors.hpp"
#include "textgnn/tokenize.hpp"

namespace textgnn {

enum class Side { kQuery, kKeyword };

inline const char* side_name(Side s) { return s == Side::kQuery ? "query" : "keyword"; }
inline Side side_from_name(const std::string& s) {
  if (s == "query") return Side::kQuery;
  if (s == "keyword") return Side::kKeyword;
  throw DataError("unknown side '" + s + "'");
}
inline Side other_side(Side s) { return s == Side::kQuery ? Side::kKeyword : Side::kQuery; }

enum class NeighborSource { kClick, kAnn };

struct Neighbor {
  std::string text;
  long impressions = 0;
  long clicks = 0;
  NeighborSource source = NeighborSource::kClick;

  double ctr() const { return impressions > 0 ? static_cast<double>(clicks) / impressions : 0.0; }
  bool operator==(const Neighbor&) const = default;
};

struct NodeRecord {
  std::string text;
  Side side = Side::kQuery;
  std::vector<Neighbor> neighbors;  // selection-ranked, at most 3
};

struct ClickLogEntry {
  std::string query;
  std::string keyword;
  long impressions = 0;
  long clicks = 0;
};

struct PairCounts {
  long impressions = 0;
  long clicks = 0;
};

// Bipartite query <-> keyword click graph with the eligibility threshold it
// was built with. std::map keeps every traversal text-ordered, so identical
// inputs serialize to identical bytes.
struct BehaviorGraph {
  std::map<std::string, std::vector<Neighbor>> query_neighbors;
  std::map<std::string, std::vector<Neighbor>> keyword_neighbors;
  long threshold = 50;

  std::map<std::string, std::vector<Neighbor>>& side_map(Side s) {
    return s == Side::kQuery ? query_neighbors : keyword_neighbors;
  }
  const std::map<std::string, std::vector<Neighbor>>& side_map(Side s) const {
    return s == Side::kQuery ? query_neighbors : keyword_neighbors;
  }

  const std::vector<Neighbor>* find(Side s, const std::string& text) const {
    const auto& m = side_map(s);
    auto it = m.find(text);
    return it == m.end() ? nullptr : &it->second;
  }
};

// ---- log aggregation ----

using PairKey = std::pair<std::string, std::string>;  // (query, keyword), normalized

template <typename Range>
std::map<PairKey, PairCounts> aggregate_logs(const Range& entries) {
  std::map<PairKey, PairCounts> agg;
  long row = 0;
  for (const auto& e : entries) {
    ++row;
    if (e.clicks > e.impressions)
      throw DataError("malformed row " + std::to_string(row) + ": clicks " +
                      std::to_string(e.clicks) + " exceed impressions " +
                      std::to_string(e.impressions));
    if (e.impressions < 0 || e.clicks < 0)
      throw DataError("malformed row " + std::to_string(row) + ": negative count");
    PairKey key{normalize_text(e.query), normalize_text(e.keyword)};
    auto& c = agg[key];
    c.impressions += e.impressions;
    c.clicks += e.clicks;
  }
  return agg;
}

// ---- neighbor selection ----

// Eligibility: impressions >= threshold and at least one click. Ranking: CTR
// descending, ties by impressions descending then text ascending. CTR
// comparison is exact (cross-multiplied in integers).
inline std::vector<Neighbor> select_neighbors(std::vector<Neighbor> candidates, long threshold,
                                              int k = 3) {
  if (threshold < 1) throw ContractError("select_neighbors: threshold must be >= 1");
  std::erase_if(candidates, [&](const Neighbor& n) {
    return n.impressions < threshold || n.clicks < 1;
  });
  std::sort(candidates.begin(), candidates.end(), [](const Neighbor& a, const Neighbor& b) {
    const auto lhs = a.clicks * b.impressions;
    const auto rhs = b.clicks * a.impressions;
    if (lhs != rhs) return lhs > rhs;
    if (a.impressions != b.impressions) return a.impressions > b.impressions;
    return a.text < b.text;
  });
  if (static_cast<int>(candidates.size()) > k) candidates.resize(k);
  return candidates;
}

inline BehaviorGraph build_graph(const std::map<PairKey, PairCounts>& agg, long threshold = 50,
                                 int k = 3) {
  BehaviorGraph g;
  g.threshold = threshold;
  std::map<std::string, std::vector<Neighbor>> by_query, by_keyword;
  for (const auto& [key, counts] : agg) {
    const auto& [q, kw] = key;
    by_query[q].push_back({kw, counts.impressions, counts.clicks, NeighborSource::kClick});
    by_keyword[kw].push_back({q, counts.impressions, counts.clicks, NeighborSource::kClick});
  }
  for (auto& [q, cands] : by_query)
    g.query_neighbors[q] = select_neighbors(std::move(cands), threshold, k);
  for (auto& [kw, cands] : by_keyword)
    g.keyword_neighbors[kw] = select_neighbors(std::move(cands), threshold, k);
  return g;
}

// ---- coverage report ----

struct SideCoverage {
  std::array<long, 4> bucket_counts = {0, 0, 0, 0};  // nodes with 0/1/2/3 neighbors
  long total = 0;

  double share(int bucket) const {
    return total == 0 ? 0.0 : static_cast<double>(bucket_counts[bucket]) / total;
  }
  double coverage() const {
    return total == 0 ? 0.0 : 1.0 - static_cast<double>(bucket_counts[0]) / total;
  }
};

struct CoverageReport {
  SideCoverage query;
  SideCoverage keyword;
};

inline CoverageReport coverage_report(const BehaviorGraph& g) {
  CoverageReport rep;
  for (Side s : {Side::kQuery, Side::kKeyword}) {
    SideCoverage& cov = (s == Side::kQuery) ? rep.query : rep.keyword;
    for (const auto& [text, neighbors] : g.side_map(s)) {
      const int n = std::min<int>(3, static_cast<int>(neighbors.size()));
      ++cov.bucket_counts[n];
      ++cov.total;
    }
  }
  return rep;
}

// ---- TSV input ----

// 4 columns: query \t keyword \t impressions \t clicks; no header.
inline std::vector<ClickLogEntry> load_click_log(std::istream& in) {
  std::vector<ClickLogEntry> entries;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      std::size_t tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cols.size() != 4)
      throw DataError("line " + std::to_string(lineno) + ": expected 4 tab-separated columns, got " +
                      std::to_string(cols.size()));
    ClickLogEntry e;
    e.query = cols[0];
    e.keyword = cols[1];
    try {
      e.impressions = std::stol(cols[2]);
      e.clicks = std::stol(cols[3]);
    } catch (const std::exception&) {
      throw DataError("line " + std::to_string(lineno) + ": non-numeric count");
    }
    if (e.clicks > e.impressions || e.impressions < 0 || e.clicks < 0)
      throw DataError("line " + std::to_string(lineno) + ": clicks " + std::to_string(e.clicks) +
                      " exceed impressions " + std::to_string(e.impressions));
    entries.push_back(std::move(e));
  }
  return entries;
}

// ---- JSON-lines serialization ----

inline nlohmann::json neighbor_to_json(const Neighbor& n) {
  return {{"text", n.text},
          {"impressions", n.impressions},
          {"clicks", n.clicks},
          {"source", n.source == NeighborSource::kClick ? "click" : "ann"}};
}

inline Neighbor neighbor_from_json(const nlohmann::json& j) {
  Neighbor n;
  n.text = j.at("text").get<std::string>();
  n.impressions = j.at("impressions").get<long>();
  n.clicks = j.at("clicks").get<long>();
  const std::string src = j.at("source").get<std::string>();
  if (src == "click")
    n.source = NeighborSource::kClick;
  else if (src == "ann")
    n.source = NeighborSource::kAnn;
  else
    throw DataError("unknown neighbor source '" + src + "'");
  return n;
}

inline void write_graph_jsonl(const BehaviorGraph& g, std::ostream& out) {
  for (Side s : {Side::kQuery, Side::kKeyword}) {
    for (const auto& [text, neighbors] : g.side_map(s)) {
      nlohmann::json rec{{"text", text}, {"side", side_name(s)}};
      auto arr = nlohmann::json::array();
      for (const auto& n : neighbors) arr.push_back(neighbor_to_json(n));
      rec["neighbors"] = std::move(arr);
      out << rec.dump() << "\n";
    }
  }
}

inline BehaviorGraph read_graph_jsonl(std::istream& in, long threshold = 50) {
  BehaviorGraph g;
  g.threshold = threshold;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("graph line " + std::to_string(lineno) + ": " + e.what());
    }
    const Side side = side_from_name(rec.at("side").get<std::string>());
    std::vector<Neighbor> neighbors;
    for (const auto& jn : rec.at("neighbors")) neighbors.push_back(neighbor_from_json(jn));
    g.side_map(side)[rec.at("text").get<std::string>()] = std::move(neighbors);
  }
  return g;
}

}  // namespace textgnn
