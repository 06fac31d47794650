#pragma once

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "textgnn/errors.hpp"

namespace textgnn {

// Interchange rows for the three pair file formats. All are 3-column TSV,
// LF line endings, no header.

struct ScoredPair {
  std::string query, keyword;
  double teacher = 0;  // in [0,1]
};

struct LabeledPair {
  std::string query, keyword;
  std::string label;  // excellent | perfect | good | fair | bad
};

struct BinaryPair {
  std::string query, keyword;
  int label = 0;
};

namespace detail {

inline std::vector<std::string> split_tsv_row(const std::string& line, long lineno) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  if (cols.size() != 3)
    throw DataError("line " + std::to_string(lineno) + ": expected 3 tab-separated columns, got " +
                    std::to_string(cols.size()));
  return cols;
}

inline std::string format_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace detail

inline std::vector<ScoredPair> read_scored_pairs(std::istream& in) {
  std::vector<ScoredPair> rows;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cols = detail::split_tsv_row(line, lineno);
    ScoredPair p{cols[0], cols[1], 0};
    try {
      p.teacher = std::stod(cols[2]);
    } catch (const std::exception&) {
      throw DataError("line " + std::to_string(lineno) + ": non-numeric teacher score");
    }
    if (p.teacher < 0.0 || p.teacher > 1.0)
      throw DataError("line " + std::to_string(lineno) + ": teacher score " + cols[2] +
                      " outside [0,1]");
    rows.push_back(std::move(p));
  }
  return rows;
}

inline void write_scored_pairs(const std::vector<ScoredPair>& rows, std::ostream& out) {
  for (const auto& p : rows)
    out << p.query << "\t" << p.keyword << "\t" << detail::format_score(p.teacher) << "\n";
}

inline std::vector<LabeledPair> read_labeled_pairs(std::istream& in) {
  std::vector<LabeledPair> rows;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cols = detail::split_tsv_row(line, lineno);
    rows.push_back({cols[0], cols[1], cols[2]});
  }
  return rows;
}

inline void write_labeled_pairs(const std::vector<LabeledPair>& rows, std::ostream& out) {
  for (const auto& p : rows) out << p.query << "\t" << p.keyword << "\t" << p.label << "\n";
}

inline std::vector<BinaryPair> read_binary_pairs(std::istream& in) {
  std::vector<BinaryPair> rows;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cols = detail::split_tsv_row(line, lineno);
    if (cols[2] != "0" && cols[2] != "1")
      throw DataError("line " + std::to_string(lineno) + ": binary label must be 0 or 1, got '" +
                      cols[2] + "'");
    rows.push_back({cols[0], cols[1], cols[2] == "1" ? 1 : 0});
  }
  return rows;
}

inline void write_binary_pairs(const std::vector<BinaryPair>& rows, std::ostream& out) {
  for (const auto& p : rows) out << p.query << "\t" << p.keyword << "\t" << p.label << "\n";
}

}  // namespace textgnn
