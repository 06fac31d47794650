#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "textgnn/errors.hpp"

namespace textgnn {

// Metric undefined on the given sample (single-class AUC input).
struct MetricError : std::runtime_error {
  explicit MetricError(const std::string& msg) : std::runtime_error(msg) {}
};

struct LabeledScore {
  double score = 0;
  int label = 0;                // 0 or 1
  std::string group_key;        // e.g. keyword text, for frequency binning
};

// Five-level human judgment to binary: only "bad" is negative.
inline int map_label(const std::string& raw) {
  if (raw == "excellent" || raw == "perfect" || raw == "good" || raw == "fair") return 1;
  if (raw == "bad") return 0;
  throw DataError("unknown relevance label '" + raw + "'");
}

// Rank-based (Mann-Whitney) ROC-AUC with average-rank tie handling:
// equals P(score+ > score-) + 0.5 P(tie).
inline double roc_auc(const std::vector<LabeledScore>& items) {
  long pos = 0, neg = 0;
  for (const auto& it : items) {
    if (!std::isfinite(it.score)) throw DataError("non-finite score in roc_auc input");
    (it.label ? pos : neg) += 1;
  }
  if (pos == 0 || neg == 0)
    throw MetricError("roc_auc undefined: need both classes, got " + std::to_string(pos) +
                      " positive / " + std::to_string(neg) + " negative");

  std::vector<int> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return items[a].score < items[b].score; });

  double pos_rank_sum = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && items[order[j]].score == items[order[i]].score) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based average
    for (std::size_t k = i; k < j; ++k)
      if (items[order[k]].label) pos_rank_sum += avg_rank;
    i = j;
  }
  const double p = static_cast<double>(pos);
  return (pos_rank_sum - p * (p + 1) / 2.0) / (p * static_cast<double>(neg));
}

// Average precision with step-wise interpolation over distinct score
// thresholds, ties handled as one block.
inline double pr_auc(const std::vector<LabeledScore>& items) {
  long pos = 0;
  for (const auto& it : items) {
    if (!std::isfinite(it.score)) throw DataError("non-finite score in pr_auc input");
    pos += it.label;
  }
  if (pos == 0) throw MetricError("pr_auc undefined: no positive samples");

  std::vector<int> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return items[a].score > items[b].score; });

  double ap = 0;
  long tp = 0, fp = 0;
  double prev_recall = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && items[order[j]].score == items[order[i]].score) ++j;
    for (std::size_t k = i; k < j; ++k) (items[order[k]].label ? tp : fp) += 1;
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

struct SubgroupBin {
  std::string name;  // "1", "2", "3+"
  long count = 0;
  double share = 0;
  std::optional<double> auc;  // empty when the bin holds a single class
};

struct SubgroupReport {
  std::vector<SubgroupBin> bins;
  double overall_auc = 0;
};

// Frequency = how often the item's group key occurs within this evaluation
// set; bins {1, 2, >=3}.
inline SubgroupReport subgroup_auc(const std::vector<LabeledScore>& items) {
  std::map<std::string, long> freq;
  for (const auto& it : items) ++freq[it.group_key];

  std::vector<std::vector<LabeledScore>> binned(3);
  for (const auto& it : items) {
    const long f = freq[it.group_key];
    binned[f >= 3 ? 2 : static_cast<int>(f) - 1].push_back(it);
  }

  SubgroupReport rep;
  rep.overall_auc = roc_auc(items);
  const char* names[3] = {"1", "2", "3+"};
  for (int b = 0; b < 3; ++b) {
    SubgroupBin bin;
    bin.name = names[b];
    bin.count = static_cast<long>(binned[b].size());
    bin.share = items.empty() ? 0 : static_cast<double>(bin.count) / items.size();
    try {
      if (!binned[b].empty()) bin.auc = roc_auc(binned[b]);
    } catch (const MetricError&) {
      bin.auc.reset();  // single-class bin: reported as undefined
    }
    rep.bins.push_back(std::move(bin));
  }
  return rep;
}

}  // namespace textgnn
