#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "textgnn/graph.hpp"
#include "textgnn/metrics.hpp"
#include "textgnn/model.hpp"
#include "textgnn/pairs.hpp"

namespace textgnn {

inline std::vector<LabeledScore> score_labeled_pairs(const TextGnnModel& model,
                                                     const std::vector<LabeledPair>& pairs,
                                                     const BehaviorGraph* graph) {
  std::vector<LabeledScore> items;
  items.reserve(pairs.size());
  for (const auto& p : pairs)
    items.push_back({model.score_texts(p.query, p.keyword, graph), map_label(p.label), p.keyword});
  return items;
}

struct EvalReport {
  long n_pairs = 0;
  double roc = 0;
  double pr = 0;
  SubgroupReport subgroups;  // frequency bins over the keyword text
};

inline EvalReport evaluate_model(const TextGnnModel& model, const std::vector<LabeledPair>& pairs,
                                 const BehaviorGraph* graph) {
  auto items = score_labeled_pairs(model, pairs, graph);
  EvalReport rep;
  rep.n_pairs = static_cast<long>(items.size());
  rep.roc = roc_auc(items);
  rep.pr = pr_auc(items);
  rep.subgroups = subgroup_auc(items);
  return rep;
}

inline nlohmann::json eval_report_to_json(const EvalReport& rep) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["n_pairs"] = rep.n_pairs;
  j["roc_auc"] = rep.roc;
  j["pr_auc"] = rep.pr;
  auto bins = nlohmann::json::array();
  for (const auto& b : rep.subgroups.bins) {
    nlohmann::json jb{{"bin", b.name}, {"n", b.count}, {"share", b.share}};
    if (b.auc)
      jb["roc_auc"] = *b.auc;
    else
      jb["roc_auc"] = nullptr;
    bins.push_back(std::move(jb));
  }
  j["subgroups"] = std::move(bins);
  return j;
}

}  // namespace textgnn
