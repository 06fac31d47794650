// textgnn: twin-tower text relevance model with click-graph neighbor
// aggregation. Subcommands cover the full pipeline: synthetic data
// generation, click-graph construction, ANN neighbor completion,
// distillation training, evaluation, single-pair inference, and offline
// embedding export.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "textgnn/ann.hpp"
#include "textgnn/checkpoint.hpp"
#include "textgnn/evaluate.hpp"
#include "textgnn/graph.hpp"
#include "textgnn/metrics.hpp"
#include "textgnn/model.hpp"
#include "textgnn/pairs.hpp"
#include "textgnn/synth.hpp"
#include "textgnn/train.hpp"

namespace fs = std::filesystem;
using namespace textgnn;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path + ": " + e.what());
  }
}

BehaviorGraph load_graph_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open graph file " + path);
  return read_graph_jsonl(in);
}

void print_coverage(const char* title, const CoverageReport& rep) {
  std::printf("%s\n", title);
  std::printf("  %-12s %8s %8s\n", "", "query", "keyword");
  for (int b = 1; b <= 3; ++b)
    std::printf("  %d neighbor%s  %7.1f%% %7.1f%%\n", b, b == 1 ? " " : "s",
                100.0 * rep.query.share(b), 100.0 * rep.keyword.share(b));
  std::printf("  %-12s %7.1f%% %7.1f%%\n", "coverage", 100.0 * rep.query.coverage(),
              100.0 * rep.keyword.coverage());
}

std::uint64_t effective_seed(CLI::Option* opt, std::uint64_t value) {
  if (opt->count() == 0) {
    std::printf("seed not given; using 0\n");
    return 0;
  }
  return value;
}

// Vocabulary corpus for a fresh model: every pair text plus every neighbor
// text reachable through the graph.
std::vector<std::string> vocab_corpus(const std::vector<std::string>& pair_texts,
                                      const BehaviorGraph* graph) {
  std::vector<std::string> corpus = pair_texts;
  if (graph != nullptr)
    for (Side s : {Side::kQuery, Side::kKeyword})
      for (const auto& [text, neighbors] : graph->side_map(s)) {
        corpus.push_back(text);
        for (const auto& nb : neighbors) corpus.push_back(nb.text);
      }
  return corpus;
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir, CLI::Option* seed_opt,
                 std::uint64_t seed_flag) {
  WorldConfig cfg = world_config_from_json(load_json_file(config_path));
  if (seed_opt->count() > 0)
    cfg.seed = seed_flag;
  else
    std::printf("seed not given on the command line; using config seed %llu\n",
                static_cast<unsigned long long>(cfg.seed));
  auto data = generate_world(cfg);

  fs::create_directories(out_dir);
  auto open = [&](const char* name) {
    std::ofstream f(fs::path(out_dir) / name, std::ios::binary);
    if (!f) throw DataError(std::string("cannot write ") + name + " under " + out_dir);
    return f;
  };
  {
    auto f = open("clicks.tsv");
    write_click_log(data.click_log, f);
  }
  {
    auto f = open("train_pairs.tsv");
    write_scored_pairs(data.train_pairs, f);
  }
  {
    auto f = open("eval_pairs.tsv");
    write_labeled_pairs(data.eval_pairs, f);
  }
  {
    auto f = open("finetune_pairs.tsv");
    write_binary_pairs(data.finetune_pairs, f);
  }
  {
    auto f = open("items.tsv");
    write_items(data.world, f);
  }
  std::printf("world seed %llu: %zu click rows, %zu train / %zu eval / %zu finetune pairs -> %s\n",
              static_cast<unsigned long long>(cfg.seed), data.click_log.size(),
              data.train_pairs.size(), data.eval_pairs.size(), data.finetune_pairs.size(),
              out_dir.c_str());
  return 0;
}

int cmd_build_graph(const std::string& logs_path, long threshold, int k,
                    const std::string& out_path) {
  std::ifstream in(logs_path);
  if (!in) throw DataError("cannot open click log " + logs_path);
  auto entries = load_click_log(in);
  auto graph = build_graph(aggregate_logs(entries), threshold, k);
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw DataError("cannot write graph file " + out_path);
  write_graph_jsonl(graph, out);
  std::printf("%zu log rows -> %zu query nodes, %zu keyword nodes (threshold %ld, k %d)\n",
              entries.size(), graph.query_neighbors.size(), graph.keyword_neighbors.size(),
              threshold, k);
  print_coverage("click-only coverage", coverage_report(graph));
  return 0;
}

int cmd_ann_complete(const std::string& graph_path, const std::string& model_prefix,
                     const std::string& out_path, int m, int ef, bool exhaustive) {
  auto graph = load_graph_file(graph_path);
  auto model = load_checkpoint(model_prefix);
  print_coverage("coverage before completion", coverage_report(graph));

  // Proxy embeddings: the query-side center encoder (towers share parameters
  // under the default config).
  TextEncoderFn encode = [&model](const std::string& text) {
    Tape tape(false);
    auto vec = model.encode_center(tape, Side::kQuery, model.prepare(text));
    return std::vector<Real>(vec->data.begin(), vec->data.end());
  };
  auto stats = complete_graph(graph, encode, m, ef, exhaustive);
  if (stats.skipped_query_side)
    std::fprintf(stderr, "warning: query side has no indexed nodes; completion skipped\n");
  if (stats.skipped_keyword_side)
    std::fprintf(stderr, "warning: keyword side has no indexed nodes; completion skipped\n");

  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw DataError("cannot write graph file " + out_path);
  write_graph_jsonl(graph, out);
  std::printf("completed %ld queries, %ld keywords via ANN proxies\n", stats.completed_queries,
              stats.completed_keywords);
  print_coverage("coverage after completion", coverage_report(graph));
  return 0;
}

int cmd_train(const std::string& pairs_path, const std::string& graph_path,
              const std::string& stage_name, const std::string& config_path,
              const std::string& init_prefix, CLI::Option* seed_opt, std::uint64_t seed_flag,
              int epochs, int batch_size, double lr, const std::string& out_prefix) {
  const std::uint64_t seed = effective_seed(seed_opt, seed_flag);

  TrainConfig tcfg;
  tcfg.stage = stage_name == "finetune" ? TrainStage::kFinetune : TrainStage::kDistill;
  tcfg.epochs = epochs;
  tcfg.batch_size = batch_size;
  tcfg.learning_rate = static_cast<Real>(lr);
  tcfg.seed = seed;
  tcfg.checkpoint_prefix = out_prefix;

  BehaviorGraph graph;
  const BehaviorGraph* graph_ptr = nullptr;
  if (!graph_path.empty()) {
    graph = load_graph_file(graph_path);
    graph_ptr = &graph;
  }

  std::ifstream pin(pairs_path);
  if (!pin) throw DataError("cannot open pairs file " + pairs_path);
  std::vector<RelevanceExample> examples;
  std::vector<std::string> pair_texts;
  if (tcfg.stage == TrainStage::kDistill) {
    auto pairs = read_scored_pairs(pin);
    for (const auto& p : pairs) {
      pair_texts.push_back(p.query);
      pair_texts.push_back(p.keyword);
    }
    examples = examples_from_scored(pairs, graph_ptr);
  } else {
    auto pairs = read_binary_pairs(pin);
    for (const auto& p : pairs) {
      pair_texts.push_back(p.query);
      pair_texts.push_back(p.keyword);
    }
    examples = examples_from_binary(pairs, graph_ptr);
  }

  std::optional<TextGnnModel> model;
  if (!init_prefix.empty()) {
    model.emplace(load_checkpoint(init_prefix));
  } else {
    if (config_path.empty())
      throw DataError("train needs --model-config (or --init to continue from a checkpoint)");
    ModelConfig mcfg = model_config_from_json(load_json_file(config_path));
    Vocabulary vocab = build_vocab(vocab_corpus(pair_texts, graph_ptr), mcfg.vocab_min_count,
                                   mcfg.vocab_max_size, mcfg.encoder.max_seq_len);
    model.emplace(mcfg, std::move(vocab), seed);
  }

  auto result = train(*model, examples, tcfg);
  for (std::size_t e = 0; e < result.epoch_losses.size(); ++e)
    std::printf("epoch %3zu  loss %.6f\n", e, result.epoch_losses[e]);
  save_checkpoint(*model, out_prefix);
  std::printf("checkpoint written to %s.json / %s.bin\n", out_prefix.c_str(), out_prefix.c_str());
  return 0;
}

int cmd_eval(const std::string& pairs_path, const std::string& graph_path,
             const std::string& model_prefix, bool subgroups, const std::string& report_path) {
  auto model = load_checkpoint(model_prefix);
  BehaviorGraph graph;
  const BehaviorGraph* graph_ptr = nullptr;
  if (!graph_path.empty()) {
    graph = load_graph_file(graph_path);
    graph_ptr = &graph;
  }
  std::ifstream pin(pairs_path);
  if (!pin) throw DataError("cannot open pairs file " + pairs_path);
  auto pairs = read_labeled_pairs(pin);
  auto rep = evaluate_model(model, pairs, graph_ptr);

  std::printf("pairs      %ld\n", rep.n_pairs);
  std::printf("ROC-AUC    %.6f\n", rep.roc);
  std::printf("PR-AUC     %.6f\n", rep.pr);
  if (subgroups) {
    std::printf("%-10s %8s %8s %10s\n", "freq bin", "n", "share", "ROC-AUC");
    for (const auto& b : rep.subgroups.bins) {
      if (b.auc)
        std::printf("%-10s %8ld %7.1f%% %10.6f\n", b.name.c_str(), b.count, 100.0 * b.share,
                    *b.auc);
      else
        std::printf("%-10s %8ld %7.1f%% %10s\n", b.name.c_str(), b.count, 100.0 * b.share,
                    "undefined");
    }
  }
  if (!report_path.empty()) {
    std::ofstream out(report_path, std::ios::binary);
    if (!out) throw DataError("cannot write report " + report_path);
    out << eval_report_to_json(rep).dump(2) << "\n";
  }
  return 0;
}

int cmd_infer(const std::string& query, const std::string& keyword,
              const std::string& model_prefix, const std::string& graph_path) {
  auto model = load_checkpoint(model_prefix);
  BehaviorGraph graph;
  const BehaviorGraph* graph_ptr = nullptr;
  if (!graph_path.empty()) {
    graph = load_graph_file(graph_path);
    graph_ptr = &graph;
  }
  std::printf("%.6f\n", model.score_texts(query, keyword, graph_ptr));
  return 0;
}

int cmd_export(const std::string& side_name_arg, const std::string& model_prefix,
               const std::string& graph_path, const std::string& out_path) {
  auto model = load_checkpoint(model_prefix);
  auto graph = load_graph_file(graph_path);
  const Side side = side_from_name(side_name_arg);
  std::vector<std::string> texts;
  for (const auto& [text, neighbors] : graph.side_map(side)) texts.push_back(text);
  auto table = model.export_tower_embeddings(texts, side, &graph);
  write_embedding_table(table, out_path);
  std::printf("exported %zu %s-side vectors (dim %d) to %s\n", table.size(),
              side_name_arg.c_str(), model.config().tower_output_dim(), out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"twin-tower text relevance model with click-graph aggregation"};
  app.require_subcommand(1);

  // gen-data
  std::string gd_config, gd_out;
  std::uint64_t gd_seed = 0;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic click world");
  gen->add_option("--config", gd_config, "world config JSON")->required();
  gen->add_option("--out", gd_out, "output directory")->required();
  auto* gd_seed_opt = gen->add_option("--seed", gd_seed, "override the config seed");

  // build-graph
  std::string bg_logs, bg_out;
  long bg_threshold = 50;
  int bg_k = 3;
  auto* bg = app.add_subcommand("build-graph", "build the click behavior graph from a TSV log");
  bg->add_option("--logs", bg_logs, "click log TSV")->required();
  bg->add_option("--threshold", bg_threshold, "impression eligibility threshold");
  bg->add_option("--k", bg_k, "neighbors kept per node");
  bg->add_option("--out", bg_out, "output graph JSONL")->required();

  // ann-complete
  std::string ac_graph, ac_model, ac_out;
  int ac_m = 16, ac_ef = 64;
  bool ac_exhaustive = false;
  auto* ac = app.add_subcommand("ann-complete", "fill empty neighbor lists via ANN proxies");
  ac->add_option("--graph", ac_graph, "input graph JSONL")->required();
  ac->add_option("--model", ac_model, "checkpoint prefix for proxy embeddings")->required();
  ac->add_option("--out", ac_out, "output graph JSONL")->required();
  ac->add_option("--m", ac_m, "index links per node");
  ac->add_option("--ef", ac_ef, "search beam width");
  ac->add_flag("--exhaustive", ac_exhaustive, "exact scan instead of the graph index");

  // train
  std::string tr_pairs, tr_graph, tr_stage = "distill", tr_config, tr_init, tr_out;
  std::uint64_t tr_seed = 0;
  int tr_epochs = 10, tr_batch = 16;
  double tr_lr = 1e-3;
  auto* tr = app.add_subcommand("train", "distillation or fine-tune training");
  tr->add_option("--pairs", tr_pairs, "training pairs TSV")->required();
  tr->add_option("--graph", tr_graph, "graph JSONL (omit for encoder-only baselines)");
  tr->add_option("--stage", tr_stage, "distill | finetune")
      ->check(CLI::IsMember({"distill", "finetune"}));
  tr->add_option("--model-config", tr_config, "model config JSON (fresh model)");
  tr->add_option("--init", tr_init, "checkpoint prefix to continue from");
  auto* tr_seed_opt = tr->add_option("--seed", tr_seed, "run seed");
  tr->add_option("--epochs", tr_epochs, "training epochs");
  tr->add_option("--batch-size", tr_batch, "minibatch size");
  tr->add_option("--lr", tr_lr, "Adam learning rate");
  tr->add_option("--out", tr_out, "checkpoint prefix to write")->required();

  // eval
  std::string ev_pairs, ev_graph, ev_model, ev_report;
  bool ev_subgroups = false;
  auto* ev = app.add_subcommand("eval", "ROC/PR metrics on labeled pairs");
  ev->add_option("--pairs", ev_pairs, "labeled eval pairs TSV")->required();
  ev->add_option("--graph", ev_graph, "graph JSONL");
  ev->add_option("--model", ev_model, "checkpoint prefix")->required();
  ev->add_flag("--subgroups", ev_subgroups, "print the keyword-frequency bin table");
  ev->add_option("--report", ev_report, "write the machine-readable JSON report here");

  // infer
  std::string in_query, in_keyword, in_model, in_graph;
  auto* inf = app.add_subcommand("infer", "score one query/keyword pair");
  inf->add_option("--query", in_query, "query text")->required();
  inf->add_option("--keyword", in_keyword, "keyword text")->required();
  inf->add_option("--model", in_model, "checkpoint prefix")->required();
  inf->add_option("--graph", in_graph, "graph JSONL");

  // export-embeddings
  std::string ex_side = "keyword", ex_model, ex_graph, ex_out;
  auto* ex = app.add_subcommand("export-embeddings", "precompute one side's tower vectors");
  ex->add_option("--side", ex_side, "query | keyword")->check(CLI::IsMember({"query", "keyword"}));
  ex->add_option("--model", ex_model, "checkpoint prefix")->required();
  ex->add_option("--graph", ex_graph, "graph JSONL with the records to embed")->required();
  ex->add_option("--out", ex_out, "output binary table")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gd_config, gd_out, gd_seed_opt, gd_seed);
    if (bg->parsed()) return cmd_build_graph(bg_logs, bg_threshold, bg_k, bg_out);
    if (ac->parsed())
      return cmd_ann_complete(ac_graph, ac_model, ac_out, ac_m, ac_ef, ac_exhaustive);
    if (tr->parsed())
      return cmd_train(tr_pairs, tr_graph, tr_stage, tr_config, tr_init, tr_seed_opt, tr_seed,
                       tr_epochs, tr_batch, tr_lr, tr_out);
    if (ev->parsed()) return cmd_eval(ev_pairs, ev_graph, ev_model, ev_subgroups, ev_report);
    if (inf->parsed()) return cmd_infer(in_query, in_keyword, in_model, in_graph);
    if (ex->parsed()) return cmd_export(ex_side, ex_model, ex_graph, ex_out);
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const MetricError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
