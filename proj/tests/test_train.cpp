#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "textgnn/evaluate.hpp"
#include "textgnn/synth.hpp"
#include "textgnn/train.hpp"

using namespace textgnn;

namespace {

ModelConfig toy_model_config(bool use_graph = false) {
  ModelConfig cfg;
  cfg.encoder.kind = EncoderKind::kCdssm;
  cfg.encoder.embed_dim = 12;
  cfg.encoder.hidden_dim = 16;
  cfg.encoder.output_dim = 8;
  cfg.encoder.trigram_buckets = 256;
  cfg.aggregator.kind = AggregatorKind::kGat;
  cfg.aggregator.gat_heads = 2;
  cfg.use_graph = use_graph;
  cfg.crossing_hidden_dim = 8;
  return cfg;
}

// Two cleanly separated intents; targets 0.95 within intent, 0.05 across.
std::vector<RelevanceExample> separable_toy(int n) {
  const std::vector<std::string> a_q = {"red running shoes", "buy red shoes", "running shoes sale"};
  const std::vector<std::string> a_k = {"red shoes store", "running shoes deals"};
  const std::vector<std::string> b_q = {"database sharding guide", "sql cluster setup"};
  const std::vector<std::string> b_k = {"sql server hosting", "database cluster service"};
  CounterRng rng(99);
  std::vector<RelevanceExample> out;
  for (int i = 0; i < n; ++i) {
    const bool a_side = rng.uniform() < 0.5;
    const bool same = rng.uniform() < 0.5;
    const auto& qs = a_side ? a_q : b_q;
    const auto& ks = (a_side == same) ? a_k : b_k;
    RelevanceExample ex;
    ex.query.text = qs[rng.uniform_int(qs.size())];
    ex.query.side = Side::kQuery;
    ex.keyword.text = ks[rng.uniform_int(ks.size())];
    ex.keyword.side = Side::kKeyword;
    ex.teacher_score = same ? 0.95 : 0.05;
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

TEST(DistillLoss, Arithmetic) {
  Tape tape;
  EXPECT_FLOAT_EQ(distill_loss(tape, Tensor::scalar(0.7f), 0.7)->data[0], 0.0f);
  EXPECT_FLOAT_EQ(distill_loss(tape, Tensor::scalar(0.0f), 1.0)->data[0], 1.0f);
  EXPECT_NEAR(distill_loss(tape, Tensor::scalar(0.6f), 0.1)->data[0], 0.25, 1e-6);
  EXPECT_THROW(distill_loss(tape, Tensor::scalar(0.5f), 1.2), DataError);
  EXPECT_THROW(distill_loss(tape, Tensor::scalar(0.5f), -0.1), DataError);
}

TEST(FinetuneLoss, Arithmetic) {
  Tape tape;
  EXPECT_NEAR(finetune_loss(tape, Tensor::scalar(0.5f), 0)->data[0], std::log(2.0), 1e-5);
  EXPECT_NEAR(finetune_loss(tape, Tensor::scalar(0.5f), 1)->data[0], std::log(2.0), 1e-5);
  EXPECT_NEAR(finetune_loss(tape, Tensor::scalar(0.9f), 0)->data[0], -std::log(0.1), 1e-4);
  EXPECT_NEAR(finetune_loss(tape, Tensor::scalar(0.999f), 1)->data[0], 0.0, 1e-2);
  // exact 0/1 predictions are clamped, not errors
  EXPECT_TRUE(std::isfinite(finetune_loss(tape, Tensor::scalar(0.0f), 1)->data[0]));
  EXPECT_TRUE(std::isfinite(finetune_loss(tape, Tensor::scalar(1.0f), 0)->data[0]));
  EXPECT_THROW(finetune_loss(tape, Tensor::scalar(0.5f), 2), DataError);
}

TEST(Losses, GradientChecks) {
  CounterRng rng(101);
  for (int trial = 0; trial < 5; ++trial) {
    auto z = gradcheck::random_tensor(rng, {1});
    auto r1 = gradcheck::check({z}, [&](Tape& t) {
      return distill_loss(t, sigmoid(t, z), 0.3);
    });
    EXPECT_TRUE(r1.ok()) << "distill: " << r1.worst_at;
    auto r2 = gradcheck::check({z}, [&](Tape& t) {
      return finetune_loss(t, sigmoid(t, z), trial % 2);
    });
    EXPECT_TRUE(r2.ok()) << "finetune: " << r2.worst_at;
  }
}

TEST(Train, SeparableToyConvergesUnderFrozenThreshold) {
  auto model = TextGnnModel(toy_model_config(), Vocabulary{}, 42);
  auto examples = separable_toy(200);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 20;
  cfg.learning_rate = Real(3e-3);
  cfg.seed = 42;
  auto result = train(model, examples, cfg);
  ASSERT_EQ(result.epoch_losses.size(), 50u);
  EXPECT_LT(result.epoch_losses.back(), 0.02) << "final loss " << result.epoch_losses.back();
}

TEST(Train, FirstEpochNearConstantHalfPredictorLoss) {
  auto model = TextGnnModel(toy_model_config(), Vocabulary{}, 7);
  auto examples = separable_toy(200);
  double const_half_loss = 0;
  for (const auto& ex : examples) {
    const double d = 0.5 - *ex.teacher_score;
    const_half_loss += d * d;
  }
  const_half_loss /= static_cast<double>(examples.size());

  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 20;
  cfg.learning_rate = Real(2e-4);
  cfg.seed = 7;
  auto result = train(model, examples, cfg);
  EXPECT_NEAR(result.epoch_losses[0], const_half_loss, 0.1);
}

TEST(Train, LossTraceNonIncreasingWithSmallUpticks) {
  auto model = TextGnnModel(toy_model_config(), Vocabulary{}, 43);
  auto examples = separable_toy(200);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 20;
  cfg.learning_rate = Real(3e-3);
  cfg.seed = 43;
  auto result = train(model, examples, cfg);
  for (std::size_t e = 1; e < result.epoch_losses.size(); ++e)
    EXPECT_LE(result.epoch_losses[e], result.epoch_losses[e - 1] * 1.05)
        << "uptick above 5% at epoch " << e;
}

TEST(Train, DeterministicTraceAndFinalParameters) {
  auto run = [] {
    auto model = TextGnnModel(toy_model_config(), Vocabulary{}, 11);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 16;
    cfg.seed = 11;
    auto result = train(model, separable_toy(100), cfg);
    std::vector<std::vector<Real>> params;
    for (const auto& p : model.parameters()) params.push_back(p->data);
    return std::make_pair(result.epoch_losses, params);
  };
  auto [trace1, params1] = run();
  auto [trace2, params2] = run();
  EXPECT_EQ(trace1, trace2);
  EXPECT_EQ(params1, params2);
}

TEST(Train, MissingStageTargetRejected) {
  auto model = TextGnnModel(toy_model_config(), Vocabulary{}, 12);
  RelevanceExample ex;
  ex.query.text = "a";
  ex.keyword.text = "b";
  ex.binary_label = 1;  // no teacher score
  TrainConfig cfg;
  cfg.stage = TrainStage::kDistill;
  EXPECT_THROW(train(model, {ex}, cfg), DataError);
  RelevanceExample none;
  none.query.text = "a";
  none.keyword.text = "b";
  EXPECT_THROW(train(model, {none}, TrainConfig{}), DataError);
  EXPECT_THROW(train(model, {}, TrainConfig{}), DataError);
}

TEST(Train, NanLossAbortsNamingBatch) {
  auto model = TextGnnModel(toy_model_config(), Vocabulary{}, 13);
  model.parameters()[0]->data[0] = std::numeric_limits<Real>::quiet_NaN();
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.seed = 13;
  try {
    train(model, separable_toy(20), cfg);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("batch 0"), std::string::npos);
  }
}

TEST(Train, FinetuneAfterDistillGrowthKeepsEvalAuc) {
  // Fine-tuning on binary labels must not cost more than 0.01 ROC-AUC
  // against the distill-only checkpoint.
  WorldConfig wcfg;
  wcfg.n_queries = 100;
  wcfg.n_keywords = 150;
  wcfg.n_train_pairs = 500;
  wcfg.n_eval_pairs = 150;
  wcfg.n_finetune_pairs = 150;
  wcfg.seed = 21;
  auto data = generate_world(wcfg);

  auto model = TextGnnModel(toy_model_config(), Vocabulary{}, 21);
  TrainConfig distill_cfg;
  distill_cfg.epochs = 8;
  distill_cfg.batch_size = 20;
  distill_cfg.learning_rate = Real(3e-3);
  distill_cfg.seed = 21;
  train(model, examples_from_scored(data.train_pairs, nullptr), distill_cfg);
  const double auc_distill = evaluate_model(model, data.eval_pairs, nullptr).roc;

  TrainConfig ft_cfg;
  ft_cfg.stage = TrainStage::kFinetune;
  ft_cfg.epochs = 3;
  ft_cfg.batch_size = 20;
  ft_cfg.learning_rate = Real(5e-4);
  ft_cfg.seed = 22;
  train(model, examples_from_binary(data.finetune_pairs, nullptr), ft_cfg);
  const double auc_finetuned = evaluate_model(model, data.eval_pairs, nullptr).roc;

  EXPECT_GE(auc_finetuned, auc_distill - 0.01)
      << "distill " << auc_distill << " -> finetuned " << auc_finetuned;
}
