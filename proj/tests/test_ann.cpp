#include <gtest/gtest.h>

#include <map>

#include "textgnn/ann.hpp"
#include "textgnn/rng.hpp"

using namespace textgnn;

namespace {

std::vector<Real> rand_unit(CounterRng& rng, int dim) {
  std::vector<Real> v(dim);
  for (auto& x : v) x = static_cast<Real>(rng.gaussian());
  double n2 = 0;
  for (auto x : v) n2 += static_cast<double>(x) * x;
  const Real inv = static_cast<Real>(1.0 / std::sqrt(n2));
  for (auto& x : v) x *= inv;
  return v;
}

}  // namespace

TEST(AnnIndex, SingleItemAnswersEveryProbe) {
  auto index = build_index({{"only", {1, 0, 0}}});
  auto hit = search(index, {0, 1, 0});
  EXPECT_EQ(hit.text, "only");
}

TEST(AnnIndex, OrthogonalVectorsExactSelf) {
  auto index = build_index({{"x", {1, 0, 0}}, {"y", {0, 1, 0}}, {"z", {0, 0, 1}}});
  auto hit = search(index, {1, 0, 0});
  EXPECT_EQ(hit.text, "x");
  EXPECT_NEAR(hit.cosine, 1.0, 1e-6);
}

TEST(AnnIndex, StoredProbeReturnsCosineOne) {
  CounterRng rng(31);
  std::vector<std::pair<std::string, std::vector<Real>>> items;
  for (int i = 0; i < 200; ++i) items.emplace_back("t" + std::to_string(i), rand_unit(rng, 8));
  auto index = build_index(items);
  auto hit = search(index, items[123].second, 64);
  EXPECT_EQ(hit.text, "t123");
  EXPECT_NEAR(hit.cosine, 1.0, 1e-6);
}

TEST(AnnIndex, DimMismatchThrows) {
  EXPECT_THROW(build_index({{"a", {1, 0}}, {"b", {1, 0, 0}}}), ShapeError);
  auto index = build_index({{"a", {1, 0}}});
  EXPECT_THROW(search(index, {1, 0, 0}), ShapeError);
}

TEST(AnnIndex, EmptySearchThrows) {
  AnnIndex index;
  EXPECT_THROW(search(index, {1.f}), ContractError);
}

TEST(AnnIndex, AdjacencySymmetricAndVectorsUnitNorm) {
  CounterRng rng(32);
  std::vector<std::pair<std::string, std::vector<Real>>> items;
  for (int i = 0; i < 300; ++i) {
    auto v = rand_unit(rng, 6);
    for (auto& x : v) x *= Real(3.7);  // build must normalize
    items.emplace_back("t" + std::to_string(i), v);
  }
  auto index = build_index(items, 8);
  for (int i = 0; i < index.size(); ++i) {
    double n2 = 0;
    for (auto x : index.vectors[i]) n2 += static_cast<double>(x) * x;
    EXPECT_NEAR(n2, 1.0, 1e-6);
    for (int nb : index.links[i]) {
      auto& back = index.links[nb];
      EXPECT_NE(std::find(back.begin(), back.end(), i), back.end())
          << "edge " << i << "->" << nb << " not reciprocated";
    }
  }
}

TEST(AnnIndex, FullBeamEqualsExhaustive) {
  CounterRng rng(33);
  std::vector<std::pair<std::string, std::vector<Real>>> items;
  for (int i = 0; i < 150; ++i) items.emplace_back("t" + std::to_string(i), rand_unit(rng, 5));
  auto index = build_index(items, 6);
  for (int trial = 0; trial < 30; ++trial) {
    auto probe = rand_unit(rng, 5);
    auto approx = search(index, probe, index.size());
    auto exact = search_exhaustive(index, probe);
    EXPECT_EQ(approx.text, exact.text);
  }
}

TEST(AnnIndex, RecallAgainstExhaustiveOracle) {
  // smaller sibling of the acceptance criterion: 1500 base vectors, 200 probes
  CounterRng rng(34);
  const int dim = 16;
  std::vector<std::pair<std::string, std::vector<Real>>> items;
  for (int i = 0; i < 1500; ++i) items.emplace_back("t" + std::to_string(i), rand_unit(rng, dim));
  auto index = build_index(items, 16);
  int agree = 0;
  const int probes = 200;
  for (int t = 0; t < probes; ++t) {
    auto probe = rand_unit(rng, dim);
    if (search(index, probe, 64).text == search_exhaustive(index, probe).text) ++agree;
  }
  EXPECT_GE(agree, static_cast<int>(0.95 * probes));
}

namespace {

// Handcrafted embedding for the borrowed-neighbor fixture.
TextEncoderFn fixture_encoder() {
  auto table = std::make_shared<std::map<std::string, std::vector<Real>>>();
  (*table)["no internet games"] = {1.0f, 0.9f, 0.0f};
  (*table)["video games computers free"] = {1.0f, 1.0f, 0.1f};
  (*table)["cheap flights paris"] = {0.0f, 0.1f, 1.0f};
  (*table)["paris airfare deals"] = {0.0f, 0.0f, 1.0f};
  return [table](const std::string& text) {
    auto it = table->find(text);
    if (it == table->end()) throw DataError("no embedding for '" + text + "'");
    return it->second;
  };
}

BehaviorGraph fixture_graph() {
  BehaviorGraph g;
  g.query_neighbors["no internet games"] = {
      {"free games", 58, 1, NeighborSource::kClick},
      {"online games", 260, 4, NeighborSource::kClick},
      {"online computer games", 67, 1, NeighborSource::kClick},
  };
  g.query_neighbors["cheap flights paris"] = {{"paris flights", 500, 40, NeighborSource::kClick}};
  g.query_neighbors["video games computers free"] = {};
  g.keyword_neighbors["free games"] = {{"no internet games", 58, 1, NeighborSource::kClick}};
  g.keyword_neighbors["online games"] = {{"no internet games", 260, 4, NeighborSource::kClick}};
  g.keyword_neighbors["online computer games"] = {
      {"no internet games", 67, 1, NeighborSource::kClick}};
  g.keyword_neighbors["paris flights"] = {{"cheap flights paris", 500, 40, NeighborSource::kClick}};
  return g;
}

}  // namespace

TEST(CompleteGraph, BorrowsProxyNeighborsWithAnnProvenance) {
  auto g = fixture_graph();
  auto enc = fixture_encoder();
  // keyword side has no embeddings in the fixture map; restrict to queries by
  // giving keywords their own trivial vectors
  auto full_enc = [&enc](const std::string& text) -> std::vector<Real> {
    try {
      return enc(text);
    } catch (const DataError&) {
      return {0.5f, 0.5f, 0.5f};
    }
  };
  auto stats = complete_graph(g, full_enc);
  const auto* nb = g.find(Side::kQuery, "video games computers free");
  ASSERT_NE(nb, nullptr);
  ASSERT_EQ(nb->size(), 3u);
  EXPECT_EQ((*nb)[0].text, "free games");
  EXPECT_EQ((*nb)[1].text, "online games");
  EXPECT_EQ((*nb)[2].text, "online computer games");
  for (const auto& n : *nb) EXPECT_EQ(n.source, NeighborSource::kAnn);
  ASSERT_EQ(stats.completed_queries, 1);
  EXPECT_EQ(stats.completions[0].proxy, "no internet games");
}

TEST(CompleteGraph, NodesWithClickNeighborsUntouched) {
  auto g = fixture_graph();
  auto before = g.query_neighbors["no internet games"];
  auto full_enc = [](const std::string&) -> std::vector<Real> { return {1.0f, 0.0f, 0.0f}; };
  complete_graph(g, full_enc);
  EXPECT_EQ(g.query_neighbors["no internet games"], before);
  for (const auto& n : g.query_neighbors["cheap flights paris"])
    EXPECT_EQ(n.source, NeighborSource::kClick);
}

TEST(CompleteGraph, CoverageReachesFullWhenIndexedNodesExist) {
  CounterRng rng(35);
  BehaviorGraph g;
  for (int i = 0; i < 40; ++i) {
    std::vector<Neighbor> nb;
    if (i % 3 == 0) nb.push_back({"kw", 100, 5, NeighborSource::kClick});
    g.query_neighbors["q" + std::to_string(i)] = nb;
    std::vector<Neighbor> kb;
    if (i % 4 == 0) kb.push_back({"qq", 80, 2, NeighborSource::kClick});
    g.keyword_neighbors["k" + std::to_string(i)] = kb;
  }
  auto before = coverage_report(g);
  auto enc = [&](const std::string& text) {
    CounterRng r(fnv1a64(text));
    std::vector<Real> v(8);
    for (auto& x : v) x = static_cast<Real>(r.uniform(-1, 1));
    return v;
  };
  complete_graph(g, enc);
  auto after = coverage_report(g);
  EXPECT_GE(after.query.coverage(), before.query.coverage());
  EXPECT_DOUBLE_EQ(after.query.coverage(), 1.0);
  EXPECT_DOUBLE_EQ(after.keyword.coverage(), 1.0);
}

TEST(CompleteGraph, SideWithNoIndexedNodesSkipped) {
  BehaviorGraph g;
  g.query_neighbors["a"] = {};
  g.query_neighbors["b"] = {};
  g.keyword_neighbors["k"] = {{"a", 100, 5, NeighborSource::kClick}};
  auto enc = [](const std::string&) -> std::vector<Real> { return {1.0f}; };
  auto stats = complete_graph(g, enc);
  EXPECT_TRUE(stats.skipped_query_side);
  EXPECT_FALSE(stats.skipped_keyword_side);
  EXPECT_TRUE(g.query_neighbors["a"].empty());
}
