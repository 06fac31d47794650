#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "textgnn/errors.hpp"
#include "textgnn/graph.hpp"
#include "textgnn/pairs.hpp"
#include "textgnn/rng.hpp"

namespace textgnn {

// Deterministic synthetic universe. Every item belongs to one latent intent;
// relevance means "same intent". Two phenomena are planted on purpose:
//   - rare items sit below the click-eligibility threshold, so their only
//     relevance evidence arrives through the (completed) graph;
//   - rare keyword texts lean on a generic token pool shared across intents,
//     which misleads a text-only model.
struct WorldConfig {
  int n_intents = 8;
  int n_queries = 400;
  int n_keywords = 400;
  int vocab_size = 320;
  int tokens_per_intent = 30;
  double zipf_exponent = 1.1;
  double base_ctr = 0.20;
  double noise_ctr = 0.01;
  double rare_fraction = 0.4;
  double rare_train_share = 0.15;  // chance a training pair draws a rare keyword
  int n_train_pairs = 2400;
  int n_eval_pairs = 400;
  int n_finetune_pairs = 200;
  std::uint64_t seed = 0;

  int n_shared_tokens() const { return vocab_size - n_intents * tokens_per_intent; }

  void validate() const {
    if (n_intents < 2 || n_queries < 1 || n_keywords < 1 || tokens_per_intent < 2)
      throw DataError("world config: counts out of range");
    if (base_ctr <= noise_ctr) throw DataError("world config: base_ctr must exceed noise_ctr");
    if (rare_fraction < 0 || rare_fraction > 1)
      throw DataError("world config: rare_fraction must lie in [0,1]");
    if (rare_train_share < 0 || rare_train_share > 1)
      throw DataError("world config: rare_train_share must lie in [0,1]");
    if (n_shared_tokens() < 8)
      throw DataError("world config: vocab_size leaves fewer than 8 shared tokens");
    // each rare eval pair needs its own rare keyword, or the frequency-1 bin
    // stops meaning "shown once"
    if (std::lround(rare_fraction * n_eval_pairs) > std::lround(rare_fraction * n_keywords))
      throw DataError("world config: n_eval_pairs must not exceed n_keywords");
  }
};

inline nlohmann::json world_config_to_json(const WorldConfig& c) {
  return {{"schema_version", 1},
          {"n_intents", c.n_intents},
          {"n_queries", c.n_queries},
          {"n_keywords", c.n_keywords},
          {"vocab_size", c.vocab_size},
          {"tokens_per_intent", c.tokens_per_intent},
          {"zipf_exponent", c.zipf_exponent},
          {"base_ctr", c.base_ctr},
          {"noise_ctr", c.noise_ctr},
          {"rare_fraction", c.rare_fraction},
          {"rare_train_share", c.rare_train_share},
          {"n_train_pairs", c.n_train_pairs},
          {"n_eval_pairs", c.n_eval_pairs},
          {"n_finetune_pairs", c.n_finetune_pairs},
          {"seed", c.seed}};
}

inline WorldConfig world_config_from_json(const nlohmann::json& j) {
  WorldConfig c;
  if (j.contains("schema_version") && j.at("schema_version").get<int>() != 1)
    throw DataError("unsupported world config schema_version");
  auto opt = [&j](const char* key, auto& slot) {
    if (j.contains(key)) slot = j.at(key).get<std::decay_t<decltype(slot)>>();
  };
  opt("n_intents", c.n_intents);
  opt("n_queries", c.n_queries);
  opt("n_keywords", c.n_keywords);
  opt("vocab_size", c.vocab_size);
  opt("tokens_per_intent", c.tokens_per_intent);
  opt("zipf_exponent", c.zipf_exponent);
  opt("base_ctr", c.base_ctr);
  opt("noise_ctr", c.noise_ctr);
  opt("rare_fraction", c.rare_fraction);
  opt("rare_train_share", c.rare_train_share);
  opt("n_train_pairs", c.n_train_pairs);
  opt("n_eval_pairs", c.n_eval_pairs);
  opt("n_finetune_pairs", c.n_finetune_pairs);
  opt("seed", c.seed);
  c.validate();
  return c;
}

struct WorldItem {
  std::string text;
  Side side = Side::kQuery;
  int intent = 0;
  bool rare = false;
  long popularity = 0;  // impression budget
};

// Scores sigmoid(gain * (intent_similarity - 1/2)) plus bounded per-pair
// noise keyed off the pair text, clamped to [0,1].
struct OracleTeacher {
  std::unordered_map<std::string, int> query_intent;
  std::unordered_map<std::string, int> keyword_intent;
  std::uint64_t seed = 0;
  double gain = 6.0;
  double noise_amplitude = 0.04;

  double score(const std::string& query, const std::string& keyword) const {
    auto qi = query_intent.find(query);
    auto ki = keyword_intent.find(keyword);
    if (qi == query_intent.end()) throw DataError("oracle: unknown query '" + query + "'");
    if (ki == keyword_intent.end()) throw DataError("oracle: unknown keyword '" + keyword + "'");
    const double sim = qi->second == ki->second ? 1.0 : 0.0;
    const double base = 1.0 / (1.0 + std::exp(-gain * (sim - 0.5)));
    CounterRng noise_rng(seed ^ fnv1a64(query + "\x1f" + keyword));
    const double noisy = base + noise_rng.uniform(-noise_amplitude, noise_amplitude);
    return std::clamp(noisy, 0.0, 1.0);
  }
};

struct World {
  WorldConfig cfg;
  std::vector<WorldItem> queries;
  std::vector<WorldItem> keywords;
  OracleTeacher teacher;

  const std::vector<WorldItem>& items(Side s) const {
    return s == Side::kQuery ? queries : keywords;
  }
};

struct WorldData {
  World world;
  std::vector<ClickLogEntry> click_log;
  std::vector<ScoredPair> train_pairs;
  std::vector<LabeledPair> eval_pairs;
  std::vector<BinaryPair> finetune_pairs;
};

namespace detail {

// Pronounceable deterministic token: base-85 digits over CV syllables.
inline std::string synth_token(int index) {
  static const char* consonants = "bcdfghjklmnprstvz";  // 17
  static const char* vowels = "aeiou";                  // 5
  std::string word;
  int x = index;
  for (int s = 0; s < 3; ++s) {
    const int d = x % 85;
    x /= 85;
    word.push_back(consonants[d % 17]);
    word.push_back(vowels[d / 17]);
  }
  return word;
}

struct TokenPools {
  std::vector<std::vector<std::string>> intent;  // per intent
  std::vector<std::string> shared;
};

inline TokenPools make_pools(const WorldConfig& cfg) {
  TokenPools pools;
  int next = 0;
  pools.intent.resize(cfg.n_intents);
  for (int g = 0; g < cfg.n_intents; ++g)
    for (int t = 0; t < cfg.tokens_per_intent; ++t) pools.intent[g].push_back(synth_token(next++));
  for (int t = 0; t < cfg.n_shared_tokens(); ++t) pools.shared.push_back(synth_token(next++));
  return pools;
}

// Rare items speak in morphological variants of their intent's tokens:
// "karode" -> "karodel". A letter-trigram encoder still sees most of the
// stem, but a word-level vocabulary treats the variant as a new (or UNK)
// type that training pairs barely cover.
inline std::string variant_of(const std::string& token, CounterRng& rng) {
  static const char* suffixes[4] = {"s", "n", "la", "ri"};
  return token + suffixes[rng.uniform_int(4)];
}

inline std::string compose_text(CounterRng& rng, const std::vector<std::string>& intent_pool,
                                const std::vector<std::string>& shared_pool, int n_intent_tokens,
                                int n_shared_tokens, bool variants) {
  std::vector<std::string> words;
  std::set<std::size_t> used;
  for (int i = 0; i < n_intent_tokens; ++i) {
    std::size_t idx = rng.uniform_int(intent_pool.size());
    while (used.count(idx)) idx = rng.uniform_int(intent_pool.size());
    used.insert(idx);
    words.push_back(variants ? variant_of(intent_pool[idx], rng) : intent_pool[idx]);
  }
  for (int i = 0; i < n_shared_tokens; ++i)
    words.push_back(shared_pool[rng.uniform_int(shared_pool.size())]);
  rng.shuffle(words);
  std::string text;
  for (const auto& w : words) {
    if (!text.empty()) text += " ";
    text += w;
  }
  return text;
}

inline std::vector<WorldItem> make_items(const WorldConfig& cfg, const TokenPools& pools, Side side,
                                         int count, CounterRng& rng) {
  // rarity mask with an exact count of rare items
  const int n_rare = static_cast<int>(std::lround(cfg.rare_fraction * count));
  std::vector<char> rare(count, 0);
  std::fill(rare.begin(), rare.begin() + std::min(count, n_rare), 1);
  rng.shuffle(rare);

  std::set<std::string> seen;
  std::vector<WorldItem> items;
  items.reserve(count);
  int common_rank = 0;
  for (int i = 0; i < count; ++i) {
    WorldItem item;
    item.side = side;
    item.intent = static_cast<int>(rng.uniform_int(cfg.n_intents));
    item.rare = rare[i] != 0;
    const auto& pool = pools.intent[item.intent];
    for (int attempt = 0; attempt < 64; ++attempt) {
      item.text = item.rare ? compose_text(rng, pool, pools.shared, 2, 2, /*variants=*/true)
                            : compose_text(rng, pool, pools.shared, 3, 1, /*variants=*/false);
      if (seen.insert(item.text).second) break;
    }
    if (item.rare) {
      item.popularity = 5 + static_cast<long>(rng.uniform_int(36));  // stays below 50
    } else {
      const double zipf = 1500.0 / std::pow(common_rank + 1.0, cfg.zipf_exponent);
      item.popularity = std::max<long>(120, static_cast<long>(std::lround(zipf)));
      ++common_rank;
    }
    items.push_back(std::move(item));
  }
  return items;
}

inline long pair_impressions(const WorldItem& q, const WorldItem& k, CounterRng& rng) {
  const long cap = std::min(q.popularity, k.popularity);
  return std::max<long>(1, static_cast<long>(std::lround(cap * rng.uniform(0.55, 0.95))));
}

}  // namespace detail

inline WorldData generate_world(const WorldConfig& cfg) {
  cfg.validate();
  WorldData data;
  data.world.cfg = cfg;
  const auto pools = detail::make_pools(cfg);

  CounterRng item_rng(cfg.seed, 1);
  data.world.queries = detail::make_items(cfg, pools, Side::kQuery, cfg.n_queries, item_rng);
  data.world.keywords = detail::make_items(cfg, pools, Side::kKeyword, cfg.n_keywords, item_rng);

  auto& teacher = data.world.teacher;
  teacher.seed = cfg.seed;
  for (const auto& it : data.world.queries) teacher.query_intent[it.text] = it.intent;
  for (const auto& it : data.world.keywords) teacher.keyword_intent[it.text] = it.intent;

  // group items by intent for partner sampling
  std::vector<std::vector<int>> kw_by_intent(cfg.n_intents), kw_common_by_intent(cfg.n_intents),
      kw_rare_by_intent(cfg.n_intents);
  for (int i = 0; i < static_cast<int>(data.world.keywords.size()); ++i) {
    const auto& k = data.world.keywords[i];
    kw_by_intent[k.intent].push_back(i);
    (k.rare ? kw_rare_by_intent : kw_common_by_intent)[k.intent].push_back(i);
  }
  std::vector<std::vector<int>> q_by_intent(cfg.n_intents), q_common_by_intent(cfg.n_intents);
  for (int i = 0; i < static_cast<int>(data.world.queries.size()); ++i) {
    const auto& q = data.world.queries[i];
    q_by_intent[q.intent].push_back(i);
    if (!q.rare) q_common_by_intent[q.intent].push_back(i);
  }

  // ---- click log ----
  CounterRng log_rng(cfg.seed, 2);
  std::vector<char> keyword_paired(data.world.keywords.size(), 0);
  auto emit_pair = [&](const WorldItem& q, const WorldItem& k, int k_index) {
    const bool same = q.intent == k.intent;
    const long impressions = detail::pair_impressions(q, k, log_rng);
    const long clicks = log_rng.binomial(impressions, same ? cfg.base_ctr : cfg.noise_ctr);
    data.click_log.push_back({q.text, k.text, impressions, clicks});
    keyword_paired[k_index] = 1;
  };
  for (const auto& q : data.world.queries) {
    const int partners = 2 + static_cast<int>(log_rng.uniform_int(3));
    for (int p = 0; p < partners; ++p) {
      const bool same = log_rng.uniform() < 0.85;
      int intent = q.intent;
      if (!same) {
        intent = static_cast<int>(log_rng.uniform_int(cfg.n_intents - 1));
        if (intent >= q.intent) ++intent;
      }
      const auto& pool = kw_by_intent[intent];
      if (pool.empty()) continue;
      const int ki = pool[log_rng.uniform_int(pool.size())];
      emit_pair(q, data.world.keywords[ki], ki);
    }
  }
  // every keyword reaches the log at least once
  for (int ki = 0; ki < static_cast<int>(data.world.keywords.size()); ++ki) {
    if (keyword_paired[ki]) continue;
    const auto& k = data.world.keywords[ki];
    const auto& pool = q_by_intent[k.intent];
    if (pool.empty()) continue;
    emit_pair(data.world.queries[pool[log_rng.uniform_int(pool.size())]], k, ki);
  }

  // ---- train pairs with teacher scores ----
  // keywords drawn mostly from the common pool: rare items stay naturally
  // under-trained, the way low-frequency inventory is in real logs
  CounterRng train_rng(cfg.seed, 3);
  for (int i = 0; i < cfg.n_train_pairs; ++i) {
    const auto& q = data.world.queries[train_rng.uniform_int(data.world.queries.size())];
    const bool same = train_rng.uniform() < 0.5;
    int intent = q.intent;
    if (!same) {
      intent = static_cast<int>(train_rng.uniform_int(cfg.n_intents - 1));
      if (intent >= q.intent) ++intent;
    }
    const bool want_rare = train_rng.uniform() < cfg.rare_train_share;
    const auto& preferred = want_rare ? kw_rare_by_intent[intent] : kw_common_by_intent[intent];
    const auto& pool = preferred.empty() ? kw_by_intent[intent] : preferred;
    if (pool.empty()) {
      --i;
      continue;
    }
    const auto& k = data.world.keywords[pool[train_rng.uniform_int(pool.size())]];
    data.train_pairs.push_back({q.text, k.text, teacher.score(q.text, k.text)});
  }

  // ---- eval pairs with 5-level labels ----
  CounterRng eval_rng(cfg.seed, 4);
  static const char* positive_labels[4] = {"excellent", "perfect", "good", "fair"};
  std::vector<int> rare_kw, common_kw;
  for (int i = 0; i < static_cast<int>(data.world.keywords.size()); ++i)
    (data.world.keywords[i].rare ? rare_kw : common_kw).push_back(i);
  eval_rng.shuffle(rare_kw);
  const int n_rare_eval = static_cast<int>(std::lround(cfg.rare_fraction * cfg.n_eval_pairs));

  // distinct rare keywords land in the frequency-1 bin; a small pool of
  // common keywords repeats across the remaining pairs
  const int common_pool_size = std::max(1, (cfg.n_eval_pairs - n_rare_eval) / 3);
  eval_rng.shuffle(common_kw);

  // eval queries come from the common pool, so the discriminative burden of a
  // rare pair rests on the keyword side
  auto make_eval_pair = [&](int ki, CounterRng& rng) {
    const auto& k = data.world.keywords[ki];
    const bool positive = rng.uniform() < 0.5;
    int intent = k.intent;
    if (!positive) {
      intent = static_cast<int>(rng.uniform_int(cfg.n_intents - 1));
      if (intent >= k.intent) ++intent;
    }
    const auto& preferred = q_common_by_intent[intent];
    const auto& pool = preferred.empty() ? q_by_intent[intent] : preferred;
    const auto& q = data.world.queries[pool[rng.uniform_int(pool.size())]];
    const std::string label = positive ? positive_labels[rng.uniform_int(4)] : "bad";
    data.eval_pairs.push_back({q.text, k.text, label});
  };

  for (int i = 0; i < n_rare_eval && !rare_kw.empty(); ++i)
    make_eval_pair(rare_kw[i % rare_kw.size()], eval_rng);
  for (int i = n_rare_eval; i < cfg.n_eval_pairs && !common_kw.empty(); ++i)
    make_eval_pair(common_kw[eval_rng.uniform_int(
                       std::min<std::size_t>(common_pool_size, common_kw.size()))],
                   eval_rng);
  eval_rng.shuffle(data.eval_pairs);

  // ---- binary fine-tune pairs ----
  CounterRng ft_rng(cfg.seed, 5);
  for (int i = 0; i < cfg.n_finetune_pairs; ++i) {
    const auto& q = data.world.queries[ft_rng.uniform_int(data.world.queries.size())];
    const bool same = ft_rng.uniform() < 0.5;
    int intent = q.intent;
    if (!same) {
      intent = static_cast<int>(ft_rng.uniform_int(cfg.n_intents - 1));
      if (intent >= q.intent) ++intent;
    }
    const auto& pool = kw_by_intent[intent];
    if (pool.empty()) {
      --i;
      continue;
    }
    const auto& k = data.world.keywords[pool[ft_rng.uniform_int(pool.size())]];
    data.finetune_pairs.push_back({q.text, k.text, same ? 1 : 0});
  }

  return data;
}

// ---- serialization ----

inline void write_click_log(const std::vector<ClickLogEntry>& log, std::ostream& out) {
  for (const auto& e : log)
    out << e.query << "\t" << e.keyword << "\t" << e.impressions << "\t" << e.clicks << "\n";
}

inline void write_items(const World& w, std::ostream& out) {
  for (const auto& items : {w.queries, w.keywords})
    for (const auto& it : items)
      out << side_name(it.side) << "\t" << it.text << "\t" << it.intent << "\t" << it.popularity
          << "\t" << (it.rare ? 1 : 0) << "\n";
}

}  // namespace textgnn
