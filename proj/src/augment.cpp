#include "dyploc/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dyploc/errors.hpp"

namespace dyploc::aug {

using mlm::Vocabulary;

Eigen::VectorXd nucleus_filter(const Eigen::VectorXd& dist, double p) {
  if (p <= 0.0 || p > 1.0)
    throw DataError("nucleus_filter: p must be in (0, 1]");
  if (std::abs(dist.sum() - 1.0) > 1e-6)
    throw NumericError("nucleus_filter: input not normalized");
  const int n = static_cast<int>(dist.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return dist(a) > dist(b); });
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  double mass = 0.0;
  for (int k = 0; k < n; ++k) {
    out(order[k]) = dist(order[k]);
    mass += dist(order[k]);
    if (mass >= p) break;
  }
  out /= mass;
  return out;
}

ConditionalGenerator ConditionalGenerator::train(
    const std::vector<Pair>& pairs, const nn::ModelConfig& model_config,
    const mlm::TrainConfig& train_config) {
  if (pairs.empty()) throw DataError("generator training: no pairs");
  std::vector<TokenSeq> seqs;
  for (const auto& [cond, tgt] : pairs) {
    seqs.push_back(cond);
    seqs.push_back(tgt);
  }
  Vocabulary vocab = Vocabulary::build_from_sequences(seqs);
  nn::ModelConfig config = model_config;
  config.vocab_size = vocab.size();
  ConditionalGenerator g;
  g.model_ = mlm::MixedLM(config, std::move(vocab));
  g.model_.init(train_config.seed);

  std::vector<mlm::EncodedSample> train_set;
  int idx = 0;
  for (const auto& [cond, tgt] : pairs) {
    mlm::EncodedSample s;
    s.id = "pair" + std::to_string(idx++);
    auto cond_ids = g.model_.vocab().encode(cond);
    if (static_cast<int>(cond_ids.size()) > config.max_src_len)
      cond_ids.resize(config.max_src_len);
    s.item_ids = {std::move(cond_ids)};
    s.target_ids = g.model_.vocab().encode(tgt);
    int cap = std::min(kMaxTargetTokens, config.max_tgt_len - 2);
    if (static_cast<int>(s.target_ids.size()) > cap) s.target_ids.resize(cap);
    // Single item: plan labels carry no signal.
    s.plan_labels.assign(s.target_ids.size(), std::nullopt);
    train_set.push_back(std::move(s));
  }
  g.model_.train(train_set, {}, train_config);
  g.trained_ = true;
  return g;
}

ConditionalGenerator ConditionalGenerator::load(
    const std::filesystem::path& path) {
  ConditionalGenerator g;
  g.model_ = mlm::MixedLM::load(path);
  g.trained_ = true;
  return g;
}

namespace {

std::vector<int> encode_condition(const mlm::MixedLM& model,
                                  const TokenSeq& condition) {
  auto ids = model.vocab().encode(condition);
  if (static_cast<int>(ids.size()) > model.config().max_src_len)
    ids.resize(model.config().max_src_len);
  if (ids.empty()) throw DataError("empty condition sequence");
  return ids;
}

// [0, 1) double from the top 53 bits.
double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

}  // namespace

TokenSeq ConditionalGenerator::greedy(const TokenSeq& condition,
                                      int max_len) const {
  if (!trained_) throw DataError("generator not trained");
  auto ids = encode_condition(model_, condition);
  auto res = model_.decode({ids}, mlm::DecodeMode::kWeighted, max_len, 0);
  return model_.vocab().decode(res.token_ids);
}

TokenSeq ConditionalGenerator::sample_nucleus(const TokenSeq& condition,
                                              double nucleus_p,
                                              std::uint64_t seed,
                                              int max_len) const {
  if (!trained_) throw DataError("generator not trained");
  auto ids = encode_condition(model_, condition);
  std::mt19937_64 rng(seed);
  std::vector<int> prefix = {Vocabulary::kBos};
  std::vector<int> out;
  const int cap = std::min(max_len, model_.config().max_tgt_len - 1);
  for (int step = 0; step < cap; ++step) {
    Eigen::VectorXd dist = model_.next_token_distribution({ids}, prefix);
    Eigen::VectorXd filtered = nucleus_filter(dist, nucleus_p);
    double u = unit_uniform(rng);
    int chosen = static_cast<int>(filtered.size()) - 1;
    double acc = 0.0;
    for (int v = 0; v < filtered.size(); ++v) {
      acc += filtered(v);
      if (u < acc) {
        chosen = v;
        break;
      }
    }
    if (chosen == Vocabulary::kEos) break;
    out.push_back(chosen);
    prefix.push_back(chosen);
  }
  return model_.vocab().decode(out);
}

TokenSeq concept_condition(const TokenSeq& title, const ContentItem& item) {
  ContentItem condition;
  condition.entities = item.entities;
  condition.core_concepts = item.core_concepts;
  return serialize_item(title, condition).tokens;
}

TokenSeq claim_condition(const TokenSeq& title, const ContentItem& item) {
  TokenSeq out = title;
  out.push_back(kSegmenter);
  for (const auto& e : item.entities) out.push_back(e);
  return out;
}

std::set<std::string> expand_concepts(const TokenSeq& title,
                                      const std::set<std::string>& entities,
                                      const std::set<std::string>& core,
                                      const ConditionalGenerator& g) {
  ContentItem probe;
  probe.entities = entities;
  probe.core_concepts = core;
  TokenSeq generated = g.greedy(concept_condition(title, probe));
  std::set<std::string> out;
  for (const auto& t : generated) {
    if (t == kSegmenter || t == "<unk>" || t == "<pad>" || t == "<bos>" ||
        t == "<eos>")
      continue;
    if (core.count(t)) continue;
    out.insert(t);
  }
  return out;
}

std::string generate_claim(const TokenSeq& title,
                           const std::set<std::string>& entities,
                           const ConditionalGenerator& g, double nucleus_p,
                           std::uint64_t seed) {
  ContentItem probe;
  probe.entities = entities;
  TokenSeq tokens =
      g.sample_nucleus(claim_condition(title, probe), nucleus_p, seed);
  return join_tokens(tokens);
}

std::vector<ConditionalGenerator::Pair> concept_training_pairs(
    const std::vector<Sample>& corpus) {
  std::vector<ConditionalGenerator::Pair> pairs;
  for (const auto& s : corpus) {
    for (const auto& item : s.items) {
      if (item.expanded_concepts.empty()) continue;
      TokenSeq target(item.expanded_concepts.begin(),
                      item.expanded_concepts.end());
      pairs.emplace_back(concept_condition(s.title, item), std::move(target));
    }
  }
  return pairs;
}

std::vector<ConditionalGenerator::Pair> claim_training_pairs(
    const std::vector<Sample>& corpus) {
  std::vector<ConditionalGenerator::Pair> pairs;
  for (const auto& s : corpus) {
    for (const auto& item : s.items) {
      if (!item.claim) continue;
      pairs.emplace_back(claim_condition(s.title, item),
                         tokenize_whitespace(*item.claim));
    }
  }
  return pairs;
}

void augment_corpus(std::vector<Sample>& corpus, const std::string& mode,
                    const ConditionalGenerator& g, double nucleus_p,
                    std::uint64_t seed) {
  if (mode != "concepts" && mode != "claims")
    throw DataError("augment: unknown mode " + mode);
  std::uint64_t counter = 0;
  for (auto& s : corpus) {
    for (auto& item : s.items) {
      if (mode == "concepts") {
        item.expanded_concepts =
            expand_concepts(s.title, item.entities, item.core_concepts, g);
      } else if (item.claim) {
        item.claim = generate_claim(s.title, item.entities, g, nucleus_p,
                                    seed + counter);
      }
      ++counter;
    }
    truncate_to_caps(s);
  }
}

}  // namespace dyploc::aug
