#include "dyploc/eval_metrics.hpp"

#include <algorithm>
#include <cmath>

#include "dyploc/errors.hpp"

namespace dyploc::eval {

namespace {

std::string lowercase(std::string s) {
  for (auto& c : s)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

TokenSeq lowered(const TokenSeq& seq) {
  TokenSeq out;
  out.reserve(seq.size());
  for (const auto& t : seq) out.push_back(lowercase(t));
  return out;
}

using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts ngrams(const TokenSeq& seq, int n) {
  NgramCounts counts;
  for (int i = 0; i + n <= static_cast<int>(seq.size()); ++i) {
    std::vector<std::string> g(seq.begin() + i, seq.begin() + i + n);
    ++counts[g];
  }
  return counts;
}

void check_pairs(const std::vector<TokenSeq>& hyp,
                 const std::vector<TokenSeq>& ref) {
  if (hyp.empty()) throw DataError("metrics: empty hypothesis list");
  if (hyp.size() != ref.size())
    throw DataError("metrics: hypothesis/reference count mismatch");
}

}  // namespace

double bleu2(const std::vector<TokenSeq>& hypotheses,
             const std::vector<TokenSeq>& references) {
  check_pairs(hypotheses, references);
  long long hyp_len = 0, ref_len = 0;
  long long clipped[2] = {0, 0}, total[2] = {0, 0};
  for (std::size_t k = 0; k < hypotheses.size(); ++k) {
    TokenSeq hyp = lowered(hypotheses[k]);
    TokenSeq ref = lowered(references[k]);
    hyp_len += static_cast<long long>(hyp.size());
    ref_len += static_cast<long long>(ref.size());
    for (int n = 1; n <= 2; ++n) {
      NgramCounts h = ngrams(hyp, n);
      NgramCounts r = ngrams(ref, n);
      for (const auto& [g, c] : h) {
        total[n - 1] += c;
        auto it = r.find(g);
        if (it != r.end()) clipped[n - 1] += std::min(c, it->second);
      }
    }
  }
  double log_prec = 0.0;
  for (int n = 0; n < 2; ++n) {
    double p = total[n] > 0
                   ? static_cast<double>(clipped[n]) / total[n]
                   : 0.0;
    if (p <= 0.0) p = 1e-9;  // smoothing floor
    log_prec += 0.5 * std::log(p);
  }
  double bp = 1.0;
  if (hyp_len == 0) return 0.0;
  if (hyp_len < ref_len)
    bp = std::exp(1.0 - static_cast<double>(ref_len) / hyp_len);
  return 100.0 * bp * std::exp(log_prec);
}

std::pair<double, double> rouge2(const std::vector<TokenSeq>& hypotheses,
                                 const std::vector<TokenSeq>& references) {
  check_pairs(hypotheses, references);
  double recall_sum = 0.0, f1_sum = 0.0;
  int used = 0;
  for (std::size_t k = 0; k < hypotheses.size(); ++k) {
    TokenSeq hyp = lowered(hypotheses[k]);
    TokenSeq ref = lowered(references[k]);
    if (ref.size() < 2) continue;
    ++used;
    NgramCounts h = ngrams(hyp, 2);
    NgramCounts r = ngrams(ref, 2);
    long long overlap = 0, hyp_total = 0, ref_total = 0;
    for (const auto& [g, c] : r) ref_total += c;
    for (const auto& [g, c] : h) hyp_total += c;
    for (const auto& [g, c] : h) {
      auto it = r.find(g);
      if (it != r.end()) overlap += std::min(c, it->second);
    }
    double recall = static_cast<double>(overlap) / ref_total;
    double precision =
        hyp_total > 0 ? static_cast<double>(overlap) / hyp_total : 0.0;
    double f1 = (precision + recall) > 0.0
                    ? 2.0 * precision * recall / (precision + recall)
                    : 0.0;
    recall_sum += recall;
    f1_sum += f1;
  }
  if (used == 0)
    throw DataError("rouge2: every reference shorter than 2 tokens");
  return {100.0 * recall_sum / used, 100.0 * f1_sum / used};
}

namespace {

constexpr double kMeteorAlpha = 0.9;
constexpr double kMeteorGamma = 0.5;
constexpr double kMeteorBeta = 3.0;

double meteor_pair(const TokenSeq& hyp_raw, const TokenSeq& ref_raw,
                   const SynonymTable* synonyms) {
  TokenSeq hyp = lowered(hyp_raw);
  TokenSeq ref = lowered(ref_raw);
  if (hyp.empty() || ref.empty()) return 0.0;

  std::vector<int> hyp_match(hyp.size(), -1);
  std::vector<bool> ref_used(ref.size(), false);
  auto run_stage = [&](auto&& matches) {
    for (std::size_t i = 0; i < hyp.size(); ++i) {
      if (hyp_match[i] >= 0) continue;
      for (std::size_t j = 0; j < ref.size(); ++j) {
        if (ref_used[j]) continue;
        if (matches(hyp[i], ref[j])) {
          hyp_match[i] = static_cast<int>(j);
          ref_used[j] = true;
          break;
        }
      }
    }
  };
  run_stage([](const std::string& a, const std::string& b) { return a == b; });
  run_stage([](const std::string& a, const std::string& b) {
    return pre::lemmatize(a) == pre::lemmatize(b);
  });
  if (synonyms) {
    run_stage([&](const std::string& a, const std::string& b) {
      auto ita = synonyms->find(a);
      if (ita != synonyms->end() && ita->second.count(b)) return true;
      auto itb = synonyms->find(b);
      return itb != synonyms->end() && itb->second.count(a);
    });
  }

  int m = 0;
  for (int j : hyp_match)
    if (j >= 0) ++m;
  if (m == 0) return 0.0;
  double precision = static_cast<double>(m) / hyp.size();
  double recall = static_cast<double>(m) / ref.size();
  double f_mean = precision * recall /
                  (kMeteorAlpha * precision + (1.0 - kMeteorAlpha) * recall);

  int chunks = 0;
  int prev_hyp = -2, prev_ref = -2;
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    if (hyp_match[i] < 0) continue;
    if (static_cast<int>(i) != prev_hyp + 1 || hyp_match[i] != prev_ref + 1)
      ++chunks;
    prev_hyp = static_cast<int>(i);
    prev_ref = hyp_match[i];
  }
  double penalty =
      kMeteorGamma * std::pow(static_cast<double>(chunks) / m, kMeteorBeta);
  return 100.0 * f_mean * (1.0 - penalty);
}

}  // namespace

double meteor(const std::vector<TokenSeq>& hypotheses,
              const std::vector<TokenSeq>& references,
              const SynonymTable* synonyms) {
  check_pairs(hypotheses, references);
  double sum = 0.0;
  for (std::size_t k = 0; k < hypotheses.size(); ++k)
    sum += meteor_pair(hypotheses[k], references[k], synonyms);
  return sum / hypotheses.size();
}

MetricReport evaluate_all(const std::vector<TokenSeq>& hypotheses,
                          const std::vector<TokenSeq>& references,
                          const SynonymTable* synonyms) {
  MetricReport report;
  report.bleu2 = bleu2(hypotheses, references);
  auto [recall, f1] = rouge2(hypotheses, references);
  report.rouge2_recall = recall;
  report.rouge2_f1 = f1;
  report.meteor = meteor(hypotheses, references, synonyms);
  double len = 0.0;
  for (const auto& h : hypotheses) len += static_cast<double>(h.size());
  report.mean_output_length = len / hypotheses.size();
  return report;
}

double coverage_report(const std::vector<mlm::AlignmentResult>& alignments) {
  if (alignments.empty()) throw DataError("coverage_report: empty input");
  long long aligned = 0, total = 0;
  for (const auto& a : alignments) {
    aligned += a.aligned_items;
    total += a.total_items;
  }
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(aligned) / total;
}

std::optional<double> claim_realization_rate(
    const std::vector<GeneratedForAnalysis>& samples,
    const pre::ClaimClassifier& clf) {
  long long claim_aligned = 0, labeled_claim = 0;
  for (const auto& g : samples) {
    auto spans = mlm::sentence_spans(g.tokens);
    for (std::size_t s = 0; s < spans.size() &&
                            s < g.alignment.sentence_items.size(); ++s) {
      const auto& item = g.alignment.sentence_items[s];
      if (!item) continue;
      if (*item >= static_cast<int>(g.item_has_claim.size()) ||
          !g.item_has_claim[*item])
        continue;
      ++claim_aligned;
      TokenSeq sentence(g.tokens.begin() + spans[s].first,
                        g.tokens.begin() + spans[s].second);
      if (clf.classify(join_tokens(sentence)) == pre::SentenceLabel::kClaim)
        ++labeled_claim;
    }
  }
  if (claim_aligned == 0) return std::nullopt;
  return 100.0 * static_cast<double>(labeled_claim) / claim_aligned;
}

}  // namespace dyploc::eval
