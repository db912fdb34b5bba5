#ifndef DYPLOC_EVAL_METRICS_HPP
#define DYPLOC_EVAL_METRICS_HPP

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dyploc/content_model.hpp"
#include "dyploc/mixed_lm.hpp"
#include "dyploc/preprocess.hpp"

namespace dyploc::eval {

struct MetricReport {
  double bleu2 = 0.0;
  double rouge2_recall = 0.0;
  double rouge2_f1 = 0.0;
  double meteor = 0.0;
  double mean_output_length = 0.0;
};

// Corpus-level BLEU with uniform unigram/bigram weights, brevity penalty and
// 1e-9 smoothing of zero modified precisions. Returns a percentage.
double bleu2(const std::vector<TokenSeq>& hypotheses,
             const std::vector<TokenSeq>& references);

// Mean per-pair bigram (recall, F1) percentages; pairs whose reference has
// fewer than 2 tokens are skipped. Throws if every pair is skipped.
std::pair<double, double> rouge2(const std::vector<TokenSeq>& hypotheses,
                                 const std::vector<TokenSeq>& references);

using SynonymTable = std::map<std::string, std::set<std::string>>;

// Exact / stem / synonym matching stages; alpha=0.9, gamma=0.5, beta=3.
double meteor(const std::vector<TokenSeq>& hypotheses,
              const std::vector<TokenSeq>& references,
              const SynonymTable* synonyms = nullptr);

MetricReport evaluate_all(const std::vector<TokenSeq>& hypotheses,
                          const std::vector<TokenSeq>& references,
                          const SynonymTable* synonyms = nullptr);

// Micro-averaged item coverage percentage over alignment results.
double coverage_report(const std::vector<mlm::AlignmentResult>& alignments);

// One generated output with its alignment and the claim-flags of its items.
struct GeneratedForAnalysis {
  TokenSeq tokens;
  mlm::AlignmentResult alignment;
  std::vector<bool> item_has_claim;  // indexed by content item
};

// Fraction of claim-aligned output sentences classified as claims, as a
// percentage; nullopt when no sentence aligns to a claim-bearing item.
std::optional<double> claim_realization_rate(
    const std::vector<GeneratedForAnalysis>& samples,
    const pre::ClaimClassifier& clf);

}  // namespace dyploc::eval

#endif
