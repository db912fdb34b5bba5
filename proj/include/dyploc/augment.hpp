#ifndef DYPLOC_AUGMENT_HPP
#define DYPLOC_AUGMENT_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dyploc/content_model.hpp"
#include "dyploc/mixed_lm.hpp"

namespace dyploc::aug {

// Smallest descending-probability prefix with cumulative mass >= p, ties by
// ascending index, renormalized. Throws NumericError for non-normalized
// input, DataError for p <= 0 or p > 1.
Eigen::VectorXd nucleus_filter(const Eigen::VectorXd& dist, double p);

// Small conditional encoder-decoder: the mixed-LM architecture with the item
// count fixed to 1.
class ConditionalGenerator {
 public:
  using Pair = std::pair<TokenSeq, TokenSeq>;  // (condition, target)

  static ConditionalGenerator train(const std::vector<Pair>& pairs,
                                    const nn::ModelConfig& model_config,
                                    const mlm::TrainConfig& train_config);

  bool trained() const { return trained_; }
  const mlm::MixedLM& model() const { return model_; }

  TokenSeq greedy(const TokenSeq& condition, int max_len = 64) const;
  TokenSeq sample_nucleus(const TokenSeq& condition, double nucleus_p,
                          std::uint64_t seed, int max_len = 64) const;

  void save(const std::filesystem::path& path) const { model_.save(path); }
  static ConditionalGenerator load(const std::filesystem::path& path);

 private:
  mlm::MixedLM model_;
  bool trained_ = false;
};

// Eq. 1 surrogate: greedy decode of extra concepts, deduplicated and with
// core hits filtered out.
std::set<std::string> expand_concepts(const TokenSeq& title,
                                      const std::set<std::string>& entities,
                                      const std::set<std::string>& core,
                                      const ConditionalGenerator& g);

// Claim from title + entities via nucleus sampling; fixed seed, fixed output.
std::string generate_claim(const TokenSeq& title,
                           const std::set<std::string>& entities,
                           const ConditionalGenerator& g, double nucleus_p,
                           std::uint64_t seed);

// Condition used by the concept expander / claim generator.
TokenSeq concept_condition(const TokenSeq& title, const ContentItem& item);
TokenSeq claim_condition(const TokenSeq& title, const ContentItem& item);

// Training pairs harvested from a gold corpus.
std::vector<ConditionalGenerator::Pair> concept_training_pairs(
    const std::vector<Sample>& corpus);
std::vector<ConditionalGenerator::Pair> claim_training_pairs(
    const std::vector<Sample>& corpus);

// Replaces gold expanded concepts (mode "concepts") or claims (mode
// "claims") with generator predictions, in place.
void augment_corpus(std::vector<Sample>& corpus, const std::string& mode,
                    const ConditionalGenerator& g, double nucleus_p,
                    std::uint64_t seed);

}  // namespace dyploc::aug

#endif
