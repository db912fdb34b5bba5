#ifndef DYPLOC_PREPROCESS_HPP
#define DYPLOC_PREPROCESS_HPP

#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dyploc/content_model.hpp"

namespace dyploc::pre {

// mention (lowercased) -> canonical identifier with underscores.
struct EntityDictionary {
  std::map<std::string, std::string> mapping;
  int max_mention_tokens = 0;

  void add(const std::string& mention, const std::string& identifier);
  static EntityDictionary load(const std::filesystem::path& tsv);
};

// (lemma, POS) entries to match lemmatized unigrams against.
struct ConceptLexicon {
  std::set<std::pair<std::string, std::string>> entries;
  static ConceptLexicon load(const std::filesystem::path& tsv);
};

// word -> concreteness in [0, 5]; missing words default to 5.0.
struct ConcretenessLexicon {
  std::map<std::string, double> mapping;
  double score(const std::string& word) const;
  static ConcretenessLexicon load(const std::filesystem::path& tsv);
};

using PosTagger = std::function<std::string(const std::string&)>;
PosTagger default_pos_tagger();

// Lookup table plus -s/-es/-ed/-ing stripping.
std::string lemmatize(const std::string& word);

std::set<std::string> default_abbreviations();
std::set<std::string> load_abbreviations(const std::filesystem::path& path);

// Rule-based splitting on [.?!] + whitespace + uppercase, guarded by the
// abbreviation list. Concatenation of the output equals the input modulo
// whitespace.
std::vector<std::string> segment_sentences(
    const std::string& text,
    const std::set<std::string>& abbreviations = default_abbreviations());

// Longest-match, left-to-right, case-insensitive; token edges are stripped
// of punctuation before matching.
std::set<std::string> link_entities(const TokenSeq& sentence,
                                    const EntityDictionary& dict);

// Lemma kept iff (lemma(token), tag(token)) is a lexicon entry. Also records
// the tag each kept lemma matched with.
std::set<std::string> extract_concepts(const TokenSeq& sentence,
                                       const ConceptLexicon& lexicon,
                                       const PosTagger& tagger,
                                       std::map<std::string, std::string>* tags =
                                           nullptr);

// core = verbs or concreteness < 3.0; everything else expanded.
std::pair<std::set<std::string>, std::set<std::string>> split_concepts(
    const std::set<std::string>& concepts,
    const std::map<std::string, std::string>& tags,
    const ConcretenessLexicon& lex);

enum class SentenceLabel { kClaim, kFact };

// Logistic regression over unigram counts, sentence length and
// modal/opinion markers.
class ClaimClassifier {
 public:
  static ClaimClassifier train(const std::vector<std::string>& claims,
                               const std::vector<std::string>& facts,
                               int iterations = 500, double learning_rate = 0.5);
  SentenceLabel classify(const std::string& sentence) const;
  double training_accuracy() const;
  bool trained() const { return trained_; }

 private:
  double score(const std::string& sentence) const;  // sigmoid argument
  std::map<std::string, int> feature_index_;
  std::vector<double> weights_;
  double bias_ = 0.0;
  double training_accuracy_ = 0.0;
  bool trained_ = false;
};

struct Resources {
  EntityDictionary entities;
  ConceptLexicon concepts;
  ConcretenessLexicon concreteness;
  std::set<std::string> abbreviations = default_abbreviations();
  PosTagger tagger = default_pos_tagger();
  const ClaimClassifier* claim_classifier = nullptr;  // optional
};

// One ContentItem per retained sentence (>= 5 tokens); plan labels map each
// target token to its sentence's item, or none for discarded sentences.
Sample build_sample(const std::string& id, const std::string& title,
                    const std::string& reference, const Resources& resources);

}  // namespace dyploc::pre

#endif
