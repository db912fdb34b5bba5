#include "dyploc/preprocess.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dyploc/errors.hpp"

namespace dyploc::pre {

namespace {

std::string lowercase(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '\'';
}

std::string strip_punct(const std::string& token) {
  std::size_t b = 0, e = token.size();
  while (b < e && !is_word_char(token[b])) ++b;
  while (e > b && !is_word_char(token[e - 1])) --e;
  return token.substr(b, e - b);
}

std::vector<std::string> split_tsv(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open resource file: " + path.string());
  return in;
}

}  // namespace

void EntityDictionary::add(const std::string& mention,
                           const std::string& identifier) {
  if (mention.empty()) throw DataError("entity dictionary: empty mention");
  std::string key = lowercase(mention);
  mapping[key] = identifier;
  int tokens = static_cast<int>(std::count(key.begin(), key.end(), ' ')) + 1;
  max_mention_tokens = std::max(max_mention_tokens, tokens);
}

EntityDictionary EntityDictionary::load(const std::filesystem::path& tsv) {
  auto in = open_or_throw(tsv);
  EntityDictionary dict;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_tsv(line);
    if (fields.size() != 2)
      throw DataError(tsv.string() + ":" + std::to_string(lineno) +
                      ": expected mention<TAB>identifier");
    dict.add(fields[0], fields[1]);
  }
  return dict;
}

ConceptLexicon ConceptLexicon::load(const std::filesystem::path& tsv) {
  auto in = open_or_throw(tsv);
  ConceptLexicon lex;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_tsv(line);
    if (fields.size() != 2 || fields[0].empty())
      throw DataError(tsv.string() + ":" + std::to_string(lineno) +
                      ": expected lemma<TAB>pos");
    lex.entries.emplace(lowercase(fields[0]), fields[1]);
  }
  return lex;
}

double ConcretenessLexicon::score(const std::string& word) const {
  auto it = mapping.find(lowercase(word));
  return it == mapping.end() ? 5.0 : it->second;
}

ConcretenessLexicon ConcretenessLexicon::load(const std::filesystem::path& tsv) {
  auto in = open_or_throw(tsv);
  ConcretenessLexicon lex;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_tsv(line);
    if (fields.size() != 2)
      throw DataError(tsv.string() + ":" + std::to_string(lineno) +
                      ": expected word<TAB>score");
    double s;
    try {
      s = std::stod(fields[1]);
    } catch (const std::exception&) {
      throw DataError(tsv.string() + ":" + std::to_string(lineno) +
                      ": bad score " + fields[1]);
    }
    if (s < 0.0 || s > 5.0)
      throw DataError(tsv.string() + ":" + std::to_string(lineno) +
                      ": score out of [0,5]");
    lex.mapping[lowercase(fields[0])] = s;
  }
  return lex;
}

PosTagger default_pos_tagger() {
  static const std::map<std::string, std::string> closed = {
      {"is", "VERB"},    {"are", "VERB"},   {"was", "VERB"},
      {"were", "VERB"},  {"be", "VERB"},    {"been", "VERB"},
      {"have", "VERB"},  {"has", "VERB"},   {"had", "VERB"},
      {"do", "VERB"},    {"does", "VERB"},  {"did", "VERB"},
      {"make", "VERB"},  {"made", "VERB"},  {"go", "VERB"},
      {"went", "VERB"},  {"get", "VERB"},   {"got", "VERB"},
      {"say", "VERB"},   {"said", "VERB"},  {"happen", "VERB"},
      {"run", "VERB"},   {"ran", "VERB"},   {"take", "VERB"},
      {"took", "VERB"},  {"leave", "VERB"}, {"left", "VERB"},
      {"think", "VERB"}, {"know", "VERB"},  {"believe", "VERB"},
      {"refuse", "VERB"}, {"guarantee", "VERB"}, {"ensue", "VERB"},
      {"stop", "VERB"},  {"win", "VERB"},   {"owe", "VERB"},
      {"bring", "VERB"}, {"drive", "VERB"}, {"deal", "VERB"},
      {"compare", "VERB"}, {"change", "VERB"}, {"omit", "VERB"},
      {"the", "DET"},    {"a", "DET"},      {"an", "DET"},
      {"he", "PRON"},    {"she", "PRON"},   {"it", "PRON"},
      {"they", "PRON"},  {"we", "PRON"},    {"i", "PRON"},
      {"you", "PRON"},   {"and", "CONJ"},   {"or", "CONJ"},
      {"but", "CONJ"},   {"not", "ADV"},    {"very", "ADV"},
      {"of", "ADP"},     {"in", "ADP"},     {"on", "ADP"},
      {"to", "ADP"},     {"for", "ADP"},    {"with", "ADP"},
      {"good", "ADJ"},   {"bad", "ADJ"},    {"big", "ADJ"},
      {"staggering", "ADJ"}, {"dire", "ADJ"}, {"reliable", "ADJ"},
  };
  return [](const std::string& word) -> std::string {
    std::string w = lowercase(strip_punct(word));
    if (w.empty()) return "PUNCT";
    auto it = closed.find(w);
    if (it != closed.end()) return it->second;
    auto ends = [&](const char* suffix) {
      std::string s(suffix);
      return w.size() > s.size() && w.compare(w.size() - s.size(), s.size(), s) == 0;
    };
    if (ends("ly")) return "ADV";
    if (ends("ing") || ends("ed")) return "VERB";
    if (ends("ous") || ends("ful") || ends("ive") || ends("able") || ends("al"))
      return "ADJ";
    return "NOUN";
  };
}

std::string lemmatize(const std::string& word) {
  static const std::map<std::string, std::string> irregular = {
      {"went", "go"},     {"gone", "go"},    {"made", "make"},
      {"ran", "run"},     {"running", "run"}, {"was", "be"},
      {"were", "be"},     {"is", "be"},      {"are", "be"},
      {"been", "be"},     {"has", "have"},   {"had", "have"},
      {"did", "do"},      {"does", "do"},    {"said", "say"},
      {"took", "take"},   {"taken", "take"}, {"left", "leave"},
      {"got", "get"},     {"children", "child"}, {"men", "man"},
      {"women", "woman"}, {"people", "person"}, {"driven", "drive"},
      {"brought", "bring"}, {"making", "make"}, {"driving", "drive"},
      {"leaving", "leave"}, {"comparing", "compare"}, {"changing", "change"},
  };
  std::string w = lowercase(strip_punct(word));
  if (w.empty()) return w;
  auto it = irregular.find(w);
  if (it != irregular.end()) return it->second;
  auto ends = [&](const char* suffix) {
    std::string s(suffix);
    return w.size() > s.size() && w.compare(w.size() - s.size(), s.size(), s) == 0;
  };
  // After stripping -ing/-ed either collapse a doubled consonant (planned ->
  // plan) or restore a dropped final e on a c-v-c stem (refused -> refuse),
  // never both, mirroring the classic stemming rules.
  auto fix_stem = [](std::string s) {
    auto vowel = [](char c) {
      return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
    };
    if (s.size() >= 2 && s[s.size() - 1] == s[s.size() - 2] &&
        s.back() != 'l' && s.back() != 's') {
      s.pop_back();
      return s;
    }
    if (s.size() >= 3 && !vowel(s[s.size() - 1]) && vowel(s[s.size() - 2]) &&
        !vowel(s[s.size() - 3]) && s.back() != 'w' && s.back() != 'x' &&
        s.back() != 'y')
      s.push_back('e');
    return s;
  };
  if (ends("ies") && w.size() > 4) return w.substr(0, w.size() - 3) + "y";
  if (ends("ing") && w.size() > 5) return fix_stem(w.substr(0, w.size() - 3));
  if (ends("ed") && w.size() > 4) return fix_stem(w.substr(0, w.size() - 2));
  if (ends("es") && w.size() > 3) {
    // Full -es only after sibilants (dresses, churches, boxes); otherwise
    // the e belongs to the stem (refuses -> refuse).
    if (ends("sses") || ends("ches") || ends("shes") || ends("xes") ||
        ends("zes"))
      return w.substr(0, w.size() - 2);
    return w.substr(0, w.size() - 1);  // only drop the final s
  }
  if (ends("s") && !ends("ss") && w.size() > 3) return w.substr(0, w.size() - 1);
  return w;
}

std::set<std::string> default_abbreviations() {
  return {"mr.", "mrs.", "ms.", "dr.", "prof.", "u.s.", "u.k.", "e.g.",
          "i.e.", "etc.", "vs.", "st.", "jr.", "sr.", "inc.", "est."};
}

std::set<std::string> load_abbreviations(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  std::set<std::string> abbrevs;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) abbrevs.insert(lowercase(line));
  }
  return abbrevs;
}

std::vector<std::string> segment_sentences(
    const std::string& text, const std::set<std::string>& abbreviations) {
  std::vector<std::string> sentences;
  std::string current;
  const int n = static_cast<int>(text.size());
  auto flush = [&] {
    std::size_t b = current.find_first_not_of(" \t\n\r");
    if (b != std::string::npos) {
      std::size_t e = current.find_last_not_of(" \t\n\r");
      sentences.push_back(current.substr(b, e - b + 1));
    }
    current.clear();
  };
  for (int i = 0; i < n; ++i) {
    current += text[i];
    char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    // Swallow a run of terminators ("?!", "...").
    while (i + 1 < n && (text[i + 1] == '.' || text[i + 1] == '!' ||
                         text[i + 1] == '?' || text[i + 1] == '"' ||
                         text[i + 1] == '\'')) {
      current += text[++i];
    }
    // Boundary requires whitespace followed by an uppercase letter.
    int j = i + 1;
    if (j < n && !std::isspace(static_cast<unsigned char>(text[j]))) continue;
    while (j < n && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j < n && !std::isupper(static_cast<unsigned char>(text[j]))) continue;
    if (c == '.') {
      // Last whitespace-delimited token of the pending sentence.
      std::size_t ws = current.find_last_of(" \t\n\r");
      std::string last = lowercase(
          ws == std::string::npos ? current : current.substr(ws + 1));
      if (abbreviations.count(last)) continue;
    }
    flush();
  }
  flush();
  return sentences;
}

std::set<std::string> link_entities(const TokenSeq& sentence,
                                    const EntityDictionary& dict) {
  std::set<std::string> out;
  std::vector<std::string> norm;
  norm.reserve(sentence.size());
  for (const auto& t : sentence) norm.push_back(lowercase(strip_punct(t)));
  const int n = static_cast<int>(norm.size());
  int i = 0;
  while (i < n) {
    int matched = 0;
    for (int len = std::min(dict.max_mention_tokens, n - i); len >= 1; --len) {
      std::string key;
      for (int k = 0; k < len; ++k) {
        if (k) key += ' ';
        key += norm[i + k];
      }
      auto it = dict.mapping.find(key);
      if (it != dict.mapping.end()) {
        out.insert(it->second);
        matched = len;
        break;
      }
    }
    i += matched > 0 ? matched : 1;
  }
  return out;
}

std::set<std::string> extract_concepts(const TokenSeq& sentence,
                                       const ConceptLexicon& lexicon,
                                       const PosTagger& tagger,
                                       std::map<std::string, std::string>* tags) {
  std::set<std::string> out;
  for (const auto& token : sentence) {
    std::string lemma = lemmatize(token);
    if (lemma.empty()) continue;
    std::string tag = tagger(token);
    if (lexicon.entries.count({lemma, tag})) {
      out.insert(lemma);
      if (tags && !tags->count(lemma)) (*tags)[lemma] = tag;
    }
  }
  return out;
}

std::pair<std::set<std::string>, std::set<std::string>> split_concepts(
    const std::set<std::string>& concepts,
    const std::map<std::string, std::string>& tags,
    const ConcretenessLexicon& lex) {
  std::set<std::string> core, expanded;
  for (const auto& c : concepts) {
    auto it = tags.find(c);
    bool is_verb = it != tags.end() && it->second == "VERB";
    if (is_verb || lex.score(c) < 3.0)
      core.insert(c);
    else
      expanded.insert(c);
  }
  return {core, expanded};
}

namespace {

const std::vector<std::string>& opinion_markers() {
  static const std::vector<std::string> markers = {
      "should", "must",  "ought",  "believe", "think",  "wrong",
      "right",  "never", "always", "clearly", "obviously", "opinion",
      "best",   "worst", "need",   "bad",     "good"};
  return markers;
}

std::vector<std::string> sentence_words(const std::string& sentence) {
  std::vector<std::string> words;
  for (const auto& t : tokenize_whitespace(sentence)) {
    std::string w = lowercase(strip_punct(t));
    if (!w.empty()) words.push_back(w);
  }
  return words;
}

}  // namespace

ClaimClassifier ClaimClassifier::train(const std::vector<std::string>& claims,
                                       const std::vector<std::string>& facts,
                                       int iterations, double learning_rate) {
  if (claims.empty()) throw DataError("claim classifier: empty claim set");
  if (facts.empty()) throw DataError("claim classifier: empty fact set");
  ClaimClassifier clf;
  std::vector<std::pair<std::string, double>> data;
  for (const auto& s : claims) data.emplace_back(s, 1.0);
  for (const auto& s : facts) data.emplace_back(s, 0.0);
  for (const auto& [s, y] : data) {
    for (const auto& w : sentence_words(s))
      clf.feature_index_.emplace(w, static_cast<int>(clf.feature_index_.size()));
  }
  const int vocab = static_cast<int>(clf.feature_index_.size());
  const int dim = vocab + 1 + static_cast<int>(opinion_markers().size());
  clf.weights_.assign(dim, 0.0);

  auto featurize = [&](const std::string& s) {
    std::vector<std::pair<int, double>> feats;
    auto words = sentence_words(s);
    std::map<int, double> counts;
    for (const auto& w : words) {
      auto it = clf.feature_index_.find(w);
      if (it != clf.feature_index_.end()) counts[it->second] += 1.0;
    }
    for (auto [i, c] : counts) feats.emplace_back(i, c);
    feats.emplace_back(vocab, static_cast<double>(words.size()) / 20.0);
    for (std::size_t m = 0; m < opinion_markers().size(); ++m) {
      bool present = std::find(words.begin(), words.end(),
                               opinion_markers()[m]) != words.end();
      if (present) feats.emplace_back(vocab + 1 + static_cast<int>(m), 1.0);
    }
    return feats;
  };

  std::vector<std::vector<std::pair<int, double>>> features;
  features.reserve(data.size());
  for (const auto& [s, y] : data) features.push_back(featurize(s));

  const double inv_n = 1.0 / data.size();
  for (int iter = 0; iter < iterations; ++iter) {
    std::vector<double> grad(dim, 0.0);
    double grad_b = 0.0;
    for (std::size_t k = 0; k < data.size(); ++k) {
      double z = clf.bias_;
      for (auto [i, v] : features[k]) z += clf.weights_[i] * v;
      double p = 1.0 / (1.0 + std::exp(-z));
      double err = p - data[k].second;
      for (auto [i, v] : features[k]) grad[i] += err * v;
      grad_b += err;
    }
    for (int i = 0; i < dim; ++i)
      clf.weights_[i] -= learning_rate * grad[i] * inv_n;
    clf.bias_ -= learning_rate * grad_b * inv_n;
  }

  int hits = 0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    double z = clf.bias_;
    for (auto [i, v] : features[k]) z += clf.weights_[i] * v;
    bool claim = z > 0.0;
    if (claim == (data[k].second > 0.5)) ++hits;
  }
  clf.training_accuracy_ = static_cast<double>(hits) / data.size();
  clf.trained_ = true;
  return clf;
}

double ClaimClassifier::score(const std::string& sentence) const {
  double z = bias_;
  auto words = sentence_words(sentence);
  std::map<int, double> counts;
  for (const auto& w : words) {
    auto it = feature_index_.find(w);
    if (it != feature_index_.end()) counts[it->second] += 1.0;
  }
  for (auto [i, c] : counts) z += weights_[i] * c;
  const int vocab = static_cast<int>(feature_index_.size());
  z += weights_[vocab] * (static_cast<double>(words.size()) / 20.0);
  for (std::size_t m = 0; m < opinion_markers().size(); ++m) {
    if (std::find(words.begin(), words.end(), opinion_markers()[m]) !=
        words.end())
      z += weights_[vocab + 1 + static_cast<int>(m)];
  }
  return z;
}

SentenceLabel ClaimClassifier::classify(const std::string& sentence) const {
  if (!trained_) throw DataError("claim classifier: not trained");
  return score(sentence) > 0.0 ? SentenceLabel::kClaim : SentenceLabel::kFact;
}

double ClaimClassifier::training_accuracy() const {
  if (!trained_) throw DataError("claim classifier: not trained");
  return training_accuracy_;
}

Sample build_sample(const std::string& id, const std::string& title,
                    const std::string& reference, const Resources& resources) {
  Sample sample;
  sample.id = id;
  sample.title = tokenize_whitespace(title);
  auto sentences = segment_sentences(reference, resources.abbreviations);

  std::vector<std::optional<int>> sentence_item(sentences.size());
  int next_item = 0;
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    TokenSeq tokens = tokenize_whitespace(sentences[s]);
    if (static_cast<int>(tokens.size()) < 5) continue;
    ContentItem item;
    item.entities = link_entities(tokens, resources.entities);
    std::map<std::string, std::string> tags;
    auto concepts =
        extract_concepts(tokens, resources.concepts, resources.tagger, &tags);
    auto [core, expanded] =
        split_concepts(concepts, tags, resources.concreteness);
    item.core_concepts = std::move(core);
    item.expanded_concepts = std::move(expanded);
    if (resources.claim_classifier &&
        resources.claim_classifier->classify(sentences[s]) ==
            SentenceLabel::kClaim) {
      item.claim = sentences[s];
    }
    sample.items.push_back(std::move(item));
    sentence_item[s] = next_item++;
  }
  if (sample.items.empty())
    throw DataError("no content items for sample " + id);

  for (std::size_t s = 0; s < sentences.size(); ++s) {
    TokenSeq tokens = tokenize_whitespace(sentences[s]);
    for (const auto& t : tokens) {
      sample.target.push_back(t);
      sample.plan_labels.push_back(sentence_item[s]);
    }
  }
  truncate_to_caps(sample);
  validate_sample(sample);
  return sample;
}

}  // namespace dyploc::pre
