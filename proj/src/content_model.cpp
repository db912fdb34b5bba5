#include "dyploc/content_model.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace dyploc {

using nlohmann::json;

TokenSeq tokenize_whitespace(const std::string& text) {
  TokenSeq out;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::string join_tokens(const TokenSeq& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

namespace {

void check_no_segmenter(const std::string& element, const char* field) {
  if (element.find(kSegmenter) != std::string::npos) {
    throw DataError(std::string("segmenter token inside ") + field + ": " +
                    element);
  }
}

}  // namespace

SerializedItem serialize_item(const TokenSeq& title, const ContentItem& item) {
  if (item.preserialized) return {*item.preserialized};
  if (title.empty()) throw DataError("serialize_item: empty title");

  SerializedItem out;
  for (const auto& t : title) {
    check_no_segmenter(t, "title");
    out.tokens.push_back(t);
  }
  out.tokens.push_back(kSegmenter);
  for (const auto& e : item.entities) {  // std::set: lexicographic
    check_no_segmenter(e, "entities");
    out.tokens.push_back(e);
  }
  out.tokens.push_back(kSegmenter);
  std::set<std::string> concepts = item.core_concepts;
  concepts.insert(item.expanded_concepts.begin(),
                  item.expanded_concepts.end());
  for (const auto& c : concepts) {
    check_no_segmenter(c, "concepts");
    out.tokens.push_back(c);
  }
  if (item.claim) {
    check_no_segmenter(*item.claim, "claim");
    out.tokens.push_back(kSegmenter);
    for (auto& t : tokenize_whitespace(*item.claim)) out.tokens.push_back(t);
  }
  return out;
}

namespace {

std::set<std::string> keep_first(const std::set<std::string>& s, int cap) {
  std::set<std::string> out;
  int n = 0;
  for (const auto& e : s) {
    if (n++ >= cap) break;
    out.insert(e);
  }
  return out;
}

}  // namespace

void truncate_to_caps(Sample& sample) {
  if (static_cast<int>(sample.items.size()) > kMaxItemsPerSample) {
    sample.items.resize(kMaxItemsPerSample);
  }
  for (auto& item : sample.items) {
    item.entities = keep_first(item.entities, kMaxEntitiesPerItem);
    // Core concepts have priority over expanded ones under the shared cap.
    item.core_concepts = keep_first(item.core_concepts, kMaxConceptsPerItem);
    int room = kMaxConceptsPerItem - static_cast<int>(item.core_concepts.size());
    item.expanded_concepts = keep_first(item.expanded_concepts, room);
  }
  if (static_cast<int>(sample.target.size()) > kMaxTargetTokens) {
    sample.target.resize(kMaxTargetTokens);
    if (sample.plan_labels.size() > sample.target.size())
      sample.plan_labels.resize(sample.target.size());
  }
  // Labels pointing at dropped items become "none".
  for (auto& label : sample.plan_labels) {
    if (label && *label >= static_cast<int>(sample.items.size()))
      label = std::nullopt;
  }
}

namespace {

bool is_lower_nonempty(const std::string& s) {
  if (s.empty()) return false;
  return std::none_of(s.begin(), s.end(),
                      [](unsigned char c) { return std::isupper(c); });
}

}  // namespace

void validate_sample(const Sample& sample) {
  if (sample.items.empty() ||
      static_cast<int>(sample.items.size()) > kMaxItemsPerSample)
    throw DataError("sample " + sample.id + ": invalid field items (count " +
                    std::to_string(sample.items.size()) + ")");
  for (const auto& item : sample.items) {
    if (item.preserialized) continue;
    if (static_cast<int>(item.entities.size()) > kMaxEntitiesPerItem)
      throw DataError("sample " + sample.id + ": invalid field entities");
    if (static_cast<int>(item.core_concepts.size() +
                         item.expanded_concepts.size()) > kMaxConceptsPerItem)
      throw DataError("sample " + sample.id + ": invalid field concepts");
    for (const auto& c : item.core_concepts) {
      if (!is_lower_nonempty(c))
        throw DataError("sample " + sample.id +
                        ": invalid field core_concepts (" + c + ")");
      if (item.expanded_concepts.count(c))
        throw DataError("sample " + sample.id +
                        ": core/expanded overlap on " + c);
    }
    for (const auto& c : item.expanded_concepts) {
      if (!is_lower_nonempty(c))
        throw DataError("sample " + sample.id +
                        ": invalid field expanded_concepts (" + c + ")");
    }
  }
  if (sample.plan_labels.size() != sample.target.size())
    throw DataError("sample " + sample.id +
                    ": invalid field plan_labels (length " +
                    std::to_string(sample.plan_labels.size()) + " vs target " +
                    std::to_string(sample.target.size()) + ")");
  for (const auto& label : sample.plan_labels) {
    if (label && (*label < 0 || *label >= static_cast<int>(sample.items.size())))
      throw DataError("sample " + sample.id +
                      ": invalid field plan_labels (index out of range)");
  }
}

namespace {

json item_to_json(const ContentItem& item) {
  json j;
  j["entities"] = std::vector<std::string>(item.entities.begin(),
                                           item.entities.end());
  j["core_concepts"] = std::vector<std::string>(item.core_concepts.begin(),
                                                item.core_concepts.end());
  j["expanded_concepts"] = std::vector<std::string>(
      item.expanded_concepts.begin(), item.expanded_concepts.end());
  if (item.claim) j["claim"] = *item.claim;
  if (item.preserialized) j["preserialized"] = *item.preserialized;
  return j;
}

ContentItem item_from_json(const json& j) {
  ContentItem item;
  auto read_set = [&](const char* key, std::set<std::string>& out) {
    if (!j.contains(key)) return;  // absent element sets are empty
    for (const auto& v : j.at(key)) out.insert(v.get<std::string>());
  };
  read_set("entities", item.entities);
  read_set("core_concepts", item.core_concepts);
  read_set("expanded_concepts", item.expanded_concepts);
  if (j.contains("claim")) item.claim = j.at("claim").get<std::string>();
  if (j.contains("preserialized"))
    item.preserialized = j.at("preserialized").get<TokenSeq>();
  return item;
}

}  // namespace

std::vector<Sample> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path.string());
  std::vector<Sample> samples;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Sample s;
    try {
      json j = json::parse(line);
      s.id = j.at("id").get<std::string>();
      s.title = tokenize_whitespace(j.at("title").get<std::string>());
      if (!j.contains("items")) throw DataError("missing field items");
      for (const auto& ji : j.at("items")) s.items.push_back(item_from_json(ji));
      if (!j.contains("target")) throw DataError("missing field target");
      s.target = tokenize_whitespace(j.at("target").get<std::string>());
      if (!j.contains("plan_labels")) throw DataError("missing field plan_labels");
      for (const auto& jl : j.at("plan_labels")) {
        if (jl.is_null())
          s.plan_labels.emplace_back(std::nullopt);
        else
          s.plan_labels.emplace_back(jl.get<int>());
      }
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": malformed record: " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " +
                      e.what());
    }
    truncate_to_caps(s);
    try {
      validate_sample(s);
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " +
                      e.what());
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

void save_corpus(const std::vector<Sample>& samples,
                 const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write corpus file: " + path.string());
  for (const auto& s : samples) {
    json j;
    j["id"] = s.id;
    j["title"] = join_tokens(s.title);
    j["items"] = json::array();
    for (const auto& item : s.items) j["items"].push_back(item_to_json(item));
    j["target"] = join_tokens(s.target);
    json labels = json::array();
    for (const auto& label : s.plan_labels) {
      if (label)
        labels.push_back(*label);
      else
        labels.push_back(nullptr);
    }
    j["plan_labels"] = labels;
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("write failure on " + path.string());
}

}  // namespace dyploc
