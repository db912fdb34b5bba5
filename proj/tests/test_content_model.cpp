#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "dyploc/content_model.hpp"

using namespace dyploc;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  auto p = fs::temp_directory_path() / ("dyploc_cm_" + name);
  fs::remove(p);
  return p;
}

}  // namespace

TEST_CASE("whitespace tokenization round-trips through join") {
  CHECK(tokenize_whitespace("  a  b\tc\n") == TokenSeq{"a", "b", "c"});
  CHECK(tokenize_whitespace("") == TokenSeq{});
  CHECK(join_tokens({"a", "b", "c"}) == "a b c");
}

TEST_CASE("item serialization orders elements and separates with the segmenter") {
  ContentItem item;
  item.entities = {"United_States"};
  item.core_concepts = {"refuse", "guarantee"};
  auto ser = serialize_item({"Arafat", "Visa", "Refusal"}, item);
  CHECK(join_tokens(ser.tokens) ==
        "Arafat Visa Refusal <s> United_States <s> guarantee refuse");
}

TEST_CASE("serialization with claim appends a fourth element") {
  ContentItem item;
  item.entities = {"b_ent", "a_ent"};
  item.core_concepts = {"run"};
  item.expanded_concepts = {"argue"};
  item.claim = "this must change .";
  auto ser = serialize_item({"topic"}, item);
  CHECK(join_tokens(ser.tokens) ==
        "topic <s> a_ent b_ent <s> argue run <s> this must change .");
}

TEST_CASE("empty element sets collapse to empty segments") {
  ContentItem item;
  item.core_concepts = {"go"};
  auto ser = serialize_item({"t"}, item);
  CHECK(join_tokens(ser.tokens) == "t <s> <s> go");
}

TEST_CASE("segmenter token inside an element is rejected") {
  ContentItem item;
  item.entities = {"bad <s> entity"};
  CHECK_THROWS_AS(serialize_item({"t"}, item), DataError);
}

TEST_CASE("caps drop surplus items, entities, concepts and target tokens") {
  Sample s;
  s.id = "caps";
  s.title = {"t"};
  for (int i = 0; i < 12; ++i) {
    ContentItem item;
    item.core_concepts = {"c" + std::to_string(i)};
    s.items.push_back(item);
  }
  for (int e = 0; e < 25; ++e)
    s.items[0].entities.insert("e" + std::to_string(100 + e));
  for (int c = 0; c < 15; ++c) {
    s.items[1].core_concepts.insert("k" + std::to_string(100 + c));
    s.items[1].expanded_concepts.insert("x" + std::to_string(100 + c));
  }
  for (int t = 0; t < 230; ++t) {
    s.target.push_back("w");
    s.plan_labels.emplace_back(t % 12);
  }
  truncate_to_caps(s);
  CHECK(s.items.size() == kMaxItemsPerSample);
  CHECK(s.items[0].entities.size() == kMaxEntitiesPerItem);
  // lexicographically-first entities survive
  CHECK(s.items[0].entities.count("e100") == 1);
  CHECK(s.items[0].entities.count("e124") == 0);
  // core concepts keep priority over expanded under the shared cap
  CHECK(s.items[1].core_concepts.size() == 16);
  CHECK(s.items[1].expanded_concepts.size() == 4);
  CHECK(s.target.size() == kMaxTargetTokens);
  CHECK(s.plan_labels.size() == kMaxTargetTokens);
  // labels pointing past the retained items become none
  for (std::size_t t = 0; t < s.plan_labels.size(); ++t) {
    if (s.plan_labels[t])
      CHECK(*s.plan_labels[t] < static_cast<int>(s.items.size()));
  }
  CHECK_NOTHROW(validate_sample(s));
}

TEST_CASE("validation names the violated field") {
  Sample s;
  s.id = "";
  CHECK_THROWS_WITH_AS(validate_sample(s), doctest::Contains("id"), DataError);

  s.id = "x";
  s.title = {"t"};
  CHECK_THROWS_WITH_AS(validate_sample(s), doctest::Contains("items"),
                       DataError);

  ContentItem item;
  item.core_concepts = {"go"};
  s.items.push_back(item);
  s.target = {"a", "b"};
  s.plan_labels = {std::optional<int>(0)};  // length mismatch
  CHECK_THROWS_WITH_AS(validate_sample(s), doctest::Contains("plan_labels"),
                       DataError);

  s.plan_labels = {std::optional<int>(0), std::optional<int>(3)};
  CHECK_THROWS_WITH_AS(validate_sample(s), doctest::Contains("plan_labels"),
                       DataError);
}

TEST_CASE("corpus io round-trips randomized samples") {
  std::mt19937_64 rng(7);
  std::vector<Sample> corpus;
  const std::vector<std::string> words = {"alpha", "beta", "gamma", "delta"};
  for (int n = 0; n < 20; ++n) {
    Sample s;
    s.id = "r" + std::to_string(n);
    s.title = {"topic", std::to_string(n)};
    int n_items = 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < n_items; ++i) {
      ContentItem item;
      item.entities.insert("Ent_" + std::to_string(rng() % 6));
      item.core_concepts.insert(words[rng() % words.size()]);
      if (rng() % 2)
        item.expanded_concepts.insert("x" + words[rng() % words.size()]);
      if (rng() % 2) item.claim = "claim " + std::to_string(rng() % 5) + " .";
      s.items.push_back(std::move(item));
    }
    int len = 5 + static_cast<int>(rng() % 10);
    for (int t = 0; t < len; ++t) {
      s.target.push_back(words[rng() % words.size()]);
      if (rng() % 3 == 0)
        s.plan_labels.emplace_back();
      else
        s.plan_labels.emplace_back(static_cast<int>(rng() % n_items));
    }
    corpus.push_back(std::move(s));
  }
  auto path = temp_file("roundtrip.jsonl");
  save_corpus(corpus, path);
  auto loaded = load_corpus(path);
  CHECK(loaded == corpus);
  fs::remove(path);
}

TEST_CASE("malformed corpus lines report the line number") {
  auto path = temp_file("bad.jsonl");
  {
    std::ofstream out(path);
    out << R"({"id":"ok","title":"t","items":[{"core_concepts":["go"]}],)"
        << R"("target":"a","plan_labels":[0]})" << "\n";
    out << "{not json}\n";
  }
  CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains(":2"), DataError);
  fs::remove(path);
}

TEST_CASE("missing corpus file is a data error") {
  CHECK_THROWS_AS(load_corpus(temp_file("does_not_exist.jsonl")), DataError);
}
