#ifndef DYPLOC_CONTENT_MODEL_HPP
#define DYPLOC_CONTENT_MODEL_HPP

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dyploc/errors.hpp"

namespace dyploc {

using TokenSeq = std::vector<std::string>;

// Reserved segmenter token separating the elements of a serialized item.
inline constexpr const char* kSegmenter = "<s>";

inline constexpr int kMaxItemsPerSample = 10;
inline constexpr int kMaxEntitiesPerItem = 20;
inline constexpr int kMaxConceptsPerItem = 20;
inline constexpr int kMaxTargetTokens = 200;

// One planning unit: entities, concepts (core + expanded) and an optional
// claim sentence. `preserialized` bypasses serialize_item; it is used by the
// concatenation baseline whose single item is not expressible as element sets.
struct ContentItem {
  std::set<std::string> entities;
  std::set<std::string> core_concepts;
  std::set<std::string> expanded_concepts;
  std::optional<std::string> claim;
  std::optional<TokenSeq> preserialized;

  bool operator==(const ContentItem&) const = default;
};

// A titled example: unordered content items (storage order kept for
// reproducibility), target tokens, and gold token -> item plan labels.
struct Sample {
  std::string id;
  TokenSeq title;
  std::vector<ContentItem> items;
  TokenSeq target;
  // One entry per target token; nullopt for tokens of discarded sentences.
  std::vector<std::optional<int>> plan_labels;

  bool operator==(const Sample&) const = default;
};

struct SerializedItem {
  TokenSeq tokens;
};

TokenSeq tokenize_whitespace(const std::string& text);
std::string join_tokens(const TokenSeq& tokens);

// title <s> entities <s> concepts [<s> claim]; elements sorted
// lexicographically, entity underscores kept. Throws DataError if any
// element contains the segmenter token.
SerializedItem serialize_item(const TokenSeq& title, const ContentItem& item);

// Enforces caps: first kMaxItemsPerSample items in storage order,
// lexicographically-first entities, core concepts before expanded up to the
// concept cap, target truncated to kMaxTargetTokens.
void truncate_to_caps(Sample& sample);

// Throws DataError naming the violated field.
void validate_sample(const Sample& sample);

// JSON-lines corpus I/O. load validates and truncates every record; errors
// carry the 1-based line number.
std::vector<Sample> load_corpus(const std::filesystem::path& path);
void save_corpus(const std::vector<Sample>& samples,
                 const std::filesystem::path& path);

}  // namespace dyploc

#endif
