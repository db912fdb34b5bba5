#ifndef DYPLOC_MIXED_LM_HPP
#define DYPLOC_MIXED_LM_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dyploc/content_model.hpp"
#include "dyploc/transformer.hpp"

namespace dyploc::mlm {

using nn::Mat;

// Closed training vocabulary over lowercased whitespace tokens.
struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kSeg = 4;

  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> index;

  static Vocabulary build(const std::vector<Sample>& samples);
  static Vocabulary build_from_sequences(const std::vector<TokenSeq>& seqs);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens.size()); }
  int id(const std::string& token) const;
  std::vector<int> encode(const TokenSeq& seq) const;
  TokenSeq decode(const std::vector<int>& ids) const;
};

struct StepPlanScores {
  Eigen::VectorXd raw;   // e_it per item
  Eigen::VectorXd dist;  // softmax over items
};

struct TrainStepOutput {
  double l_gen = 0.0;
  double l_plan = 0.0;
  double total = 0.0;
};

struct EncodedItems {
  std::vector<Mat> states;                  // per-item token-level states
  std::vector<Eigen::RowVectorXd> summaries;  // h_i: first-token last-layer state
};

enum class DecodeMode { kWeighted, kGreedySelect, kRandomSelect };

DecodeMode decode_mode_from_string(const std::string& name);
std::string to_string(DecodeMode mode);

struct DecodeResult {
  std::vector<int> token_ids;         // emitted tokens, EOS excluded
  std::vector<StepPlanScores> steps;  // the d actually used per token
};

struct AlignmentResult {
  std::vector<std::optional<int>> token_items;     // per-token mapping
  std::vector<std::optional<int>> sentence_items;  // per-sentence alignment
  int total_items = 0;
  int aligned_items = 0;
  double coverage() const {
    return total_items == 0 ? 0.0
                            : static_cast<double>(aligned_items) / total_items;
  }
};

// Free-standing pieces of the mixture step, kept independent of the model so
// they can be checked against brute-force oracles.

// e = W_o^T tanh(W_d^T [h; s]) per item, then softmax. W_d is (2d x ph),
// W_o is (ph x 1); h and s are d-vectors.
StepPlanScores plan_scores(const Mat& w_d, const Mat& w_o,
                           const std::vector<Eigen::RowVectorXd>& summaries,
                           const std::vector<Eigen::RowVectorXd>& dec_states);

// p(y) = sum_i d_i * p_i(y). Each p_i must sum to 1 within 1e-6.
Eigen::VectorXd mixture_step(const std::vector<Eigen::VectorXd>& item_dists,
                             const StepPlanScores& d);

// Sentence spans over a token sequence: a sentence ends at a token whose
// last character is '.', '!' or '?'. Returns [begin, end) pairs.
std::vector<std::pair<int, int>> sentence_spans(const TokenSeq& tokens);

// Token -> item via argmax d with d > 0.5; a sentence is aligned iff all of
// its tokens map to the same item.
AlignmentResult align_output(const std::vector<StepPlanScores>& steps,
                             const std::vector<std::pair<int, int>>& spans,
                             int item_count);

struct TrainConfig {
  int batch_size = 8;
  double learning_rate = 3e-4;
  int patience = 3;
  int max_epochs = 50;
  std::uint64_t seed = 1;
  double plan_loss_weight = 1.0;
};

struct EpochStats {
  int epoch = 0;
  double train_l_gen = 0.0;
  double train_l_plan = 0.0;
  double train_total = 0.0;
  double val_loss = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;
  double best_val_loss = 0.0;
};

// Per-sample view already mapped to token ids.
struct EncodedSample {
  std::string id;
  std::vector<std::vector<int>> item_ids;  // serialized, truncated to max_src_len
  std::vector<int> target_ids;             // truncated, no EOS
  std::vector<std::optional<int>> plan_labels;  // aligned to target_ids
};

class MixedLM {
 public:
  MixedLM() = default;
  MixedLM(const nn::ModelConfig& config, Vocabulary vocab);

  void init(std::uint64_t seed);

  const nn::ModelConfig& config() const { return tf_.config(); }
  const Vocabulary& vocab() const { return vocab_; }
  nn::Transformer& transformer() { return tf_; }
  const nn::Transformer& transformer() const { return tf_; }

  // Maps a Sample onto ids; applies length caps. `mask` optionally names an
  // element ("claims", "entities", "concepts", "expanded_concepts") cleared
  // before serialization.
  EncodedSample encode_sample(const Sample& sample,
                              const std::string& mask = "") const;

  EncodedItems encode_items(const std::vector<std::vector<int>>& item_ids) const;

  // Teacher-forced loss; EOS appended internally. When `grads` is non-null
  // gradients of `total` are accumulated into it.
  TrainStepOutput forward_train(const EncodedSample& sample,
                                double plan_loss_weight = 1.0,
                                nn::ParamStore* grads = nullptr) const;

  // Per-step plan distributions under teacher forcing (for alignment of
  // reference text and for tests). One entry per target token incl. EOS.
  std::vector<StepPlanScores> teacher_forced_plan(
      const EncodedSample& sample) const;

  // Teacher-forced token-level argmax accuracy against the gold target.
  double teacher_forced_accuracy(const EncodedSample& sample) const;

  DecodeResult decode(const std::vector<std::vector<int>>& item_ids,
                      DecodeMode mode, int max_len, std::uint64_t seed) const;

  // Mixture next-token distribution (weighted d) for an explicit prefix.
  // The prefix must start with BOS.
  Eigen::VectorXd next_token_distribution(
      const std::vector<std::vector<int>>& item_ids,
      const std::vector<int>& prefix) const;

  TrainReport train(const std::vector<EncodedSample>& train_set,
                    const std::vector<EncodedSample>& val_set,
                    const TrainConfig& config,
                    const std::function<void(const EpochStats&)>& log = {});

  void save(const std::filesystem::path& path) const;
  static MixedLM load(const std::filesystem::path& path);

 private:
  nn::Transformer tf_;
  Vocabulary vocab_;
};

// Analytic-vs-central-difference gradient comparison on a tiny model.
// Returns the max relative error over all parameters.
double finite_difference_check(const nn::ModelConfig& config,
                               std::uint64_t seed, double step = 1e-5);

}  // namespace dyploc::mlm

#endif
