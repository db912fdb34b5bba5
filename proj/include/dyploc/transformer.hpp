#ifndef DYPLOC_TRANSFORMER_HPP
#define DYPLOC_TRANSFORMER_HPP

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "dyploc/tape.hpp"

namespace dyploc::nn {

struct ModelConfig {
  int vocab_size = 0;   // set from the vocabulary
  int embed_dim = 64;   // model width
  int ff_dim = 128;
  int heads = 2;
  int enc_layers = 1;
  int dec_layers = 1;
  int plan_hidden = 32; // hidden width of the plan scorer
  int max_src_len = 128;
  int max_tgt_len = 256;

  bool operator==(const ModelConfig&) const = default;
};

// Flat named-parameter container. Registration order is fixed, which keeps
// checkpoints, Adam state and finite-difference sweeps aligned.
class ParamStore {
 public:
  Mat& add(const std::string& name, int rows, int cols);
  Mat& get(const std::string& name);
  const Mat& get(const std::string& name) const;
  bool has(const std::string& name) const { return values_.count(name) > 0; }
  const std::vector<std::string>& names() const { return names_; }
  std::int64_t total_size() const;
  void init_uniform(double scale, std::mt19937_64& rng);

 private:
  std::vector<std::string> names_;
  std::map<std::string, Mat> values_;
};

// Per-forward handles: every parameter registered as a tape input.
using ParamVars = std::map<std::string, Var>;

// Transformer encoder-decoder shared by all content items, plus the plan
// scorer weights. Parameters live in `params`; forward passes build a fresh
// tape each time.
class Transformer {
 public:
  Transformer() = default;
  explicit Transformer(const ModelConfig& config);

  void init(std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  ParamVars push_params(Tape& tape) const;

  // Encoder over one token sequence. Returns the T x d last-layer states.
  Var encode(Tape& tape, const ParamVars& p,
             const std::vector<int>& src_ids) const;

  // Decoder over a (teacher-forced or generated) prefix, cross-attending to
  // enc_out. Returns the T x d last-layer states.
  Var decode_states(Tape& tape, const ParamVars& p,
                    const std::vector<int>& tgt_ids, Var enc_out) const;

  // T x vocab logits from decoder states.
  Var output_logits(Tape& tape, const ParamVars& p, Var dec_states) const;

  // Plan score column e_i (T x 1) for one item: W_o tanh(W_d [h_i; s_t]).
  Var plan_score_column(Tape& tape, const ParamVars& p, Var h_item_row,
                        Var dec_states) const;

 private:
  Var attention(Tape& tape, const ParamVars& p, const std::string& prefix,
                Var q_in, Var kv_in, bool causal) const;
  Var ffn_block(Tape& tape, const ParamVars& p, const std::string& prefix,
                Var x) const;

  ModelConfig config_;
  ParamStore params_;
};

}  // namespace dyploc::nn

#endif
