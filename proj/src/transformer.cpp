#include "dyploc/transformer.hpp"

#include <cmath>
#include <limits>

#include "dyploc/errors.hpp"

namespace dyploc::nn {

Mat& ParamStore::add(const std::string& name, int rows, int cols) {
  auto [it, inserted] = values_.emplace(name, Mat::Zero(rows, cols));
  if (inserted) names_.push_back(name);
  return it->second;
}

Mat& ParamStore::get(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) throw DataError("unknown parameter: " + name);
  return it->second;
}

const Mat& ParamStore::get(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw DataError("unknown parameter: " + name);
  return it->second;
}

std::int64_t ParamStore::total_size() const {
  std::int64_t n = 0;
  for (const auto& name : names_) n += values_.at(name).size();
  return n;
}

void ParamStore::init_uniform(double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (const auto& name : names_) {
    Mat& m = values_.at(name);
    if (name.find("ln_gain") != std::string::npos) {
      m.setOnes();
    } else if (name.find("ln_bias") != std::string::npos ||
               name.find("bias") != std::string::npos) {
      m.setZero();
    } else {
      for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) m(r, c) = dist(rng);
    }
  }
}

Transformer::Transformer(const ModelConfig& config) : config_(config) {
  const int d = config_.embed_dim;
  if (d % config_.heads != 0)
    throw DataError("embed_dim must be divisible by heads");
  params_.add("embed", config_.vocab_size, d);
  params_.add("pos_enc", config_.max_src_len, d);
  params_.add("pos_dec", config_.max_tgt_len, d);
  auto add_attn = [&](const std::string& prefix) {
    params_.add(prefix + ".wq", d, d);
    params_.add(prefix + ".wk", d, d);
    params_.add(prefix + ".wv", d, d);
    params_.add(prefix + ".wo", d, d);
    params_.add(prefix + ".bias_o", 1, d);
    params_.add(prefix + ".ln_gain", 1, d);
    params_.add(prefix + ".ln_bias", 1, d);
  };
  auto add_ffn = [&](const std::string& prefix) {
    params_.add(prefix + ".w1", d, config_.ff_dim);
    params_.add(prefix + ".b1", 1, config_.ff_dim);
    params_.add(prefix + ".w2", config_.ff_dim, d);
    params_.add(prefix + ".b2", 1, d);
    params_.add(prefix + ".ln_gain", 1, d);
    params_.add(prefix + ".ln_bias", 1, d);
  };
  for (int l = 0; l < config_.enc_layers; ++l) {
    add_attn("enc" + std::to_string(l) + ".self");
    add_ffn("enc" + std::to_string(l) + ".ffn");
  }
  for (int l = 0; l < config_.dec_layers; ++l) {
    add_attn("dec" + std::to_string(l) + ".self");
    add_attn("dec" + std::to_string(l) + ".cross");
    add_ffn("dec" + std::to_string(l) + ".ffn");
  }
  params_.add("out.w", d, config_.vocab_size);
  params_.add("out.bias", 1, config_.vocab_size);
  params_.add("plan.wd", 2 * d, config_.plan_hidden);
  params_.add("plan.wo", config_.plan_hidden, 1);
}

void Transformer::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  params_.init_uniform(0.08, rng);
}

ParamVars Transformer::push_params(Tape& tape) const {
  ParamVars vars;
  for (const auto& name : params_.names())
    vars[name] = tape.input(params_.get(name));
  return vars;
}

Var Transformer::attention(Tape& tape, const ParamVars& p,
                           const std::string& prefix, Var q_in, Var kv_in,
                           bool causal) const {
  const int heads = config_.heads;
  const int dh = config_.embed_dim / heads;
  Var q = tape.matmul(q_in, p.at(prefix + ".wq"));
  Var k = tape.matmul(kv_in, p.at(prefix + ".wk"));
  Var v = tape.matmul(kv_in, p.at(prefix + ".wv"));
  const int tq = static_cast<int>(tape.val(q).rows());
  const int tk = static_cast<int>(tape.val(k).rows());
  Mat mask;
  if (causal) {
    mask = Mat::Zero(tq, tk);
    for (int r = 0; r < tq; ++r)
      for (int c = r + 1; c < tk; ++c) mask(r, c) = -1e30;
  }
  std::vector<Var> head_outs;
  for (int h = 0; h < heads; ++h) {
    Var qh = tape.cols(q, h * dh, dh);
    Var kh = tape.cols(k, h * dh, dh);
    Var vh = tape.cols(v, h * dh, dh);
    Var scores = tape.scale(tape.matmul_nt(qh, kh), 1.0 / std::sqrt(double(dh)));
    Var attn = tape.softmax_rows(scores, causal ? &mask : nullptr);
    head_outs.push_back(tape.matmul(attn, vh));
  }
  Var merged = heads == 1 ? head_outs[0] : tape.concat_cols(head_outs);
  Var proj = tape.add_row_broadcast(tape.matmul(merged, p.at(prefix + ".wo")),
                                    p.at(prefix + ".bias_o"));
  Var res = tape.add(q_in, proj);
  return tape.layer_norm_rows(res, p.at(prefix + ".ln_gain"),
                              p.at(prefix + ".ln_bias"));
}

Var Transformer::ffn_block(Tape& tape, const ParamVars& p,
                           const std::string& prefix, Var x) const {
  Var h = tape.relu(tape.add_row_broadcast(tape.matmul(x, p.at(prefix + ".w1")),
                                           p.at(prefix + ".b1")));
  Var o = tape.add_row_broadcast(tape.matmul(h, p.at(prefix + ".w2")),
                                 p.at(prefix + ".b2"));
  Var res = tape.add(x, o);
  return tape.layer_norm_rows(res, p.at(prefix + ".ln_gain"),
                              p.at(prefix + ".ln_bias"));
}

Var Transformer::encode(Tape& tape, const ParamVars& p,
                        const std::vector<int>& src_ids) const {
  if (src_ids.empty()) throw DataError("encode: empty input sequence");
  if (static_cast<int>(src_ids.size()) > config_.max_src_len)
    throw DataError("encode: sequence longer than max_src_len");
  std::vector<int> positions(src_ids.size());
  for (std::size_t i = 0; i < src_ids.size(); ++i)
    positions[i] = static_cast<int>(i);
  Var x = tape.add(tape.rows(p.at("embed"), src_ids),
                   tape.rows(p.at("pos_enc"), positions));
  for (int l = 0; l < config_.enc_layers; ++l) {
    const std::string base = "enc" + std::to_string(l);
    x = attention(tape, p, base + ".self", x, x, /*causal=*/false);
    x = ffn_block(tape, p, base + ".ffn", x);
  }
  return x;
}

Var Transformer::decode_states(Tape& tape, const ParamVars& p,
                               const std::vector<int>& tgt_ids,
                               Var enc_out) const {
  if (tgt_ids.empty()) throw DataError("decode: empty prefix");
  if (static_cast<int>(tgt_ids.size()) > config_.max_tgt_len)
    throw DataError("decode: sequence longer than max_tgt_len");
  std::vector<int> positions(tgt_ids.size());
  for (std::size_t i = 0; i < tgt_ids.size(); ++i)
    positions[i] = static_cast<int>(i);
  Var x = tape.add(tape.rows(p.at("embed"), tgt_ids),
                   tape.rows(p.at("pos_dec"), positions));
  for (int l = 0; l < config_.dec_layers; ++l) {
    const std::string base = "dec" + std::to_string(l);
    x = attention(tape, p, base + ".self", x, x, /*causal=*/true);
    x = attention(tape, p, base + ".cross", x, enc_out, /*causal=*/false);
    x = ffn_block(tape, p, base + ".ffn", x);
  }
  return x;
}

Var Transformer::output_logits(Tape& tape, const ParamVars& p,
                               Var dec_states) const {
  return tape.add_row_broadcast(tape.matmul(dec_states, p.at("out.w")),
                                p.at("out.bias"));
}

Var Transformer::plan_score_column(Tape& tape, const ParamVars& p,
                                   Var h_item_row, Var dec_states) const {
  const int t = static_cast<int>(tape.val(dec_states).rows());
  Var h_rep = tape.repeat_row(h_item_row, t);
  Var joint = tape.concat_cols({h_rep, dec_states});
  Var hidden = tape.tanh(tape.matmul(joint, p.at("plan.wd")));
  return tape.matmul(hidden, p.at("plan.wo"));
}

}  // namespace dyploc::nn
