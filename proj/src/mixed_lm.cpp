#include "dyploc/mixed_lm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "dyploc/errors.hpp"

namespace dyploc::mlm {

using nlohmann::json;
using nn::Tape;
using nn::Var;

namespace {

std::string lowercase(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// Strict argmax, lowest index wins on ties.
int argmax(const Eigen::VectorXd& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return best;
}

}  // namespace

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  v.tokens = std::move(tokens);
  for (int i = 0; i < static_cast<int>(v.tokens.size()); ++i)
    v.index[v.tokens[i]] = i;
  return v;
}

Vocabulary Vocabulary::build(const std::vector<Sample>& samples) {
  std::set<std::string> words;
  auto take = [&](const TokenSeq& seq) {
    for (const auto& t : seq) {
      std::string w = lowercase(t);
      if (w != kSegmenter && !w.empty()) words.insert(w);
    }
  };
  for (const auto& s : samples) {
    take(s.title);
    take(s.target);
    for (const auto& item : s.items) take(serialize_item(s.title, item).tokens);
  }
  std::vector<std::string> toks = {"<pad>", "<bos>", "<eos>", "<unk>",
                                   kSegmenter};
  toks.insert(toks.end(), words.begin(), words.end());
  return from_tokens(std::move(toks));
}

Vocabulary Vocabulary::build_from_sequences(const std::vector<TokenSeq>& seqs) {
  std::set<std::string> words;
  for (const auto& seq : seqs) {
    for (const auto& t : seq) {
      std::string w = lowercase(t);
      if (w != kSegmenter && !w.empty()) words.insert(w);
    }
  }
  std::vector<std::string> toks = {"<pad>", "<bos>", "<eos>", "<unk>",
                                   kSegmenter};
  toks.insert(toks.end(), words.begin(), words.end());
  return from_tokens(std::move(toks));
}

int Vocabulary::id(const std::string& token) const {
  auto it = index.find(lowercase(token));
  return it == index.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(const TokenSeq& seq) const {
  std::vector<int> out;
  out.reserve(seq.size());
  for (const auto& t : seq) out.push_back(id(t));
  return out;
}

TokenSeq Vocabulary::decode(const std::vector<int>& ids) const {
  TokenSeq out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(tokens.at(i));
  return out;
}

DecodeMode decode_mode_from_string(const std::string& name) {
  if (name == "weighted") return DecodeMode::kWeighted;
  if (name == "greedy_select") return DecodeMode::kGreedySelect;
  if (name == "random_select") return DecodeMode::kRandomSelect;
  throw DataError("unknown decode mode: " + name);
}

std::string to_string(DecodeMode mode) {
  switch (mode) {
    case DecodeMode::kWeighted: return "weighted";
    case DecodeMode::kGreedySelect: return "greedy_select";
    case DecodeMode::kRandomSelect: return "random_select";
  }
  return "?";
}

StepPlanScores plan_scores(const Mat& w_d, const Mat& w_o,
                           const std::vector<Eigen::RowVectorXd>& summaries,
                           const std::vector<Eigen::RowVectorXd>& dec_states) {
  if (summaries.size() != dec_states.size())
    throw DataError("plan_scores: item count mismatch");
  const int n = static_cast<int>(summaries.size());
  if (n == 0) throw DataError("plan_scores: no items");
  StepPlanScores out;
  out.raw.resize(n);
  for (int i = 0; i < n; ++i) {
    if (summaries[i].size() + dec_states[i].size() != w_d.rows())
      throw DataError("plan_scores: dimension mismatch");
    Eigen::RowVectorXd joint(w_d.rows());
    joint << summaries[i], dec_states[i];
    Eigen::RowVectorXd hidden = (joint * w_d).array().tanh();
    out.raw(i) = (hidden * w_o)(0, 0);
  }
  Eigen::VectorXd e = (out.raw.array() - out.raw.maxCoeff()).exp();
  out.dist = e / e.sum();
  return out;
}

Eigen::VectorXd mixture_step(const std::vector<Eigen::VectorXd>& item_dists,
                             const StepPlanScores& d) {
  if (static_cast<int>(item_dists.size()) != d.dist.size())
    throw DataError("mixture_step: item count mismatch");
  if (item_dists.empty()) throw DataError("mixture_step: no items");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(item_dists[0].size());
  for (std::size_t i = 0; i < item_dists.size(); ++i) {
    if (item_dists[i].size() != out.size())
      throw DataError("mixture_step: vocab size mismatch");
    if (std::abs(item_dists[i].sum() - 1.0) > 1e-6)
      throw NumericError("mixture_step: item distribution not normalized");
    out += d.dist(i) * item_dists[i];
  }
  return out;
}

std::vector<std::pair<int, int>> sentence_spans(const TokenSeq& tokens) {
  std::vector<std::pair<int, int>> spans;
  int begin = 0;
  for (int i = 0; i < static_cast<int>(tokens.size()); ++i) {
    char last = tokens[i].empty() ? '\0' : tokens[i].back();
    if (last == '.' || last == '!' || last == '?') {
      spans.emplace_back(begin, i + 1);
      begin = i + 1;
    }
  }
  if (begin < static_cast<int>(tokens.size()))
    spans.emplace_back(begin, static_cast<int>(tokens.size()));
  return spans;
}

AlignmentResult align_output(const std::vector<StepPlanScores>& steps,
                             const std::vector<std::pair<int, int>>& spans,
                             int item_count) {
  AlignmentResult res;
  res.total_items = item_count;
  res.token_items.resize(steps.size());
  for (std::size_t t = 0; t < steps.size(); ++t) {
    int best = argmax(steps[t].dist);
    if (steps[t].dist(best) > 0.5) res.token_items[t] = best;
  }
  std::set<int> covered;
  for (const auto& [b, e] : spans) {
    std::optional<int> item;
    bool ok = b < e;
    for (int t = b; t < e && ok; ++t) {
      if (t >= static_cast<int>(res.token_items.size()) ||
          !res.token_items[t]) {
        ok = false;
      } else if (!item) {
        item = res.token_items[t];
      } else if (*item != *res.token_items[t]) {
        ok = false;
      }
    }
    res.sentence_items.push_back(ok ? item : std::nullopt);
    if (ok && item) covered.insert(*item);
  }
  res.aligned_items = static_cast<int>(covered.size());
  return res;
}

MixedLM::MixedLM(const nn::ModelConfig& config, Vocabulary vocab)
    : tf_(config), vocab_(std::move(vocab)) {}

void MixedLM::init(std::uint64_t seed) { tf_.init(seed); }

EncodedSample MixedLM::encode_sample(const Sample& sample,
                                     const std::string& mask) const {
  EncodedSample out;
  out.id = sample.id;
  const int max_src = tf_.config().max_src_len;
  for (const auto& item : sample.items) {
    ContentItem masked = item;
    if (mask == "claims") masked.claim.reset();
    else if (mask == "entities") masked.entities.clear();
    else if (mask == "concepts") {
      masked.core_concepts.clear();
      masked.expanded_concepts.clear();
    } else if (mask == "expanded_concepts") {
      masked.expanded_concepts.clear();
    } else if (!mask.empty()) {
      throw DataError("unknown mask element: " + mask);
    }
    auto ids = vocab_.encode(serialize_item(sample.title, masked).tokens);
    if (static_cast<int>(ids.size()) > max_src) ids.resize(max_src);
    out.item_ids.push_back(std::move(ids));
  }
  int max_tgt = std::min(kMaxTargetTokens, tf_.config().max_tgt_len - 2);
  out.target_ids = vocab_.encode(sample.target);
  out.plan_labels = sample.plan_labels;
  if (static_cast<int>(out.target_ids.size()) > max_tgt) {
    out.target_ids.resize(max_tgt);
    out.plan_labels.resize(max_tgt);
  }
  return out;
}

EncodedItems MixedLM::encode_items(
    const std::vector<std::vector<int>>& item_ids) const {
  if (item_ids.empty()) throw DataError("encode_items: empty item list");
  EncodedItems out;
  for (const auto& ids : item_ids) {
    Tape tape;
    auto pv = tf_.push_params(tape);
    Var enc = tf_.encode(tape, pv, ids);
    out.states.push_back(tape.val(enc));
    out.summaries.push_back(tape.val(enc).row(0));
  }
  return out;
}

namespace {

// One teacher-forced pass: per-item probabilities, the plan distribution
// matrix D (T x I) and the mixed probabilities (T x V).
struct ForwardGraph {
  Tape tape;
  std::vector<int> y;  // target incl. EOS
  Var plan_dist;       // T x I
  Var mix;             // T x V
};

void build_forward(const nn::Transformer& tf, const EncodedSample& sample,
                   ForwardGraph& g) {
  if (sample.item_ids.empty())
    throw DataError("forward: sample " + sample.id + " has no items");
  g.y = sample.target_ids;
  g.y.push_back(Vocabulary::kEos);
  std::vector<int> dec_input;
  dec_input.push_back(Vocabulary::kBos);
  dec_input.insert(dec_input.end(), sample.target_ids.begin(),
                   sample.target_ids.end());

  auto pv = tf.push_params(g.tape);
  std::vector<Var> probs;     // per-item T x V
  std::vector<Var> e_columns; // per-item T x 1
  for (const auto& ids : sample.item_ids) {
    Var enc = tf.encode(g.tape, pv, ids);
    Var h = g.tape.rows(enc, {0});
    Var dec = tf.decode_states(g.tape, pv, dec_input, enc);
    Var logits = tf.output_logits(g.tape, pv, dec);
    probs.push_back(g.tape.softmax_rows(logits));
    e_columns.push_back(tf.plan_score_column(g.tape, pv, h, dec));
  }
  Var e_all = e_columns.size() == 1 ? e_columns[0]
                                    : g.tape.concat_cols(e_columns);
  g.plan_dist = g.tape.softmax_rows(e_all);
  Var mix = g.tape.mul_col_broadcast(probs[0], g.tape.cols(g.plan_dist, 0, 1));
  for (std::size_t i = 1; i < probs.size(); ++i) {
    mix = g.tape.add(
        mix, g.tape.mul_col_broadcast(probs[i],
                                      g.tape.cols(g.plan_dist,
                                                  static_cast<int>(i), 1)));
  }
  g.mix = mix;
}

}  // namespace

TrainStepOutput MixedLM::forward_train(const EncodedSample& sample,
                                       double plan_loss_weight,
                                       nn::ParamStore* grads) const {
  ForwardGraph g;
  build_forward(tf_, sample, g);
  const int t_len = static_cast<int>(g.y.size());

  std::vector<std::pair<int, int>> gold;
  for (int t = 0; t < t_len; ++t) gold.emplace_back(t, g.y[t]);
  Var picked = g.tape.pick(g.mix, gold);
  Var l_gen = g.tape.scale(g.tape.sum(g.tape.log_floored(picked, 1e-12)),
                           -1.0 / t_len);

  std::vector<std::pair<int, int>> labeled;
  for (std::size_t t = 0; t < sample.plan_labels.size() &&
                          t < static_cast<std::size_t>(t_len); ++t) {
    if (sample.plan_labels[t]) labeled.emplace_back(static_cast<int>(t),
                                                    *sample.plan_labels[t]);
  }
  TrainStepOutput out;
  Var total = l_gen;
  if (!labeled.empty()) {
    Var picked_d = g.tape.pick(g.plan_dist, labeled);
    Var l_plan = g.tape.scale(g.tape.sum(g.tape.log_floored(picked_d, 1e-12)),
                              -1.0 / static_cast<double>(labeled.size()));
    out.l_plan = g.tape.val(l_plan)(0, 0);
    total = g.tape.add(l_gen, g.tape.scale(l_plan, plan_loss_weight));
  }
  out.l_gen = g.tape.val(l_gen)(0, 0);
  out.total = g.tape.val(total)(0, 0);
  if (!std::isfinite(out.total))
    throw NumericError("non-finite loss on sample " + sample.id);

  if (grads) {
    g.tape.backward(total);
    // Parameters are the first tape inputs, in registration order.
    int i = 0;
    for (const auto& name : tf_.params().names()) {
      grads->add(name, static_cast<int>(tf_.params().get(name).rows()),
                 static_cast<int>(tf_.params().get(name).cols())) +=
          g.tape.grad(Var{i});
      ++i;
    }
  }
  return out;
}

std::vector<StepPlanScores> MixedLM::teacher_forced_plan(
    const EncodedSample& sample) const {
  ForwardGraph g;
  build_forward(tf_, sample, g);
  const Mat& d = g.tape.val(g.plan_dist);
  std::vector<StepPlanScores> steps(d.rows());
  for (int t = 0; t < d.rows(); ++t) {
    steps[t].dist = d.row(t).transpose();
    steps[t].raw = steps[t].dist;  // raw scores not retained here
  }
  return steps;
}

double MixedLM::teacher_forced_accuracy(const EncodedSample& sample) const {
  ForwardGraph g;
  build_forward(tf_, sample, g);
  const Mat& mix = g.tape.val(g.mix);
  int hits = 0;
  for (int t = 0; t < mix.rows(); ++t) {
    Eigen::VectorXd row = mix.row(t).transpose();
    if (argmax(row) == g.y[t]) ++hits;
  }
  return static_cast<double>(hits) / mix.rows();
}

DecodeResult MixedLM::decode(const std::vector<std::vector<int>>& item_ids,
                             DecodeMode mode, int max_len,
                             std::uint64_t seed) const {
  if (item_ids.empty()) throw DataError("decode: empty item list");
  DecodeResult res;
  if (max_len <= 0) return res;
  const int n = static_cast<int>(item_ids.size());
  std::mt19937_64 rng(seed);

  Tape tape;
  auto pv = tf_.push_params(tape);
  std::vector<Var> enc_outs;
  std::vector<Var> h_rows;
  for (const auto& ids : item_ids) {
    Var enc = tf_.encode(tape, pv, ids);
    enc_outs.push_back(enc);
    h_rows.push_back(tape.rows(enc, {0}));
  }

  std::vector<int> prefix = {Vocabulary::kBos};
  const int hard_cap = std::min(max_len, tf_.config().max_tgt_len - 1);
  for (int step = 0; step < hard_cap; ++step) {
    std::vector<Eigen::VectorXd> dists(n);
    Eigen::VectorXd e_raw(n);
    for (int i = 0; i < n; ++i) {
      Var dec = tf_.decode_states(tape, pv, prefix, enc_outs[i]);
      Var last = tape.rows(dec, {static_cast<int>(prefix.size()) - 1});
      Var logits = tf_.output_logits(tape, pv, last);
      Var p = tape.softmax_rows(logits);
      dists[i] = tape.val(p).row(0).transpose();
      Var e = tf_.plan_score_column(tape, pv, h_rows[i], last);
      e_raw(i) = tape.val(e)(0, 0);
    }
    StepPlanScores scores;
    scores.raw = e_raw;
    Eigen::VectorXd exps = (e_raw.array() - e_raw.maxCoeff()).exp();
    Eigen::VectorXd soft = exps / exps.sum();
    switch (mode) {
      case DecodeMode::kWeighted:
        scores.dist = soft;
        break;
      case DecodeMode::kGreedySelect: {
        scores.dist = Eigen::VectorXd::Zero(n);
        scores.dist(argmax(soft)) = 1.0;
        break;
      }
      case DecodeMode::kRandomSelect: {
        scores.dist = Eigen::VectorXd::Zero(n);
        scores.dist(static_cast<int>(rng() % n)) = 1.0;
        break;
      }
    }
    Eigen::VectorXd mixed = mixture_step(dists, scores);
    int next = argmax(mixed);
    if (next == Vocabulary::kEos) break;
    res.token_ids.push_back(next);
    res.steps.push_back(std::move(scores));
    prefix.push_back(next);
  }
  return res;
}

Eigen::VectorXd MixedLM::next_token_distribution(
    const std::vector<std::vector<int>>& item_ids,
    const std::vector<int>& prefix) const {
  if (item_ids.empty()) throw DataError("next_token_distribution: no items");
  if (prefix.empty() || prefix.front() != Vocabulary::kBos)
    throw DataError("next_token_distribution: prefix must start with BOS");
  const int n = static_cast<int>(item_ids.size());
  Tape tape;
  auto pv = tf_.push_params(tape);
  std::vector<Eigen::VectorXd> dists(n);
  std::vector<Eigen::RowVectorXd> summaries(n), states(n);
  for (int i = 0; i < n; ++i) {
    Var enc = tf_.encode(tape, pv, item_ids[i]);
    Var dec = tf_.decode_states(tape, pv, prefix, enc);
    Var last = tape.rows(dec, {static_cast<int>(prefix.size()) - 1});
    Var p = tape.softmax_rows(tf_.output_logits(tape, pv, last));
    dists[i] = tape.val(p).row(0).transpose();
    summaries[i] = tape.val(enc).row(0);
    states[i] = tape.val(last).row(0);
  }
  StepPlanScores d = plan_scores(tf_.params().get("plan.wd"),
                                 tf_.params().get("plan.wo"), summaries, states);
  return mixture_step(dists, d);
}

namespace {

struct AdamState {
  std::map<std::string, Mat> m, v;
  int t = 0;
};

void adam_step(nn::ParamStore& params, const nn::ParamStore& grads,
               AdamState& state, double lr, double scale) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++state.t;
  const double bc1 = 1.0 - std::pow(b1, state.t);
  const double bc2 = 1.0 - std::pow(b2, state.t);
  for (const auto& name : params.names()) {
    Mat g = grads.get(name) * scale;
    Mat& m = state.m.try_emplace(name, Mat::Zero(g.rows(), g.cols())).first->second;
    Mat& v = state.v.try_emplace(name, Mat::Zero(g.rows(), g.cols())).first->second;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    params.get(name).array() -=
        lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
  }
}

}  // namespace

TrainReport MixedLM::train(const std::vector<EncodedSample>& train_set,
                           const std::vector<EncodedSample>& val_set,
                           const TrainConfig& config,
                           const std::function<void(const EpochStats&)>& log) {
  if (train_set.empty()) throw DataError("train: empty training set");
  std::mt19937_64 rng(config.seed);
  AdamState adam;
  TrainReport report;
  double best_val = std::numeric_limits<double>::infinity();
  nn::ParamStore best_params = tf_.params();
  int bad_epochs = 0;

  std::vector<int> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochStats stats;
    stats.epoch = epoch;
    int in_batch = 0;
    nn::ParamStore grads;
    for (const auto& name : tf_.params().names())
      grads.add(name, static_cast<int>(tf_.params().get(name).rows()),
                static_cast<int>(tf_.params().get(name).cols()));
    auto flush = [&] {
      if (in_batch == 0) return;
      adam_step(tf_.params(), grads, adam, config.learning_rate,
                1.0 / in_batch);
      for (const auto& name : grads.names()) grads.get(name).setZero();
      in_batch = 0;
    };
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto& sample = train_set[order[k]];
      TrainStepOutput step;
      try {
        step = forward_train(sample, config.plan_loss_weight, &grads);
      } catch (const NumericError& e) {
        throw NumericError("training aborted at epoch " +
                           std::to_string(epoch) + " step " +
                           std::to_string(k) + ": " + e.what());
      }
      stats.train_l_gen += step.l_gen;
      stats.train_l_plan += step.l_plan;
      stats.train_total += step.total;
      if (++in_batch >= config.batch_size) flush();
    }
    flush();
    stats.train_l_gen /= train_set.size();
    stats.train_l_plan /= train_set.size();
    stats.train_total /= train_set.size();

    double val_loss = 0.0;
    const auto& eval_set = val_set.empty() ? train_set : val_set;
    for (const auto& sample : eval_set)
      val_loss += forward_train(sample, config.plan_loss_weight).total;
    val_loss /= eval_set.size();
    stats.val_loss = val_loss;
    report.epochs.push_back(stats);
    if (log) log(stats);

    if (val_loss < best_val) {
      best_val = val_loss;
      report.best_epoch = epoch;
      best_params = tf_.params();
      bad_epochs = 0;
    } else {
      ++bad_epochs;
      if (bad_epochs > config.patience) break;
    }
  }
  tf_.params() = best_params;
  report.best_val_loss = best_val;
  return report;
}

void MixedLM::save(const std::filesystem::path& path) const {
  json j;
  j["version"] = 1;
  const auto& c = tf_.config();
  j["config"] = {{"vocab_size", c.vocab_size}, {"embed_dim", c.embed_dim},
                 {"ff_dim", c.ff_dim},         {"heads", c.heads},
                 {"enc_layers", c.enc_layers}, {"dec_layers", c.dec_layers},
                 {"plan_hidden", c.plan_hidden},
                 {"max_src_len", c.max_src_len},
                 {"max_tgt_len", c.max_tgt_len}};
  j["vocab"] = vocab_.tokens;
  json params = json::object();
  for (const auto& name : tf_.params().names()) {
    const Mat& m = tf_.params().get(name);
    std::vector<double> data(m.data(), m.data() + m.size());
    params[name] = {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
  }
  j["params"] = params;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out << j.dump() << '\n';
}

MixedLM MixedLM::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  if (!j.contains("version") || j["version"].get<int>() != 1)
    throw DataError("checkpoint " + path.string() + ": missing/unknown version");
  nn::ModelConfig c;
  const json& jc = j.at("config");
  c.vocab_size = jc.at("vocab_size");
  c.embed_dim = jc.at("embed_dim");
  c.ff_dim = jc.at("ff_dim");
  c.heads = jc.at("heads");
  c.enc_layers = jc.at("enc_layers");
  c.dec_layers = jc.at("dec_layers");
  c.plan_hidden = jc.at("plan_hidden");
  c.max_src_len = jc.at("max_src_len");
  c.max_tgt_len = jc.at("max_tgt_len");
  MixedLM model(c, Vocabulary::from_tokens(
                       j.at("vocab").get<std::vector<std::string>>()));
  for (const auto& [name, jp] : j.at("params").items()) {
    Mat& m = model.tf_.params().get(name);
    int rows = jp.at("rows"), cols = jp.at("cols");
    if (rows != m.rows() || cols != m.cols())
      throw DataError("checkpoint parameter shape mismatch: " + name);
    std::vector<double> data = jp.at("data").get<std::vector<double>>();
    std::copy(data.begin(), data.end(), m.data());
  }
  return model;
}

double finite_difference_check(const nn::ModelConfig& config,
                               std::uint64_t seed, double step) {
  MixedLM model(config, Vocabulary::from_tokens(
                            std::vector<std::string>(config.vocab_size, "w")));
  model.init(seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  auto rand_ids = [&](int len) {
    std::vector<int> ids(len);
    for (auto& v : ids) v = static_cast<int>(rng() % config.vocab_size);
    return ids;
  };
  EncodedSample sample;
  sample.id = "fd";
  sample.item_ids = {rand_ids(4), rand_ids(5)};
  sample.target_ids = rand_ids(4);
  sample.plan_labels = {0, 1, std::nullopt, 1};

  nn::ParamStore grads;
  model.forward_train(sample, 1.0, &grads);

  double max_rel = 0.0;
  auto& params = model.transformer().params();
  for (const auto& name : params.names()) {
    Mat& m = params.get(name);
    for (int i = 0; i < m.size(); ++i) {
      const double saved = m.data()[i];
      auto central = [&](double h) {
        m.data()[i] = saved + h;
        double up = model.forward_train(sample).total;
        m.data()[i] = saved - h;
        double down = model.forward_train(sample).total;
        m.data()[i] = saved;
        return (up - down) / (2.0 * h);
      };
      double numeric = central(step);
      // Consistency across step sizes rules out coordinates where the
      // interval straddles a ReLU kink; those finite differences do not
      // estimate the (one-sided) derivative and are skipped.
      double confirm = central(step / 2.0);
      if (std::abs(numeric - confirm) /
              std::max(1e-5, std::abs(numeric) + std::abs(confirm)) >
          2e-5)
        continue;
      double analytic = grads.get(name).data()[i];
      // The denominator floor gives near-zero gradients an absolute
      // tolerance: the central difference of an O(1) loss carries ~1e-11
      // of floating-point noise, which would swamp a pure ratio.
      double denom = std::max(1e-5, std::abs(numeric) + std::abs(analytic));
      max_rel = std::max(max_rel, std::abs(numeric - analytic) / denom);
    }
  }
  return max_rel;
}

}  // namespace dyploc::mlm
