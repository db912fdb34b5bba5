// End-to-end property checks for the mixed content-conditioned generator.
// Each criterion prints one pass/fail line; the process exits non-zero if a
// blocking criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dyploc/eval_metrics.hpp"
#include "dyploc/mixed_lm.hpp"
#include "dyploc/pipeline.hpp"
#include "dyploc/preprocess.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace dyploc;
namespace ts = dyploc::testsupport;
namespace fs = std::filesystem;

namespace {

int failures = 0;

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void report(int number, const std::string& name, bool ok, double seconds,
            bool advisory = false) {
  const char* verdict = ok ? "pass" : (advisory ? "advisory-fail" : "FAIL");
  std::printf("criterion %2d %-28s %s (%.1fs)\n", number, name.c_str(),
              verdict, seconds);
  std::fflush(stdout);
  if (!ok && !advisory) ++failures;
}

nn::ModelConfig small_config(int vocab_size, int embed = 8) {
  nn::ModelConfig cfg;
  cfg.vocab_size = vocab_size;
  cfg.embed_dim = embed;
  cfg.ff_dim = 2 * embed;
  cfg.heads = 2;
  cfg.enc_layers = 1;
  cfg.dec_layers = 1;
  cfg.plan_hidden = 4;
  cfg.max_src_len = 48;
  cfg.max_tgt_len = 64;
  return cfg;
}

mlm::MixedLM overfit_model(const std::vector<Sample>& corpus, int embed,
                           int epochs, double lr, std::uint64_t seed) {
  auto vocab = mlm::Vocabulary::build(corpus);
  auto cfg = small_config(vocab.size(), embed);
  cfg.plan_hidden = 8;
  mlm::MixedLM model(cfg, vocab);
  model.init(seed);
  std::vector<mlm::EncodedSample> train_set;
  for (const auto& s : corpus) train_set.push_back(model.encode_sample(s));
  mlm::TrainConfig tc;
  tc.batch_size = 2;
  tc.learning_rate = lr;
  tc.max_epochs = epochs;
  tc.patience = epochs;
  tc.seed = seed;
  tc.plan_loss_weight = 2.0;
  model.train(train_set, {}, tc);
  return model;
}

// ---- criterion 1: every plan and mixture distribution is normalized ----

bool check_mixture_validity() {
  std::mt19937_64 rng(101);
  int configs = 0;
  for (int m = 0; m < 50; ++m) {
    auto corpus =
        ts::make_synthetic_corpus(1, 1000 + m, 1 + m % 4, 1 + m % 4);
    auto vocab = mlm::Vocabulary::build(corpus);
    mlm::MixedLM model(small_config(vocab.size()), vocab);
    model.init(rng());
    for (int trial = 0; trial < 20; ++trial) {
      ++configs;
      auto sample = ts::make_synthetic_corpus(1, rng(), 1, 4)[0];
      auto enc = model.encode_sample(sample);
      for (const auto& step : model.teacher_forced_plan(enc)) {
        if (std::abs(step.dist.sum() - 1.0) > 1e-10) return false;
      }
      std::vector<int> prefix = {mlm::Vocabulary::kBos};
      for (int k = 0; k < 1 + trial % 3; ++k)
        prefix.push_back(
            static_cast<int>(5 + rng() % (vocab.size() - 5)));
      auto mix = model.next_token_distribution(enc.item_ids, prefix);
      if (std::abs(mix.sum() - 1.0) > 1e-10) return false;
      if (mix.minCoeff() < 0.0) return false;
    }
  }
  return configs == 1000;
}

// ---- criterion 2: mixture step equals the brute-force sum ----

bool check_oracle_equivalence() {
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    int n = 1 + static_cast<int>(rng() % 6);
    int v = 2 + static_cast<int>(rng() % 40);
    std::vector<Eigen::VectorXd> dists;
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd p(v);
      for (int k = 0; k < v; ++k) p(k) = u(rng);
      dists.push_back(p / p.sum());
    }
    mlm::StepPlanScores d;
    d.dist = Eigen::VectorXd(n);
    for (int i = 0; i < n; ++i) d.dist(i) = u(rng);
    d.dist /= d.dist.sum();
    auto got = mlm::mixture_step(dists, d);
    auto want = ts::brute_force_mixture(dists, d.dist);
    if ((got - want).cwiseAbs().maxCoeff() > 1e-12) return false;
  }
  return true;
}

// ---- criterion 3: analytic gradients match central differences ----

bool check_gradient_correctness() {
  nn::ModelConfig cfg = small_config(12);
  cfg.max_src_len = 16;
  cfg.max_tgt_len = 16;
  nn::Transformer probe(cfg);
  if (probe.params().total_size() > 2000) return false;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    if (mlm::finite_difference_check(cfg, seed) >= 1e-4) return false;
  }
  return true;
}

// ---- criterion 4: one-hot plans make weighted == greedy selection ----

bool check_hard_selection(const mlm::MixedLM& model,
                          const std::vector<Sample>& corpus) {
  int verified = 0;
  for (const auto& sample : corpus) {
    auto enc = model.encode_sample(sample);
    auto weighted = model.decode(enc.item_ids, mlm::DecodeMode::kWeighted,
                                 40, 1);
    // Post-hoc verification: the overfit model's plan scores must be
    // effectively one-hot at every step before the comparison counts.
    bool one_hot = !weighted.steps.empty();
    for (const auto& step : weighted.steps)
      if (step.dist.maxCoeff() < 0.99) one_hot = false;
    if (!one_hot) continue;
    ++verified;
    auto greedy = model.decode(enc.item_ids, mlm::DecodeMode::kGreedySelect,
                               40, 1);
    if (weighted.token_ids != greedy.token_ids) return false;
  }
  return verified >= static_cast<int>(corpus.size()) / 2;
}

// ---- criterion 5: one item degenerates to a plain conditional LM ----

bool check_single_item() {
  auto corpus = ts::make_synthetic_corpus(5, 55, 1, 1);
  auto vocab = mlm::Vocabulary::build(corpus);
  mlm::MixedLM model(small_config(vocab.size()), vocab);
  model.init(7);
  for (const auto& sample : corpus) {
    auto enc = model.encode_sample(sample);
    auto out = model.forward_train(enc);
    if (out.l_plan != 0.0) return false;
    for (const auto& step : model.teacher_forced_plan(enc)) {
      if (step.dist.size() != 1 || step.dist(0) != 1.0) return false;
    }
    auto w = model.decode(enc.item_ids, mlm::DecodeMode::kWeighted, 30, 3);
    auto g = model.decode(enc.item_ids, mlm::DecodeMode::kGreedySelect, 30, 3);
    auto r = model.decode(enc.item_ids, mlm::DecodeMode::kRandomSelect, 30, 91);
    if (w.token_ids != g.token_ids || w.token_ids != r.token_ids) return false;
  }
  return true;
}

// ---- criterion 6: overfit the template task and recover the plan ----

struct OverfitResult {
  double token_accuracy = 0.0;
  double sentence_recovery = 0.0;
};

OverfitResult check_overfit(const mlm::MixedLM& model,
                            const std::vector<Sample>& corpus) {
  OverfitResult res;
  double correct_tokens = 0.0, total_tokens = 0.0;
  int recovered = 0, total_sentences = 0;
  for (const auto& sample : corpus) {
    auto enc = model.encode_sample(sample);
    double n = static_cast<double>(enc.target_ids.size() + 1);
    correct_tokens += model.teacher_forced_accuracy(enc) * n;
    total_tokens += n;

    auto steps = model.teacher_forced_plan(enc);
    steps.resize(enc.target_ids.size());  // drop the EOS step
    auto spans = mlm::sentence_spans(sample.target);
    auto alignment = mlm::align_output(
        steps, spans, static_cast<int>(sample.items.size()));
    for (std::size_t j = 0; j < spans.size(); ++j) {
      ++total_sentences;
      auto gold = sample.plan_labels[spans[j].first];
      if (gold && alignment.sentence_items[j] == gold) ++recovered;
    }
  }
  res.token_accuracy = correct_tokens / total_tokens;
  res.sentence_recovery =
      total_sentences == 0 ? 0.0
                           : static_cast<double>(recovered) / total_sentences;
  return res;
}

// ---- criterion 7 (advisory): full mixture beats the concatenation baseline --

bool check_directional(std::uint64_t seed) {
  auto corpus = ts::make_synthetic_corpus(10, seed, 2, 2);
  auto dyploc_model = overfit_model(corpus, 16, 200, 2e-3, seed);
  std::vector<Sample> flat;
  for (const auto& s : corpus) flat.push_back(pipe::build_seq2seqfull_input(s));
  auto baseline = overfit_model(flat, 16, 200, 2e-3, seed);

  auto generate = [](const mlm::MixedLM& m, const std::vector<Sample>& data) {
    std::vector<TokenSeq> out;
    for (const auto& s : data) {
      auto enc = m.encode_sample(s);
      auto res = m.decode(enc.item_ids, mlm::DecodeMode::kWeighted, 40, 1);
      out.push_back(m.vocab().decode(res.token_ids));
    }
    return out;
  };
  std::vector<TokenSeq> refs;
  for (const auto& s : corpus) refs.push_back(s.target);
  double ours = eval::bleu2(generate(dyploc_model, corpus), refs);
  double theirs = eval::bleu2(generate(baseline, flat), refs);
  return ours >= theirs;
}

// ---- criterion 8: metric golden values and bounds ----

bool check_metric_goldens() {
  auto toks = [](const char* s) { return tokenize_whitespace(s); };
  std::vector<TokenSeq> same = {toks("the cat sat on the mat")};
  if (std::abs(eval::bleu2(same, same) - 100.0) > 1e-9) return false;
  double b = eval::bleu2({toks("the cat sat")}, {toks("the cat ran")});
  if (std::abs(b - 57.74) > 0.01) return false;
  auto [rec, f1] = eval::rouge2({toks("a b d")}, {toks("a b c")});
  if (std::abs(rec - 50.0) > 0.01) return false;
  (void)f1;

  std::mt19937_64 rng(808);
  const std::vector<std::string> words = {"a", "b", "c", "d"};
  for (int trial = 0; trial < 100; ++trial) {
    int n = 1 + static_cast<int>(rng() % 3);
    auto make = [&] {
      std::vector<TokenSeq> out;
      for (int i = 0; i < n; ++i) {
        TokenSeq t;
        int len = 2 + static_cast<int>(rng() % 7);
        for (int k = 0; k < len; ++k) t.push_back(words[rng() % words.size()]);
        out.push_back(std::move(t));
      }
      return out;
    };
    auto report = eval::evaluate_all(make(), make());
    for (double v : {report.bleu2, report.rouge2_recall, report.rouge2_f1,
                     report.meteor}) {
      if (!(v >= 0.0 && v <= 100.0) || !std::isfinite(v)) return false;
    }
  }
  return true;
}

// ---- criterion 9: concept routing and plan-label partition ----

bool check_preprocessing_contract() {
  std::mt19937_64 rng(909);
  pre::ConcretenessLexicon conc;
  std::set<std::string> concepts;
  std::map<std::string, std::string> tags;
  const char* pos[] = {"VERB", "NOUN", "ADJ", "ADV"};
  for (int i = 0; i < 200; ++i) {
    std::string w = "word" + std::to_string(i);
    concepts.insert(w);
    tags[w] = pos[rng() % 4];
    if (rng() % 3) conc.mapping[w] = (rng() % 500) / 100.0;  // else default 5
  }
  auto [core, expanded] = pre::split_concepts(concepts, tags, conc);
  for (const auto& w : concepts) {
    bool want_core = tags[w] == "VERB" || conc.score(w) < 3.0;
    bool got_core = core.count(w) > 0;
    if (want_core != got_core) return false;
    if (got_core == (expanded.count(w) > 0)) return false;  // exact partition
  }

  // Plan labels must partition retained-sentence spans and blank the rest.
  pre::Resources res;
  res.concepts.entries = {{"refuse", "VERB"}, {"support", "VERB"}};
  Sample s = pre::build_sample(
      "fix", "Topic",
      "They refused the first request without any reason. Short one. "
      "Many people support the second request very strongly.",
      res);
  if (s.target.size() != s.plan_labels.size()) return false;
  auto spans = mlm::sentence_spans(s.target);
  int next_item = 0;
  for (const auto& [b, e] : spans) {
    auto first = s.plan_labels[b];
    for (int t = b; t < e; ++t)
      if (s.plan_labels[t] != first) return false;
    if (first) {
      if (*first != next_item) return false;
      ++next_item;
    }
  }
  return next_item == static_cast<int>(s.items.size());
}

// ---- criterion 10: byte-identical generations across runs ----

bool check_determinism() {
  auto dir = fs::temp_directory_path() / "dyploc_acceptance_det";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto corpus_file = dir / "corpus.jsonl";
  save_corpus(ts::make_synthetic_corpus(5, 77, 2, 2), corpus_file);

  pipe::ExperimentConfig config;
  config.seed = 5;
  config.corpus = corpus_file.string();
  config.embed_dim = 8;
  config.ff_dim = 16;
  config.plan_hidden = 4;
  config.max_src_len = 32;
  config.max_tgt_len = 48;
  config.batch_size = 4;
  config.learning_rate = 3e-3;
  config.max_epochs = 3;
  config.max_decode_len = 24;
  config.generate_split = "all";

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  config.out_dir = (dir / "a").string();
  auto out_a = pipe::run_pipeline(config);
  config.out_dir = (dir / "b").string();
  auto out_b = pipe::run_pipeline(config);
  bool ok = slurp(out_a / "gen.jsonl") == slurp(out_b / "gen.jsonl") &&
            !slurp(out_a / "gen.jsonl").empty();
  fs::remove_all(dir);
  return ok;
}

}  // namespace

int main() {
  {
    Timer t;
    bool ok = check_mixture_validity();
    report(1, "mixture validity", ok && t.seconds() < 60.0, t.seconds());
  }
  {
    Timer t;
    report(2, "oracle equivalence", check_oracle_equivalence(), t.seconds());
  }
  {
    Timer t;
    bool ok = check_gradient_correctness();
    report(3, "gradient correctness", ok && t.seconds() < 300.0, t.seconds());
  }

  // One overfit training run backs criteria 4 and 6.
  Timer overfit_timer;
  auto corpus = ts::make_synthetic_corpus(50, 6, 2, 4);
  auto model = overfit_model(corpus, 16, 300, 2e-3, 13);
  double train_seconds = overfit_timer.seconds();
  {
    Timer t;
    bool ok = check_hard_selection(model, corpus);
    report(4, "hard-selection consistency", ok, t.seconds());
  }
  {
    Timer t;
    report(5, "single-item degeneracy", check_single_item(), t.seconds());
  }
  {
    Timer t;
    auto res = check_overfit(model, corpus);
    bool ok = res.token_accuracy >= 0.99 && res.sentence_recovery >= 0.95 &&
              train_seconds + t.seconds() < 900.0;
    std::printf("  overfit: token accuracy %.4f, sentence recovery %.4f, "
                "training %.1fs\n",
                res.token_accuracy, res.sentence_recovery, train_seconds);
    report(6, "overfit and recover", ok, train_seconds + t.seconds());
  }
  {
    Timer t;
    bool ok = true;
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL})
      ok = check_directional(seed) && ok;
    report(7, "directional ordering", ok, t.seconds(), /*advisory=*/true);
  }
  {
    Timer t;
    report(8, "metric golden values", check_metric_goldens(), t.seconds());
  }
  {
    Timer t;
    report(9, "preprocessing contract", check_preprocessing_contract(),
           t.seconds());
  }
  {
    Timer t;
    report(10, "pipeline determinism", check_determinism(), t.seconds());
  }

  if (failures) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
