// Command-line front end: preprocess, augment, train, generate, evaluate,
// analyze, pipeline. Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric
// failure.

#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>

#include "dyploc/augment.hpp"
#include "dyploc/errors.hpp"
#include "dyploc/eval_metrics.hpp"
#include "dyploc/mixed_lm.hpp"
#include "dyploc/pipeline.hpp"
#include "dyploc/preprocess.hpp"

namespace {

using namespace dyploc;
using nlohmann::json;

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  return lines;
}

struct PreprocessArgs {
  std::string input, entities, concepts, concreteness, abbreviations;
  std::string claims, facts, output;
};

void run_preprocess(const PreprocessArgs& a) {
  pre::Resources res;
  if (!a.entities.empty()) res.entities = pre::EntityDictionary::load(a.entities);
  if (!a.concepts.empty()) res.concepts = pre::ConceptLexicon::load(a.concepts);
  if (!a.concreteness.empty())
    res.concreteness = pre::ConcretenessLexicon::load(a.concreteness);
  if (!a.abbreviations.empty())
    res.abbreviations = pre::load_abbreviations(a.abbreviations);
  pre::ClaimClassifier clf;
  if (!a.claims.empty() && !a.facts.empty()) {
    clf = pre::ClaimClassifier::train(read_lines(a.claims), read_lines(a.facts));
    pipe::log_line("INFO", "claim classifier training accuracy " +
                               std::to_string(clf.training_accuracy()));
    res.claim_classifier = &clf;
  }
  std::vector<Sample> samples;
  std::ifstream in(a.input);
  if (!in) throw DataError("cannot open raw input: " + a.input);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      samples.push_back(pre::build_sample(j.at("id").get<std::string>(),
                                          j.at("title").get<std::string>(),
                                          j.at("reference").get<std::string>(),
                                          res));
    } catch (const json::exception& e) {
      throw DataError(a.input + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  save_corpus(samples, a.output);
  pipe::log_line("INFO", "wrote " + std::to_string(samples.size()) +
                             " samples to " + a.output);
}

struct AugmentArgs {
  std::string corpus, mode = "concepts", model, out;
  bool train = false;
  double nucleus_p = 0.9;
  std::uint64_t seed = 1;
};

void run_augment(const AugmentArgs& a) {
  auto samples = load_corpus(a.corpus);
  aug::ConditionalGenerator gen;
  if (a.train) {
    auto pairs = a.mode == "concepts" ? aug::concept_training_pairs(samples)
                                      : aug::claim_training_pairs(samples);
    if (pairs.empty()) throw DataError("augment: no training pairs in corpus");
    nn::ModelConfig mc;
    mc.embed_dim = 32;
    mc.ff_dim = 64;
    mlm::TrainConfig tc;
    tc.seed = a.seed;
    gen = aug::ConditionalGenerator::train(pairs, mc, tc);
    if (!a.model.empty()) gen.save(a.model);
  } else {
    gen = aug::ConditionalGenerator::load(a.model);
  }
  aug::augment_corpus(samples, a.mode, gen, a.nucleus_p, a.seed);
  save_corpus(samples, a.out);
}

struct TrainArgs {
  std::string corpus, val, config, out;
  std::string mask;
  double plan_loss_weight = -1.0;  // -1: take from config
  bool seq2seqfull = false;
};

void run_train(const TrainArgs& a) {
  pipe::ExperimentConfig cfg;
  if (!a.config.empty()) cfg = pipe::ExperimentConfig::load(a.config);
  cfg.corpus = a.corpus;
  if (a.plan_loss_weight >= 0) cfg.plan_loss_weight = a.plan_loss_weight;
  auto train_samples = load_corpus(a.corpus);
  std::vector<Sample> val_samples;
  if (!a.val.empty()) val_samples = load_corpus(a.val);
  if (a.seq2seqfull) {
    for (auto& s : train_samples) s = pipe::build_seq2seqfull_input(s);
    for (auto& s : val_samples) s = pipe::build_seq2seqfull_input(s);
  }
  std::vector<Sample> all = train_samples;
  all.insert(all.end(), val_samples.begin(), val_samples.end());
  auto vocab = mlm::Vocabulary::build(all);
  mlm::MixedLM model(cfg.model_config(vocab.size()), vocab);
  model.init(pipe::stage_seed(cfg.seed, "init"));
  std::vector<mlm::EncodedSample> train_set, val_set;
  for (const auto& s : train_samples)
    train_set.push_back(model.encode_sample(s, a.mask));
  for (const auto& s : val_samples)
    val_set.push_back(model.encode_sample(s, a.mask));
  model.train(train_set, val_set, cfg.train_config(),
              [](const mlm::EpochStats& e) {
                pipe::log_line(
                    "INFO", "epoch " + std::to_string(e.epoch) + " l_gen " +
                                std::to_string(e.train_l_gen) + " l_plan " +
                                std::to_string(e.train_l_plan) + " val " +
                                std::to_string(e.val_loss));
              });
  model.save(a.out);
}

struct GenerateArgs {
  std::string ckpt, corpus, mode = "weighted", out, mask;
  int max_len = 100;
  std::uint64_t seed = 1;
  bool seq2seqfull = false;
};

void run_generate(const GenerateArgs& a) {
  auto model = mlm::MixedLM::load(a.ckpt);
  auto samples = load_corpus(a.corpus);
  if (a.seq2seqfull) {
    for (auto& s : samples) s = pipe::build_seq2seqfull_input(s);
  }
  auto mode = mlm::decode_mode_from_string(a.mode);
  std::vector<pipe::GenerationRecord> records;
  for (const auto& s : samples) {
    auto enc = model.encode_sample(s, a.mask);
    auto res = model.decode(enc.item_ids, mode, a.max_len,
                            pipe::stage_seed(a.seed, "decode" + s.id));
    pipe::GenerationRecord rec;
    rec.id = s.id;
    rec.tokens = model.vocab().decode(res.token_ids);
    rec.steps = std::move(res.steps);
    rec.item_count = static_cast<int>(s.items.size());
    for (const auto& item : s.items)
      rec.item_has_claim.push_back(item.claim.has_value());
    records.push_back(std::move(rec));
  }
  pipe::save_generations(records, a.out);
}

struct EvaluateArgs {
  std::string hyp, ref, out;
};

void run_evaluate(const EvaluateArgs& a) {
  auto refs_corpus = load_corpus(a.ref);
  std::map<std::string, TokenSeq> refs;
  for (const auto& s : refs_corpus) refs[s.id] = s.target;
  std::vector<TokenSeq> hyp, ref;
  for (const auto& rec : pipe::load_generations(a.hyp)) {
    auto it = refs.find(rec.id);
    if (it == refs.end()) throw DataError("no reference for id " + rec.id);
    hyp.push_back(rec.tokens);
    ref.push_back(it->second);
  }
  auto report = eval::evaluate_all(hyp, ref);
  json j{{"bleu2", report.bleu2},
         {"rouge2_recall", report.rouge2_recall},
         {"rouge2_f1", report.rouge2_f1},
         {"meteor", report.meteor},
         {"mean_output_length", report.mean_output_length}};
  std::ofstream out(a.out);
  if (!out) throw DataError("cannot write " + a.out);
  out << j.dump(2) << '\n';
  std::cout << j.dump(2) << '\n';
}

struct AnalyzeArgs {
  std::string gen, corpus, out;
};

void run_analyze(const AnalyzeArgs& a) {
  auto records = pipe::load_generations(a.gen);
  std::vector<mlm::AlignmentResult> alignments;
  std::vector<eval::GeneratedForAnalysis> analyzed;
  for (const auto& rec : records) {
    auto spans = mlm::sentence_spans(rec.tokens);
    auto alignment = mlm::align_output(rec.steps, spans, rec.item_count);
    alignments.push_back(alignment);
    analyzed.push_back({rec.tokens, alignment, rec.item_has_claim});
  }
  json j;
  j["item_coverage"] = alignments.empty() ? 0.0 : eval::coverage_report(alignments);
  j["claim_realization_rate"] = "undefined";
  if (!a.corpus.empty()) {
    auto samples = load_corpus(a.corpus);
    std::vector<std::string> claims, facts;
    for (const auto& s : samples) {
      std::set<std::string> claim_sents;
      for (const auto& item : s.items)
        if (item.claim) claim_sents.insert(*item.claim);
      claims.insert(claims.end(), claim_sents.begin(), claim_sents.end());
      for (const auto& [b, e] : mlm::sentence_spans(s.target)) {
        std::string sent =
            join_tokens(TokenSeq(s.target.begin() + b, s.target.begin() + e));
        if (!claim_sents.count(sent)) facts.push_back(sent);
      }
    }
    if (!claims.empty() && !facts.empty()) {
      auto clf = pre::ClaimClassifier::train(claims, facts);
      auto rate = eval::claim_realization_rate(analyzed, clf);
      if (rate) j["claim_realization_rate"] = *rate;
    }
  }
  std::ofstream out(a.out);
  if (!out) throw DataError("cannot write " + a.out);
  out << j.dump(2) << '\n';
  std::cout << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynamic content planning text generation"};
  app.require_subcommand(1);

  PreprocessArgs pa;
  auto* sp = app.add_subcommand("preprocess", "build content items from raw text");
  sp->add_option("--input", pa.input)->required();
  sp->add_option("--entities", pa.entities);
  sp->add_option("--concepts", pa.concepts);
  sp->add_option("--concreteness", pa.concreteness);
  sp->add_option("--abbreviations", pa.abbreviations);
  sp->add_option("--claims", pa.claims);
  sp->add_option("--facts", pa.facts);
  sp->add_option("--output", pa.output)->required();

  AugmentArgs aa;
  auto* sa = app.add_subcommand("augment", "predict expanded concepts or claims");
  sa->add_option("--corpus", aa.corpus)->required();
  sa->add_option("--mode", aa.mode)->check(CLI::IsMember({"concepts", "claims"}));
  sa->add_option("--model", aa.model);
  sa->add_option("--out", aa.out)->required();
  sa->add_flag("--train", aa.train, "train the generator on the corpus first");
  sa->add_option("--nucleus-p", aa.nucleus_p);
  sa->add_option("--seed", aa.seed);

  TrainArgs ta;
  auto* st = app.add_subcommand("train", "train the mixed language model");
  st->add_option("--corpus", ta.corpus)->required();
  st->add_option("--val", ta.val);
  st->add_option("--config", ta.config);
  st->add_option("--out", ta.out)->required();
  st->add_option("--mask", ta.mask)
      ->check(CLI::IsMember({"claims", "entities", "concepts",
                             "expanded_concepts", ""}));
  st->add_option("--plan-loss-weight", ta.plan_loss_weight);
  st->add_flag("--seq2seqfull", ta.seq2seqfull);

  GenerateArgs ga;
  auto* sg = app.add_subcommand("generate", "decode with a trained model");
  sg->add_option("--ckpt", ga.ckpt)->required();
  sg->add_option("--corpus", ga.corpus)->required();
  sg->add_option("--mode", ga.mode)
      ->check(CLI::IsMember({"weighted", "greedy_select", "random_select"}));
  sg->add_option("--out", ga.out)->required();
  sg->add_option("--mask", ga.mask);
  sg->add_option("--max-len", ga.max_len);
  sg->add_option("--seed", ga.seed);
  sg->add_flag("--seq2seqfull", ga.seq2seqfull);

  EvaluateArgs ea;
  auto* se = app.add_subcommand("evaluate", "BLEU-2 / ROUGE-2 / METEOR report");
  se->add_option("--hyp", ea.hyp)->required();
  se->add_option("--ref", ea.ref)->required();
  se->add_option("--out", ea.out)->required();

  AnalyzeArgs na;
  auto* sn = app.add_subcommand("analyze", "coverage and claim realization");
  sn->add_option("--gen", na.gen)->required();
  sn->add_option("--corpus", na.corpus);
  sn->add_option("--out", na.out)->required();

  std::string pipeline_config;
  bool resume = false;
  auto* spl = app.add_subcommand("pipeline", "run the full experiment");
  spl->add_option("--config", pipeline_config)->required();
  spl->add_flag("--resume", resume);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // any usage problem
  }

  try {
    if (sp->parsed()) run_preprocess(pa);
    if (sa->parsed()) run_augment(aa);
    if (st->parsed()) run_train(ta);
    if (sg->parsed()) run_generate(ga);
    if (se->parsed()) run_evaluate(ea);
    if (sn->parsed()) run_analyze(na);
    if (spl->parsed()) {
      auto cfg = pipe::ExperimentConfig::load(pipeline_config);
      auto dir = pipe::run_pipeline(cfg, resume);
      std::cout << dir.string() << '\n';
    }
  } catch (const dyploc::NumericError& e) {
    pipe::log_line("ERROR", e.what());
    return 3;
  } catch (const dyploc::DataError& e) {
    pipe::log_line("ERROR", e.what());
    return 2;
  } catch (const std::exception& e) {
    pipe::log_line("ERROR", e.what());
    return 2;
  }
  return 0;
}
