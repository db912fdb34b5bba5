#include "dyploc/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "dyploc/augment.hpp"
#include "dyploc/errors.hpp"
#include "dyploc/eval_metrics.hpp"
#include "dyploc/preprocess.hpp"

namespace dyploc::pipe {

using nlohmann::json;
namespace fs = std::filesystem;

void log_line(const std::string& level, const std::string& message) {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", std::gmtime(&t));
  std::cerr << "[" << buf << "] " << level << " " << message << "\n";
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed config " + path.string() + ": " + e.what());
  }
  ExperimentConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("seed", c.seed);
  get("raw_input", c.raw_input);
  get("corpus", c.corpus);
  get("entities", c.entities);
  get("concepts", c.concepts);
  get("concreteness", c.concreteness);
  get("abbreviations", c.abbreviations);
  get("claims_file", c.claims_file);
  get("facts_file", c.facts_file);
  get("augment_mode", c.augment_mode);
  get("nucleus_p", c.nucleus_p);
  get("embed_dim", c.embed_dim);
  get("ff_dim", c.ff_dim);
  get("heads", c.heads);
  get("enc_layers", c.enc_layers);
  get("dec_layers", c.dec_layers);
  get("plan_hidden", c.plan_hidden);
  get("max_src_len", c.max_src_len);
  get("max_tgt_len", c.max_tgt_len);
  get("batch_size", c.batch_size);
  get("learning_rate", c.learning_rate);
  get("patience", c.patience);
  get("max_epochs", c.max_epochs);
  get("plan_loss_weight", c.plan_loss_weight);
  get("val_fraction", c.val_fraction);
  get("decode_mode", c.decode_mode);
  get("mask", c.mask);
  get("max_decode_len", c.max_decode_len);
  get("seq2seqfull", c.seq2seqfull);
  get("generate_split", c.generate_split);
  get("out_dir", c.out_dir);
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (v <= 0)
      throw DataError(std::string("config: ") + name + " must be positive");
  };
  positive(embed_dim, "embed_dim");
  positive(ff_dim, "ff_dim");
  positive(heads, "heads");
  positive(enc_layers, "enc_layers");
  positive(dec_layers, "dec_layers");
  positive(plan_hidden, "plan_hidden");
  positive(batch_size, "batch_size");
  positive(learning_rate, "learning_rate");
  positive(max_epochs, "max_epochs");
  positive(nucleus_p, "nucleus_p");
  if (patience < 0) throw DataError("config: patience must be >= 0");
  if (raw_input.empty() && corpus.empty())
    throw DataError("config: either raw_input or corpus is required");
  if (augment_mode != "none" && augment_mode != "concepts" &&
      augment_mode != "claims")
    throw DataError("config: bad augment_mode " + augment_mode);
  mlm::decode_mode_from_string(decode_mode);  // validates
}

nn::ModelConfig ExperimentConfig::model_config(int vocab_size) const {
  nn::ModelConfig m;
  m.vocab_size = vocab_size;
  m.embed_dim = embed_dim;
  m.ff_dim = ff_dim;
  m.heads = heads;
  m.enc_layers = enc_layers;
  m.dec_layers = dec_layers;
  m.plan_hidden = plan_hidden;
  m.max_src_len = max_src_len;
  m.max_tgt_len = max_tgt_len;
  return m;
}

mlm::TrainConfig ExperimentConfig::train_config() const {
  mlm::TrainConfig t;
  t.batch_size = batch_size;
  t.learning_rate = learning_rate;
  t.patience = patience;
  t.max_epochs = max_epochs;
  t.seed = stage_seed(seed, "train");
  t.plan_loss_weight = plan_loss_weight;
  return t;
}

namespace {

std::uint64_t fnv1a(const std::string& data, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string norm_path(const std::string& p) {
  return p.empty() ? p : fs::path(p).lexically_normal().string();
}

}  // namespace

std::uint64_t config_hash(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["raw_input"] = norm_path(c.raw_input);
  j["corpus"] = norm_path(c.corpus);
  j["entities"] = norm_path(c.entities);
  j["concepts"] = norm_path(c.concepts);
  j["concreteness"] = norm_path(c.concreteness);
  j["abbreviations"] = norm_path(c.abbreviations);
  j["claims_file"] = norm_path(c.claims_file);
  j["facts_file"] = norm_path(c.facts_file);
  j["augment_mode"] = c.augment_mode;
  j["nucleus_p"] = c.nucleus_p;
  j["embed_dim"] = c.embed_dim;
  j["ff_dim"] = c.ff_dim;
  j["heads"] = c.heads;
  j["enc_layers"] = c.enc_layers;
  j["dec_layers"] = c.dec_layers;
  j["plan_hidden"] = c.plan_hidden;
  j["max_src_len"] = c.max_src_len;
  j["max_tgt_len"] = c.max_tgt_len;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["patience"] = c.patience;
  j["max_epochs"] = c.max_epochs;
  j["plan_loss_weight"] = c.plan_loss_weight;
  j["val_fraction"] = c.val_fraction;
  j["decode_mode"] = c.decode_mode;
  j["mask"] = c.mask;
  j["max_decode_len"] = c.max_decode_len;
  j["seq2seqfull"] = c.seq2seqfull;
  j["generate_split"] = c.generate_split;
  return fnv1a(j.dump());
}

std::uint64_t file_checksum(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checksum: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a(ss.str());
}

std::uint64_t stage_seed(std::uint64_t seed, const std::string& stage) {
  return fnv1a(stage, seed ^ 0x9e3779b97f4a7c15ULL);
}

Sample build_seq2seqfull_input(const Sample& sample) {
  Sample out;
  out.id = sample.id;
  out.title = sample.title;
  out.target = sample.target;
  ContentItem merged;
  TokenSeq tokens;
  for (std::size_t i = 0; i < sample.items.size(); ++i) {
    TokenSeq ser = serialize_item(sample.title, sample.items[i]).tokens;
    std::size_t from = 0;
    if (i > 0) {
      // Drop the repeated title: every serialization starts with it,
      // followed by the first segmenter.
      while (from < ser.size() && ser[from] != kSegmenter) ++from;
    }
    tokens.insert(tokens.end(), ser.begin() + from, ser.end());
  }
  merged.preserialized = std::move(tokens);
  out.items.push_back(std::move(merged));
  out.plan_labels.assign(sample.target.size(), 0);
  return out;
}

std::vector<GenerationRecord> load_generations(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open generations: " + path.string());
  std::vector<GenerationRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      GenerationRecord rec;
      rec.id = j.at("id").get<std::string>();
      rec.tokens = tokenize_whitespace(j.at("tokens").get<std::string>());
      rec.item_count = j.at("item_count").get<int>();
      if (j.contains("item_has_claim"))
        rec.item_has_claim = j.at("item_has_claim").get<std::vector<bool>>();
      for (const auto& row : j.at("step_d")) {
        mlm::StepPlanScores s;
        auto vals = row.get<std::vector<double>>();
        s.dist = Eigen::Map<Eigen::VectorXd>(vals.data(),
                                             static_cast<int>(vals.size()));
        s.raw = s.dist;
        rec.steps.push_back(std::move(s));
      }
      out.push_back(std::move(rec));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": malformed generation record: " + e.what());
    }
  }
  return out;
}

void save_generations(const std::vector<GenerationRecord>& records,
                      const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write generations: " + path.string());
  for (const auto& rec : records) {
    json j;
    j["id"] = rec.id;
    j["tokens"] = join_tokens(rec.tokens);
    j["item_count"] = rec.item_count;
    j["item_has_claim"] = rec.item_has_claim;
    json steps = json::array();
    for (const auto& s : rec.steps) {
      std::vector<double> row(s.dist.data(), s.dist.data() + s.dist.size());
      steps.push_back(row);
    }
    j["step_d"] = steps;
    out << j.dump() << '\n';
  }
}

namespace {

struct RawRecord {
  std::string id, title, reference;
};

std::vector<RawRecord> load_raw(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open raw input: " + path.string());
  std::vector<RawRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      out.push_back({j.at("id").get<std::string>(),
                     j.at("title").get<std::string>(),
                     j.at("reference").get<std::string>()});
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " +
                      e.what());
    }
  }
  return out;
}

struct StageEntry {
  std::string name;
  std::string status;  // "ran" | "cached"
  std::map<std::string, std::uint64_t> outputs;
};

// Split index: the trailing val_fraction of the corpus is validation.
std::size_t split_point(std::size_t n, double val_fraction) {
  auto val = static_cast<std::size_t>(n * val_fraction);
  if (val == 0 && n > 1 && val_fraction > 0) val = 1;
  return n - val;
}

}  // namespace

fs::path run_pipeline(const ExperimentConfig& config, bool resume) {
  config.validate();
  fs::path dir(config.out_dir);
  fs::create_directories(dir);
  std::vector<StageEntry> stages;
  auto run_stage = [&](const std::string& name,
                       const std::vector<fs::path>& outputs,
                       const std::function<void()>& body) {
    StageEntry entry;
    entry.name = name;
    bool cached = resume;
    for (const auto& p : outputs)
      if (!fs::exists(p)) cached = false;
    if (cached) {
      entry.status = "cached";
      log_line("INFO", "stage " + name + ": cached");
    } else {
      log_line("INFO", "stage " + name + ": running");
      try {
        body();
      } catch (const std::exception& e) {
        throw DataError("stage " + name + " failed: " + e.what());
      }
      entry.status = "ran";
    }
    for (const auto& p : outputs)
      entry.outputs[p.filename().string()] = file_checksum(p);
    stages.push_back(std::move(entry));
  };

  const fs::path corpus_path = dir / "corpus.jsonl";
  const fs::path augmented_path = dir / "augmented.jsonl";
  const fs::path ckpt_path = dir / "model.json";
  const fs::path train_log_path = dir / "training_log.json";
  const fs::path gen_path = dir / "gen.jsonl";
  const fs::path report_path = dir / "report.json";
  const fs::path analysis_path = dir / "analysis.json";

  // 1. preprocess
  run_stage("preprocess", {corpus_path}, [&] {
    if (!config.raw_input.empty()) {
      pre::Resources res;
      if (!config.entities.empty())
        res.entities = pre::EntityDictionary::load(config.entities);
      if (!config.concepts.empty())
        res.concepts = pre::ConceptLexicon::load(config.concepts);
      if (!config.concreteness.empty())
        res.concreteness = pre::ConcretenessLexicon::load(config.concreteness);
      if (!config.abbreviations.empty())
        res.abbreviations = pre::load_abbreviations(config.abbreviations);
      pre::ClaimClassifier clf;
      if (!config.claims_file.empty() && !config.facts_file.empty()) {
        auto read_lines = [](const fs::path& p) {
          std::ifstream in(p);
          if (!in) throw DataError("cannot open " + p.string());
          std::vector<std::string> lines;
          std::string line;
          while (std::getline(in, line))
            if (!line.empty()) lines.push_back(line);
          return lines;
        };
        clf = pre::ClaimClassifier::train(read_lines(config.claims_file),
                                          read_lines(config.facts_file));
        res.claim_classifier = &clf;
      }
      std::vector<Sample> samples;
      for (const auto& r : load_raw(config.raw_input))
        samples.push_back(pre::build_sample(r.id, r.title, r.reference, res));
      save_corpus(samples, corpus_path);
    } else {
      save_corpus(load_corpus(config.corpus), corpus_path);
    }
  });

  // 2. augment
  run_stage("augment", {augmented_path}, [&] {
    auto samples = load_corpus(corpus_path);
    if (config.augment_mode != "none") {
      auto pairs = config.augment_mode == "concepts"
                       ? aug::concept_training_pairs(samples)
                       : aug::claim_training_pairs(samples);
      if (pairs.empty())
        throw DataError("augment: corpus yields no training pairs for mode " +
                        config.augment_mode);
      nn::ModelConfig mc = config.model_config(0);
      mlm::TrainConfig tc = config.train_config();
      tc.seed = stage_seed(config.seed, "augment");
      auto gen = aug::ConditionalGenerator::train(pairs, mc, tc);
      aug::augment_corpus(samples, config.augment_mode, gen, config.nucleus_p,
                          stage_seed(config.seed, "augment_sample"));
    }
    save_corpus(samples, augmented_path);
  });

  // 3. train
  run_stage("train", {ckpt_path, train_log_path}, [&] {
    auto samples = load_corpus(augmented_path);
    if (config.seq2seqfull) {
      for (auto& s : samples) s = build_seq2seqfull_input(s);
    }
    auto vocab = mlm::Vocabulary::build(samples);
    mlm::MixedLM model(config.model_config(vocab.size()), vocab);
    model.init(stage_seed(config.seed, "init"));
    std::size_t cut = split_point(samples.size(), config.val_fraction);
    std::vector<mlm::EncodedSample> train_set, val_set;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      auto enc = model.encode_sample(samples[i], config.mask);
      (i < cut ? train_set : val_set).push_back(std::move(enc));
    }
    json log = json::array();
    auto report = model.train(train_set, val_set, config.train_config(),
                              [&](const mlm::EpochStats& e) {
                                log.push_back({{"epoch", e.epoch},
                                               {"l_gen", e.train_l_gen},
                                               {"l_plan", e.train_l_plan},
                                               {"total", e.train_total},
                                               {"val_loss", e.val_loss}});
                                log_line("INFO",
                                         "epoch " + std::to_string(e.epoch) +
                                             " val_loss " +
                                             std::to_string(e.val_loss));
                              });
    model.save(ckpt_path);
    std::ofstream out(train_log_path);
    out << json{{"epochs", log},
                {"best_epoch", report.best_epoch},
                {"best_val_loss", report.best_val_loss}}
               .dump()
        << '\n';
  });

  // 4. generate
  run_stage("generate", {gen_path}, [&] {
    auto samples = load_corpus(augmented_path);
    if (config.seq2seqfull) {
      for (auto& s : samples) s = build_seq2seqfull_input(s);
    }
    auto model = mlm::MixedLM::load(ckpt_path);
    std::size_t cut = split_point(samples.size(), config.val_fraction);
    std::vector<GenerationRecord> records;
    auto mode = mlm::decode_mode_from_string(config.decode_mode);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      bool in_val = i >= cut;
      if (config.generate_split == "val" && !in_val) continue;
      if (config.generate_split == "train" && in_val) continue;
      auto enc = model.encode_sample(samples[i], config.mask);
      auto res = model.decode(enc.item_ids, mode, config.max_decode_len,
                              stage_seed(config.seed, "decode" + samples[i].id));
      GenerationRecord rec;
      rec.id = samples[i].id;
      rec.tokens = model.vocab().decode(res.token_ids);
      rec.steps = std::move(res.steps);
      rec.item_count = static_cast<int>(samples[i].items.size());
      for (const auto& item : samples[i].items)
        rec.item_has_claim.push_back(item.claim.has_value());
      records.push_back(std::move(rec));
    }
    save_generations(records, gen_path);
  });

  // 5. evaluate
  run_stage("evaluate", {report_path}, [&] {
    auto samples = load_corpus(augmented_path);
    std::map<std::string, TokenSeq> refs;
    for (const auto& s : samples) refs[s.id] = s.target;
    std::vector<TokenSeq> hyp, ref;
    for (const auto& rec : load_generations(gen_path)) {
      auto it = refs.find(rec.id);
      if (it == refs.end())
        throw DataError("evaluate: no reference for id " + rec.id);
      hyp.push_back(rec.tokens);
      ref.push_back(it->second);
    }
    auto report = eval::evaluate_all(hyp, ref);
    std::ofstream out(report_path);
    out << json{{"bleu2", report.bleu2},
                {"rouge2_recall", report.rouge2_recall},
                {"rouge2_f1", report.rouge2_f1},
                {"meteor", report.meteor},
                {"mean_output_length", report.mean_output_length}}
               .dump()
        << '\n';
  });

  // 6. analyze
  run_stage("analyze", {analysis_path}, [&] {
    auto records = load_generations(gen_path);
    std::vector<mlm::AlignmentResult> alignments;
    std::vector<eval::GeneratedForAnalysis> analyzed;
    for (const auto& rec : records) {
      auto spans = mlm::sentence_spans(rec.tokens);
      auto alignment = mlm::align_output(rec.steps, spans, rec.item_count);
      alignments.push_back(alignment);
      analyzed.push_back({rec.tokens, alignment, rec.item_has_claim});
    }
    json j;
    j["item_coverage"] =
        alignments.empty() ? 0.0 : eval::coverage_report(alignments);
    // Claim classifier trained from the corpus's own claim/non-claim split.
    auto samples = load_corpus(augmented_path);
    std::vector<std::string> claims, facts;
    for (const auto& s : samples) {
      std::set<std::string> claim_sents;
      for (const auto& item : s.items)
        if (item.claim) claim_sents.insert(*item.claim);
      claims.insert(claims.end(), claim_sents.begin(), claim_sents.end());
      auto spans = mlm::sentence_spans(s.target);
      for (const auto& [b, e] : spans) {
        std::string sent = join_tokens(
            TokenSeq(s.target.begin() + b, s.target.begin() + e));
        if (!claim_sents.count(sent)) facts.push_back(sent);
      }
    }
    if (!claims.empty() && !facts.empty()) {
      auto clf = pre::ClaimClassifier::train(claims, facts);
      auto rate = eval::claim_realization_rate(analyzed, clf);
      if (rate)
        j["claim_realization_rate"] = *rate;
      else
        j["claim_realization_rate"] = "undefined";
    } else {
      j["claim_realization_rate"] = "undefined";
    }
    std::ofstream out(analysis_path);
    out << j.dump() << '\n';
  });

  json manifest;
  manifest["config_hash"] = config_hash(config);
  manifest["seed"] = config.seed;
  manifest["stages"] = json::array();
  for (const auto& st : stages) {
    json outputs = json::object();
    for (const auto& [name, sum] : st.outputs) outputs[name] = sum;
    manifest["stages"].push_back(
        {{"name", st.name}, {"status", st.status}, {"outputs", outputs}});
  }
  std::ofstream mf(dir / "manifest.json");
  mf << manifest.dump(2) << '\n';
  return dir;
}

}  // namespace dyploc::pipe
