#ifndef DYPLOC_PIPELINE_HPP
#define DYPLOC_PIPELINE_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dyploc/content_model.hpp"
#include "dyploc/mixed_lm.hpp"

namespace dyploc::pipe {

// Flat experiment configuration; every field has a desk-scale default and is
// recorded into the run manifest.
struct ExperimentConfig {
  std::uint64_t seed = 1;

  // Inputs: either a raw jsonl of {id,title,reference} plus resources, or a
  // ready-made corpus.
  std::string raw_input;
  std::string corpus;
  std::string entities;
  std::string concepts;
  std::string concreteness;
  std::string abbreviations;
  std::string claims_file;  // optional classifier training data
  std::string facts_file;

  std::string augment_mode = "none";  // none | concepts | claims
  double nucleus_p = 0.9;

  int embed_dim = 64;
  int ff_dim = 128;
  int heads = 2;
  int enc_layers = 1;
  int dec_layers = 1;
  int plan_hidden = 32;
  int max_src_len = 128;
  int max_tgt_len = 256;

  int batch_size = 8;
  double learning_rate = 3e-4;
  int patience = 3;
  int max_epochs = 50;
  double plan_loss_weight = 1.0;
  double val_fraction = 0.2;

  std::string decode_mode = "weighted";
  std::string mask;  // claims | entities | concepts | expanded_concepts
  int max_decode_len = 100;
  bool seq2seqfull = false;
  std::string generate_split = "val";  // val | train | all

  std::string out_dir = "run";

  static ExperimentConfig load(const std::filesystem::path& path);
  void validate() const;
  nn::ModelConfig model_config(int vocab_size) const;
  mlm::TrainConfig train_config() const;
};

// FNV-1a over the canonical serialization of the semantically meaningful
// fields, with paths normalized first.
std::uint64_t config_hash(const ExperimentConfig& config);
std::uint64_t file_checksum(const std::filesystem::path& path);

// Stage sub-seed derived from the run seed and the stage name.
std::uint64_t stage_seed(std::uint64_t seed, const std::string& stage);

// Collapses a sample's items into one whose serialized form is the
// segmenter-joined concatenation of the originals with the title emitted
// once; plan labels all point at item 0.
Sample build_seq2seqfull_input(const Sample& sample);

// One generated record of gen.jsonl.
struct GenerationRecord {
  std::string id;
  TokenSeq tokens;
  std::vector<mlm::StepPlanScores> steps;
  int item_count = 0;
  std::vector<bool> item_has_claim;
};

std::vector<GenerationRecord> load_generations(
    const std::filesystem::path& path);
void save_generations(const std::vector<GenerationRecord>& records,
                      const std::filesystem::path& path);

// Runs preprocess -> augment -> train -> generate -> evaluate -> analyze,
// writing stage outputs and manifest.json under config.out_dir. With resume,
// stages whose outputs already exist are skipped and marked "cached".
// Returns the experiment directory.
std::filesystem::path run_pipeline(const ExperimentConfig& config,
                                   bool resume = false);

void log_line(const std::string& level, const std::string& message);

}  // namespace dyploc::pipe

#endif
