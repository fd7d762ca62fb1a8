#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ip/context.hpp"
#include "ip/eval.hpp"
#include "ip/fusion.hpp"
#include "ip/models.hpp"

namespace ip {

struct DatasetConfig {
  std::string source = "synthetic";  // "synthetic" | "features"
  std::string path;                  // feature file when source == "features"
  SynthConfig synth;
};

struct ModelConfig {
  int lstm_units = 512;
  int structural_hidden = 128;
  int head_hidden = 512;
  int k = 7;
  double learning_rate = 0.05;
  int epochs = 30;
  int batch_size = 16;
};

struct FusionConfig {
  double c = 1.0;
  int iterations = 10000;
  double validation_split = 0.25;
};

struct EvalConfig {
  std::string mode = "holdout";  // "holdout" | "loso"
  int test_group = 0;            // 0: highest group id in the data
};

struct Config {
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  int grid = 4;
  int bins = 8;
  FlowEstimatorConfig flow;
  ModelConfig model;
  FusionConfig fusion;
  EvalConfig eval;
};

// Parses and validates a config file. The seed is mandatory; when the
// dataset source is a feature file, the path must exist.
Config load_config(const std::string& path);

// FNV-1a over the canonical serialized config (defaults applied, keys
// sorted), so equivalent configs hash equal.
std::string config_hash(const Config& cfg);

// Raw dataset on disk: manifest.jsonl plus one PGM frame directory per
// video. Reading returns flows empty; featurization recomputes them.
void write_raw_dataset(const std::string& dataset_dir, const std::vector<RawVideo>& videos);
std::vector<RawVideo> read_raw_dataset(const std::string& dataset_dir);

std::vector<VideoRecord> featurize_dataset(const std::vector<RawVideo>& videos,
                                           const Config& cfg);

// Per-model training examples drawn from feature records. The temporal
// model trains on sliding k-windows of flow features (one padded window
// when a video is shorter than k).
struct ExampleSets {
  std::vector<FeatureExample> spatial;
  std::vector<WindowExample> temporal;
  std::vector<SequenceExample> spatial_structural;
  std::vector<SequenceExample> temporal_structural;
};

ExampleSets build_example_sets(const std::vector<VideoRecord>& videos, int k);

// Deterministic per-class split of the training videos into the model
// half and the fusion-validation half.
void split_fusion(const std::vector<VideoRecord>& train, double validation_split,
                  std::uint64_t seed, std::vector<VideoRecord>& model_train,
                  std::vector<VideoRecord>& fusion_val);

ModelBundle train_models(const std::vector<VideoRecord>& train, int classes,
                         const Config& cfg);

FusionWeights train_fusion_weights(const std::vector<VideoRecord>& fusion_val,
                                   const ModelBundle& bundle, const Config& cfg);

// The full per-fold trainer used by LOSO evaluation.
TrainFn make_train_fn(const Config& cfg, int classes);

int max_label(const std::vector<VideoRecord>& records);
int max_group(const std::vector<VideoRecord>& records);

}  // namespace ip
