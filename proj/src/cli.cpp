#include "ip/cli.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "CLI11.hpp"
#include "ip/eval.hpp"
#include "ip/log.hpp"
#include "ip/pipeline.hpp"
#include "ip/prediction.hpp"
#include "ip/serialize.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ip {

namespace {

constexpr std::uint64_t kSplitSeedSalt = 0xF0F0F0F0ULL;

std::string feature_path(const Config& cfg, const fs::path& out) {
  if (cfg.dataset.source == "features") return cfg.dataset.path;
  return (out / "features.jsonl").string();
}

std::vector<VideoRecord> load_features_checked(const std::string& path) {
  std::vector<VideoRecord> records = load_feature_file(path);
  if (records.empty()) throw std::runtime_error("feature file " + path + " holds no videos");
  return records;
}

int checked_classes(const std::vector<VideoRecord>& records) {
  const int classes = max_label(records);
  if (classes < 2) throw std::runtime_error("need labels from at least two classes");
  return classes;
}

int resolve_test_group(const Config& cfg, const std::vector<VideoRecord>& records) {
  const int g = cfg.eval.test_group != 0 ? cfg.eval.test_group : max_group(records);
  bool has_test = false, has_train = false;
  for (const VideoRecord& r : records) (r.group == g ? has_test : has_train) = true;
  if (!has_test) throw std::runtime_error("no video belongs to test group " + std::to_string(g));
  if (!has_train)
    throw std::runtime_error("every video belongs to test group " + std::to_string(g) +
                             "; nothing remains for training");
  return g;
}

// The videos the train/fuse commands operate on. Holdout keeps the test
// group unseen; leave-one-group-out trains per fold at eval time, so the
// standalone commands use everything.
std::vector<VideoRecord> training_subset(const Config& cfg,
                                         const std::vector<VideoRecord>& records) {
  if (cfg.eval.mode != "holdout") return records;
  const int g = resolve_test_group(cfg, records);
  std::vector<VideoRecord> train;
  for (const VideoRecord& r : records)
    if (r.group != g) train.push_back(r);
  return train;
}

json table_to_json(const RatioTable& t) {
  json arr = json::array();
  for (double a : t.acc) arr.push_back(a);
  return arr;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void cmd_synth(const Config& cfg, const fs::path& out) {
  if (cfg.dataset.source != "synthetic")
    throw std::runtime_error("synth: dataset.source is '" + cfg.dataset.source +
                             "', expected 'synthetic'");
  SynthConfig sc = cfg.dataset.synth;
  sc.seed = cfg.seed;
  const std::vector<RawVideo> videos = generate_synthetic(sc);
  write_raw_dataset((out / "dataset").string(), videos);
  log_info("synth: wrote " + std::to_string(videos.size()) + " videos");
}

void cmd_featurize(const Config& cfg, const fs::path& out) {
  if (cfg.dataset.source == "features")
    throw std::runtime_error("featurize: dataset.source is 'features'; nothing to featurize");
  const std::vector<RawVideo> raw = read_raw_dataset((out / "dataset").string());
  if (raw.empty()) throw std::runtime_error("featurize: dataset is empty");
  const std::vector<VideoRecord> records = featurize_dataset(raw, cfg);
  save_feature_file(feature_path(cfg, out), records);
  log_info("featurize: wrote " + std::to_string(records.size()) + " records");
}

void cmd_train(const Config& cfg, const fs::path& out) {
  const std::vector<VideoRecord> records = load_features_checked(feature_path(cfg, out));
  const int classes = checked_classes(records);
  const std::vector<VideoRecord> train = training_subset(cfg, records);
  std::vector<VideoRecord> model_train, fusion_val;
  split_fusion(train, cfg.fusion.validation_split, cfg.seed ^ kSplitSeedSalt, model_train,
               fusion_val);
  const ModelBundle bundle = train_models(model_train, classes, cfg);
  save_model_bundle((out / "models").string(), bundle, config_hash(cfg));
  log_info("train: saved models for " + std::to_string(classes) + " classes");
}

void cmd_fuse(const Config& cfg, const fs::path& out) {
  const std::vector<VideoRecord> records = load_features_checked(feature_path(cfg, out));
  const int classes = checked_classes(records);
  const std::vector<VideoRecord> train = training_subset(cfg, records);
  std::vector<VideoRecord> model_train, fusion_val;
  split_fusion(train, cfg.fusion.validation_split, cfg.seed ^ kSplitSeedSalt, model_train,
               fusion_val);
  const ModelBundle bundle = load_model_bundle((out / "models").string());
  if (bundle.classes() != classes)
    throw std::runtime_error("fuse: models predict " + std::to_string(bundle.classes()) +
                             " classes but the data has " + std::to_string(classes));
  const FusionWeights weights = train_fusion_weights(fusion_val, bundle, cfg);
  save_fusion_weights((out / "fusion.json").string(), weights, cfg.fusion.c,
                      cfg.fusion.iterations);
}

FusionWeights load_weights_for(const Config&, const fs::path& out,
                               const std::string& weights_path) {
  const std::string path = weights_path.empty() ? (out / "fusion.json").string() : weights_path;
  return load_fusion_weights(path);
}

void cmd_eval(const Config& cfg, const fs::path& out, const std::string& weights_path) {
  const std::vector<VideoRecord> records = load_features_checked(feature_path(cfg, out));
  const int classes = checked_classes(records);
  fs::create_directories(out / "eval");

  json report;
  report["config_hash"] = config_hash(cfg);
  report["classes"] = classes;
  report["mode"] = cfg.eval.mode;
  json ratios = json::array();
  for (int i = 1; i <= 10; ++i) ratios.push_back(i / 10.0);
  report["ratios"] = std::move(ratios);

  RatioTable fused;
  if (cfg.eval.mode == "holdout") {
    const int g = resolve_test_group(cfg, records);
    std::vector<VideoRecord> test;
    for (const VideoRecord& r : records)
      if (r.group == g) test.push_back(r);
    const ModelBundle bundle = load_model_bundle((out / "models").string());
    const FusionWeights weights = load_weights_for(cfg, out, weights_path);
    fused = evaluate(test, bundle, weights);

    json per_model;
    for (int p = 0; p < kNumModels; ++p) {
      FusionWeights selector;
      selector.w[p] = 1.0;
      per_model[model_row_names()[p]] = table_to_json(evaluate(test, bundle, selector));
    }
    json w = json::array();
    for (double x : weights.w) w.push_back(x);
    report["test_group"] = g;
    report["num_test_videos"] = test.size();
    report["row_order"] = model_row_names();
    report["w"] = std::move(w);
    report["per_model"] = std::move(per_model);
  } else {
    const LosoResult res = loso_cv(records, make_train_fn(cfg, classes));
    fused = res.mean;
    report["num_videos"] = records.size();
    report["fold_groups"] = res.fold_groups;
    json per_fold = json::array();
    for (const RatioTable& t : res.per_fold) per_fold.push_back(table_to_json(t));
    report["per_fold"] = std::move(per_fold);
  }
  report["fused"] = table_to_json(fused);

  write_ratio_csv((out / "eval" / "ratio_table.csv").string(), fused);
  write_text(out / "eval" / "report.json", report.dump(2) + "\n");
  log_info("eval: accuracy at full observation " + std::to_string(fused.acc[9]));
}

void cmd_predict(const Config& cfg, const fs::path& out, const std::string& weights_path,
                 int ratio, const std::string& trace_path, const std::string& video_id) {
  const std::vector<VideoRecord> records = load_features_checked(feature_path(cfg, out));
  const VideoRecord* rec = nullptr;
  for (const VideoRecord& r : records)
    if (r.id == video_id) rec = &r;
  if (rec == nullptr) throw std::runtime_error("predict: no video with id '" + video_id + "'");

  const ModelBundle bundle = load_model_bundle((out / "models").string());
  const FusionWeights weights = load_weights_for(cfg, out, weights_path);
  const VideoRecord sliced = slice_observation(*rec, ratio);
  const SequencePrediction pred = predict_sequence(bundle, weights, sliced, sliced.frames());

  if (!trace_path.empty()) {
    std::ofstream trace(trace_path);
    if (!trace) throw std::runtime_error("predict: cannot write " + trace_path);
    trace << "t,predicted";
    for (int c = 1; c <= bundle.classes(); ++c) trace << ",c" << c;
    trace << "\n";
    char buf[64];
    for (const StepDecision& step : pred.steps) {
      trace << step.t << "," << step.predicted;
      for (double s : step.fused) {
        std::snprintf(buf, sizeof(buf), ",%.17g", s);
        trace << buf;
      }
      trace << "\n";
    }
  }

  json result;
  result["id"] = rec->id;
  result["label"] = rec->label;
  result["ratio_index"] = ratio;
  result["observed_frames"] = sliced.frames();
  result["predicted"] = pred.label;
  std::cout << result.dump() << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"two-person interaction prediction toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir, weights_path, trace_path, video_id;
  std::int64_t seed_override = -1;
  int ratio = 10;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "config JSON file")->required();
    sub->add_option("--out", out_dir, "artifact directory")->required();
    sub->add_option("--seed", seed_override, "override the config seed")
        ->check(CLI::NonNegativeNumber);
  };

  CLI::App* synth = app.add_subcommand("synth", "generate the synthetic dataset");
  CLI::App* featurize = app.add_subcommand("featurize", "extract features from the dataset");
  CLI::App* train = app.add_subcommand("train", "train the four models");
  CLI::App* fuse = app.add_subcommand("fuse", "learn the fusion weights");
  CLI::App* eval_cmd = app.add_subcommand("eval", "run the observation-ratio evaluation");
  CLI::App* predict = app.add_subcommand("predict", "predict one video at a ratio");
  for (CLI::App* sub : {synth, featurize, train, fuse, eval_cmd, predict}) add_common(sub);

  eval_cmd->add_option("--weights", weights_path, "fusion weights file");
  predict->add_option("--weights", weights_path, "fusion weights file");
  predict->add_option("--ratio", ratio, "observation ratio index, 1..10")
      ->required()
      ->check(CLI::Range(1, 10));
  predict->add_option("--trace", trace_path, "write per-step scores to this CSV");
  predict->add_option("video_id", video_id, "video to predict")->required();

  std::vector<const char*> argv;
  argv.push_back("ipredict");
  for (const std::string& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    Config cfg = load_config(config_path);
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    const fs::path out(out_dir);
    fs::create_directories(out);

    if (app.got_subcommand(synth)) cmd_synth(cfg, out);
    if (app.got_subcommand(featurize)) cmd_featurize(cfg, out);
    if (app.got_subcommand(train)) cmd_train(cfg, out);
    if (app.got_subcommand(fuse)) cmd_fuse(cfg, out);
    if (app.got_subcommand(eval_cmd)) cmd_eval(cfg, out, weights_path);
    if (app.got_subcommand(predict))
      cmd_predict(cfg, out, weights_path, ratio, trace_path, video_id);
  } catch (const std::exception& e) {
    json err;
    err["error"] = e.what();
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace ip
