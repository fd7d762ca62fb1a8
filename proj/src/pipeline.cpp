#include "ip/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include "ip/log.hpp"
#include "ip/prediction.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ip {

namespace {

void require_keys(const json& obj, const std::string& where,
                  std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) ok = true;
    if (!ok) throw std::runtime_error("load_config: unknown key '" + it.key() + "' in " + where);
  }
}

int get_int(const json& obj, const char* key, int fallback, int lo, int hi,
            const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer())
    throw std::runtime_error("load_config: " + where + "." + key + " must be an integer");
  const auto x = v.get<std::int64_t>();
  if (x < lo || x > hi)
    throw std::runtime_error("load_config: " + where + "." + key + " out of range [" +
                             std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return static_cast<int>(x);
}

double get_double(const json& obj, const char* key, double fallback, double lo, double hi,
                  const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number())
    throw std::runtime_error("load_config: " + where + "." + key + " must be a number");
  const double x = v.get<double>();
  if (!(x >= lo && x <= hi))
    throw std::runtime_error("load_config: " + where + "." + key + " out of range");
  return x;
}

json config_to_json(const Config& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["dataset"]["source"] = cfg.dataset.source;
  j["dataset"]["path"] = cfg.dataset.path;
  j["dataset"]["num_classes"] = cfg.dataset.synth.num_classes;
  j["dataset"]["videos_per_class"] = cfg.dataset.synth.videos_per_class;
  j["dataset"]["frames_per_video"] = cfg.dataset.synth.frames_per_video;
  j["dataset"]["num_groups"] = cfg.dataset.synth.num_groups;
  j["dataset"]["width"] = cfg.dataset.synth.width;
  j["dataset"]["height"] = cfg.dataset.synth.height;
  j["extractor"]["grid"] = cfg.grid;
  j["extractor"]["bins"] = cfg.bins;
  j["flow"]["block"] = cfg.flow.block;
  j["flow"]["search"] = cfg.flow.search;
  j["model"]["lstm_units"] = cfg.model.lstm_units;
  j["model"]["structural_hidden"] = cfg.model.structural_hidden;
  j["model"]["head_hidden"] = cfg.model.head_hidden;
  j["model"]["k"] = cfg.model.k;
  j["model"]["learning_rate"] = cfg.model.learning_rate;
  j["model"]["epochs"] = cfg.model.epochs;
  j["model"]["batch_size"] = cfg.model.batch_size;
  j["fusion"]["c"] = cfg.fusion.c;
  j["fusion"]["iterations"] = cfg.fusion.iterations;
  j["fusion"]["validation_split"] = cfg.fusion.validation_split;
  j["eval"]["mode"] = cfg.eval.mode;
  j["eval"]["test_group"] = cfg.eval.test_group;
  return j;
}

std::string frame_name(int t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04d.pgm", t);
  return buf;
}

json box_to_json(const BoundingBox& b) {
  return json::array({b.x_min, b.y_min, b.x_max, b.y_max});
}

BoundingBox box_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4)
    throw std::runtime_error("read_raw_dataset: malformed box in " + where);
  BoundingBox b;
  b.x_min = j[0].get<int>();
  b.y_min = j[1].get<int>();
  b.x_max = j[2].get<int>();
  b.y_max = j[3].get<int>();
  return b;
}

}  // namespace

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("load_config: " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw std::runtime_error("load_config: top level must be an object");
  require_keys(j, "top level", {"seed", "dataset", "extractor", "flow", "model", "fusion", "eval"});

  Config cfg;
  if (!j.contains("seed"))
    throw std::runtime_error("load_config: missing mandatory key 'seed'");
  if (!j.at("seed").is_number_integer() ||
      (j.at("seed").is_number_integer() && !j.at("seed").is_number_unsigned() &&
       j.at("seed").get<std::int64_t>() < 0))
    throw std::runtime_error("load_config: seed must be a non-negative integer");
  cfg.seed = j.at("seed").get<std::uint64_t>();

  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    require_keys(d, "dataset",
                 {"source", "path", "num_classes", "videos_per_class", "frames_per_video",
                  "num_groups", "width", "height"});
    if (d.contains("source")) cfg.dataset.source = d.at("source").get<std::string>();
    if (cfg.dataset.source != "synthetic" && cfg.dataset.source != "features")
      throw std::runtime_error("load_config: dataset.source must be 'synthetic' or 'features'");
    if (d.contains("path")) cfg.dataset.path = d.at("path").get<std::string>();
    if (cfg.dataset.source == "features") {
      if (cfg.dataset.path.empty())
        throw std::runtime_error("load_config: dataset.path required when source is 'features'");
      if (!fs::exists(cfg.dataset.path))
        throw std::runtime_error("load_config: dataset.path does not exist: " + cfg.dataset.path);
    }
    SynthConfig& s = cfg.dataset.synth;
    s.num_classes = get_int(d, "num_classes", s.num_classes, 2, 8, "dataset");
    s.videos_per_class = get_int(d, "videos_per_class", s.videos_per_class, 1, 100000, "dataset");
    s.frames_per_video = get_int(d, "frames_per_video", s.frames_per_video, 4, 100000, "dataset");
    s.num_groups = get_int(d, "num_groups", s.num_groups, 1, 100000, "dataset");
    s.width = get_int(d, "width", s.width, 48, 8192, "dataset");
    s.height = get_int(d, "height", s.height, 40, 8192, "dataset");
  }
  if (j.contains("extractor")) {
    const json& e = j.at("extractor");
    require_keys(e, "extractor", {"grid", "bins"});
    cfg.grid = get_int(e, "grid", cfg.grid, 1, 64, "extractor");
    cfg.bins = get_int(e, "bins", cfg.bins, 1, 256, "extractor");
  }
  if (j.contains("flow")) {
    const json& f = j.at("flow");
    require_keys(f, "flow", {"block", "search"});
    cfg.flow.block = get_int(f, "block", cfg.flow.block, 4, 1024, "flow");
    cfg.flow.search = get_int(f, "search", cfg.flow.search, 1, 1024, "flow");
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    require_keys(m, "model",
                 {"lstm_units", "structural_hidden", "head_hidden", "k", "learning_rate",
                  "epochs", "batch_size"});
    cfg.model.lstm_units = get_int(m, "lstm_units", cfg.model.lstm_units, 1, 65536, "model");
    cfg.model.structural_hidden =
        get_int(m, "structural_hidden", cfg.model.structural_hidden, 1, 65536, "model");
    cfg.model.head_hidden = get_int(m, "head_hidden", cfg.model.head_hidden, 1, 65536, "model");
    cfg.model.k = get_int(m, "k", cfg.model.k, 1, 1024, "model");
    cfg.model.learning_rate =
        get_double(m, "learning_rate", cfg.model.learning_rate, 1e-12, 1e6, "model");
    cfg.model.epochs = get_int(m, "epochs", cfg.model.epochs, 1, 1000000, "model");
    cfg.model.batch_size = get_int(m, "batch_size", cfg.model.batch_size, 1, 1000000, "model");
  }
  if (j.contains("fusion")) {
    const json& f = j.at("fusion");
    require_keys(f, "fusion", {"c", "iterations", "validation_split"});
    cfg.fusion.c = get_double(f, "c", cfg.fusion.c, 1e-12, 1e12, "fusion");
    cfg.fusion.iterations = get_int(f, "iterations", cfg.fusion.iterations, 1, 100000000, "fusion");
    cfg.fusion.validation_split =
        get_double(f, "validation_split", cfg.fusion.validation_split, 1e-9, 1.0 - 1e-9, "fusion");
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    require_keys(e, "eval", {"mode", "test_group"});
    if (e.contains("mode")) cfg.eval.mode = e.at("mode").get<std::string>();
    if (cfg.eval.mode != "holdout" && cfg.eval.mode != "loso")
      throw std::runtime_error("load_config: eval.mode must be 'holdout' or 'loso'");
    cfg.eval.test_group = get_int(e, "test_group", cfg.eval.test_group, 0, 1000000, "eval");
  }
  return cfg;
}

std::string config_hash(const Config& cfg) {
  const std::string dump = config_to_json(cfg).dump();
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_raw_dataset(const std::string& dataset_dir, const std::vector<RawVideo>& videos) {
  fs::create_directories(dataset_dir);
  std::ofstream manifest(fs::path(dataset_dir) / "manifest.jsonl");
  if (!manifest)
    throw std::runtime_error("write_raw_dataset: cannot write manifest in " + dataset_dir);
  for (const RawVideo& v : videos) {
    if (v.frames.size() != v.boxes.size())
      throw std::runtime_error("write_raw_dataset: video " + v.id +
                               " has mismatched frames and boxes");
    const fs::path vdir = fs::path(dataset_dir) / "videos" / v.id;
    fs::create_directories(vdir);
    for (std::size_t t = 0; t < v.frames.size(); ++t)
      save_image_pgm((vdir / frame_name(static_cast<int>(t))).string(), v.frames[t]);
    json rec;
    rec["id"] = v.id;
    rec["label"] = v.label;
    rec["group"] = v.group;
    rec["frames_dir"] = (fs::path("videos") / v.id).generic_string();
    rec["n_frames"] = v.frames.size();
    json boxes = json::array();
    for (const auto& pair : v.boxes)
      boxes.push_back(json::array({box_to_json(pair[0]), box_to_json(pair[1])}));
    rec["boxes"] = std::move(boxes);
    manifest << rec.dump() << "\n";
  }
}

std::vector<RawVideo> read_raw_dataset(const std::string& dataset_dir) {
  std::ifstream manifest(fs::path(dataset_dir) / "manifest.jsonl");
  if (!manifest)
    throw std::runtime_error("read_raw_dataset: cannot open manifest in " + dataset_dir);
  std::vector<RawVideo> videos;
  std::string line;
  int line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error("read_raw_dataset: manifest line " + std::to_string(line_no) +
                               " is not valid JSON: " + e.what());
    }
    RawVideo v;
    v.id = rec.at("id").get<std::string>();
    v.label = rec.at("label").get<int>();
    v.group = rec.at("group").get<int>();
    const int n = rec.at("n_frames").get<int>();
    const std::string frames_dir = rec.at("frames_dir").get<std::string>();
    const json& boxes = rec.at("boxes");
    if (!boxes.is_array() || static_cast<int>(boxes.size()) != n)
      throw std::runtime_error("read_raw_dataset: video " + v.id +
                               " needs one box pair per frame");
    for (int t = 0; t < n; ++t) {
      const fs::path fpath = fs::path(dataset_dir) / frames_dir / frame_name(t);
      v.frames.push_back(load_image_pnm(fpath.string()));
      const json& pair = boxes[t];
      if (!pair.is_array() || pair.size() != 2)
        throw std::runtime_error("read_raw_dataset: video " + v.id +
                                 " frame " + std::to_string(t) + " needs exactly two boxes");
      v.boxes.push_back({box_from_json(pair[0], v.id), box_from_json(pair[1], v.id)});
    }
    videos.push_back(std::move(v));
  }
  return videos;
}

std::vector<VideoRecord> featurize_dataset(const std::vector<RawVideo>& videos,
                                           const Config& cfg) {
  GridFeatureExtractor extractor(cfg.grid, cfg.bins);
  std::vector<VideoRecord> records;
  records.reserve(videos.size());
  for (const RawVideo& v : videos) {
    records.push_back(featurize_video(v, extractor, cfg.flow));
    log_debug("featurized " + v.id + " (" + std::to_string(records.back().frames()) + " frames)");
  }
  return records;
}

ExampleSets build_example_sets(const std::vector<VideoRecord>& videos, int k) {
  if (k < 1) throw std::invalid_argument("build_example_sets: k must be >= 1");
  ExampleSets sets;
  for (const VideoRecord& rec : videos) {
    for (const ContextSequence& ctx : rec.context_seq) {
      sets.spatial.push_back({ctx.regions[kGlobal], rec.label});
      sets.spatial_structural.push_back({ctx, rec.label});
    }
    for (const ContextSequence& ctx : rec.flow_context_seq)
      sets.temporal_structural.push_back({ctx, rec.label});
    const int f = static_cast<int>(rec.flow_feats.size());
    if (f >= k) {
      for (int start = 0; start + k <= f; ++start) {
        WindowExample ex;
        ex.stack.assign(rec.flow_feats.begin() + start, rec.flow_feats.begin() + start + k);
        ex.label = rec.label;
        sets.temporal.push_back(std::move(ex));
      }
    } else if (f >= 1) {
      sets.temporal.push_back({pad_flow_sequence(rec.flow_feats, f, k), rec.label});
    }
  }
  return sets;
}

void split_fusion(const std::vector<VideoRecord>& train, double validation_split,
                  std::uint64_t seed, std::vector<VideoRecord>& model_train,
                  std::vector<VideoRecord>& fusion_val) {
  if (!(validation_split > 0.0 && validation_split < 1.0))
    throw std::invalid_argument("split_fusion: validation_split must be in (0, 1)");
  if (train.empty()) throw std::invalid_argument("split_fusion: empty training set");

  std::map<int, std::vector<int>> by_label;
  for (std::size_t i = 0; i < train.size(); ++i)
    by_label[train[i].label].push_back(static_cast<int>(i));

  std::vector<char> goes_to_val(train.size(), 0);
  for (auto& [label, idx] : by_label) {
    Rng rng(seed ^ (static_cast<std::uint64_t>(label) * 0x9E3779B97F4A7C15ULL));
    rng.shuffle(idx);
    const int n = static_cast<int>(idx.size());
    int n_val = static_cast<int>(std::lround(validation_split * n));
    if (n >= 2)
      n_val = std::clamp(n_val, 1, n - 1);
    else {
      n_val = 0;
      log_info("split_fusion: class " + std::to_string(label) +
               " has a single video; keeping it in the model half");
    }
    for (int i = 0; i < n_val; ++i) goes_to_val[idx[i]] = 1;
  }

  model_train.clear();
  fusion_val.clear();
  for (std::size_t i = 0; i < train.size(); ++i)
    (goes_to_val[i] ? fusion_val : model_train).push_back(train[i]);
}

namespace {

void log_trace(const std::string& name, const TrainResult& r) {
  if (r.loss_trace.empty()) return;
  log_info(name + ": epoch loss " + std::to_string(r.loss_trace.front()) + " -> " +
           std::to_string(r.loss_trace.back()));
}

}  // namespace

ModelBundle train_models(const std::vector<VideoRecord>& train, int classes, const Config& cfg) {
  if (train.empty()) throw std::invalid_argument("train_models: empty training set");
  if (classes < 2) throw std::invalid_argument("train_models: need at least two classes");
  const ExampleSets sets = build_example_sets(train, cfg.model.k);
  if (sets.temporal.empty() || sets.temporal_structural.empty())
    throw std::runtime_error("train_models: no training video has any flow entry");
  const int dim = static_cast<int>(sets.spatial.front().input.size());

  ModelBundle bundle;
  TrainHyper hp;
  hp.learning_rate = cfg.model.learning_rate;
  hp.epochs = cfg.model.epochs;
  hp.batch_size = cfg.model.batch_size;

  {
    Rng rng(cfg.seed ^ 0xA11CE501ULL);
    bundle.spatial.head = init_head(cfg.model.head_hidden, dim, classes, rng);
    hp.seed = cfg.seed ^ 0x7E571AB0ULL;
    log_trace("spatial", train_model(bundle.spatial, sets.spatial, hp));
  }
  {
    Rng rng(cfg.seed ^ 0xA11CE502ULL);
    bundle.temporal.conv = init_temporal_conv(cfg.model.k, dim, rng);
    bundle.temporal.head = init_head(cfg.model.head_hidden, dim, classes, rng);
    hp.seed = cfg.seed ^ 0x7E571AB1ULL;
    log_trace("temporal", train_model(bundle.temporal, sets.temporal, hp));
  }
  {
    Rng rng(cfg.seed ^ 0xA11CE503ULL);
    bundle.spatial_structural.lstm = init_lstm(cfg.model.lstm_units, dim, rng);
    bundle.spatial_structural.head =
        init_head(cfg.model.structural_hidden, cfg.model.lstm_units, classes, rng);
    hp.seed = cfg.seed ^ 0x7E571AB2ULL;
    log_trace("spatial_structural",
              train_model(bundle.spatial_structural, sets.spatial_structural, hp));
  }
  {
    Rng rng(cfg.seed ^ 0xA11CE504ULL);
    bundle.temporal_structural.lstm = init_lstm(cfg.model.lstm_units, dim, rng);
    bundle.temporal_structural.head =
        init_head(cfg.model.structural_hidden, cfg.model.lstm_units, classes, rng);
    hp.seed = cfg.seed ^ 0x7E571AB3ULL;
    log_trace("temporal_structural",
              train_model(bundle.temporal_structural, sets.temporal_structural, hp));
  }
  return bundle;
}

FusionWeights train_fusion_weights(const std::vector<VideoRecord>& fusion_val,
                                   const ModelBundle& bundle, const Config& cfg) {
  if (fusion_val.empty())
    throw std::invalid_argument("train_fusion_weights: empty validation set");
  std::vector<std::pair<ScoreMatrix, int>> labeled;
  for (const VideoRecord& rec : fusion_val)
    for (int t = 1; t <= rec.frames(); ++t)
      labeled.emplace_back(build_score_matrix(bundle, rec, t), rec.label);
  const std::vector<RankPair> pairs = build_pairs(labeled);
  if (pairs.empty())
    throw std::runtime_error("train_fusion_weights: validation set yields no ranking pairs");
  int rounds = 0;
  FusionWeights w = nonneg_project_retrain(pairs, cfg.fusion.c, cfg.fusion.iterations, &rounds);
  log_info("fusion: " + std::to_string(pairs.size()) + " pairs, " + std::to_string(rounds) +
           " round(s)");
  return w;
}

TrainFn make_train_fn(const Config& cfg, int classes) {
  return [cfg, classes](const std::vector<VideoRecord>& train) {
    std::vector<VideoRecord> model_train, fusion_val;
    split_fusion(train, cfg.fusion.validation_split, cfg.seed ^ 0xF0F0F0F0ULL, model_train,
                 fusion_val);
    ModelBundle bundle = train_models(model_train, classes, cfg);
    FusionWeights weights = train_fusion_weights(fusion_val, bundle, cfg);
    return std::make_pair(std::move(bundle), std::move(weights));
  };
}

int max_label(const std::vector<VideoRecord>& records) {
  int m = 0;
  for (const VideoRecord& r : records) m = std::max(m, r.label);
  return m;
}

int max_group(const std::vector<VideoRecord>& records) {
  int g = 0;
  for (const VideoRecord& r : records) g = std::max(g, r.group);
  return g;
}

}  // namespace ip
