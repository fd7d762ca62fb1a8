#include "ip/serialize.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace ip {

namespace {

constexpr int kCheckpointVersion = 1;

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json j;
  j["rows"] = m.rows;
  j["cols"] = m.cols;
  j["data"] = m.data;
  return j;
}

Matrix matrix_from_json(const nlohmann::json& j, const std::string& name) {
  Matrix m;
  m.rows = j.at("rows").get<int>();
  m.cols = j.at("cols").get<int>();
  m.data = j.at("data").get<std::vector<double>>();
  if (m.rows < 1 || m.cols < 1 ||
      m.data.size() != static_cast<std::size_t>(m.rows) * static_cast<std::size_t>(m.cols))
    throw std::runtime_error("checkpoint: parameter " + name + " has inconsistent shape");
  return m;
}

Vector vector_from_json(const nlohmann::json& j, const std::string& name, int expected) {
  Vector v = j.get<Vector>();
  if (static_cast<int>(v.size()) != expected)
    throw std::runtime_error("checkpoint: parameter " + name + " has dimension " +
                             std::to_string(v.size()) + ", expected " +
                             std::to_string(expected));
  return v;
}

nlohmann::json head_to_json(const ClassifierHead& head) {
  nlohmann::json j;
  j["w1"] = matrix_to_json(head.w1);
  j["b1"] = head.b1;
  j["w2"] = matrix_to_json(head.w2);
  j["b2"] = head.b2;
  return j;
}

ClassifierHead head_from_json(const nlohmann::json& j) {
  ClassifierHead head;
  head.w1 = matrix_from_json(j.at("w1"), "w1");
  head.b1 = vector_from_json(j.at("b1"), "b1", head.w1.rows);
  head.w2 = matrix_from_json(j.at("w2"), "w2");
  head.b2 = vector_from_json(j.at("b2"), "b2", head.w2.rows);
  if (head.w2.cols != head.w1.rows)
    throw std::runtime_error("checkpoint: head layer shapes disagree");
  if (head.classes() < 2) throw std::runtime_error("checkpoint: head has fewer than 2 classes");
  return head;
}

nlohmann::json lstm_to_json(const LstmParams& p) {
  nlohmann::json j;
  j["w_f"] = matrix_to_json(p.w_f);
  j["u_f"] = matrix_to_json(p.u_f);
  j["b_f"] = p.b_f;
  j["w_c"] = matrix_to_json(p.w_c);
  j["u_c"] = matrix_to_json(p.u_c);
  j["b_c"] = p.b_c;
  j["w_i"] = matrix_to_json(p.w_i);
  j["u_i"] = matrix_to_json(p.u_i);
  j["b_i"] = p.b_i;
  j["w_o"] = matrix_to_json(p.w_o);
  j["u_o"] = matrix_to_json(p.u_o);
  j["v_o"] = matrix_to_json(p.v_o);
  j["b_o"] = p.b_o;
  return j;
}

LstmParams lstm_from_json(const nlohmann::json& j) {
  LstmParams p;
  p.w_f = matrix_from_json(j.at("w_f"), "w_f");
  const int d = p.w_f.rows;
  const int in = p.w_f.cols;
  auto mat = [&](const char* name, int rows, int cols) {
    Matrix m = matrix_from_json(j.at(name), name);
    if (m.rows != rows || m.cols != cols)
      throw std::runtime_error("checkpoint: parameter " + std::string(name) +
                               " has mismatched shape");
    return m;
  };
  p.u_f = mat("u_f", d, d);
  p.w_c = mat("w_c", d, in);
  p.u_c = mat("u_c", d, d);
  p.w_i = mat("w_i", d, in);
  p.u_i = mat("u_i", d, d);
  p.w_o = mat("w_o", d, in);
  p.u_o = mat("u_o", d, d);
  p.v_o = mat("v_o", d, d);
  p.b_f = vector_from_json(j.at("b_f"), "b_f", d);
  p.b_c = vector_from_json(j.at("b_c"), "b_c", d);
  p.b_i = vector_from_json(j.at("b_i"), "b_i", d);
  p.b_o = vector_from_json(j.at("b_o"), "b_o", d);
  return p;
}

void write_checkpoint(const std::string& path, nlohmann::json j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path);
  out << j.dump() << '\n';
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

nlohmann::json read_checkpoint(const std::string& path, const std::string& kind) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint: " + path + ": " + e.what());
  }
  if (j.at("version").get<int>() != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version in " + path);
  const std::string got = j.at("kind").get<std::string>();
  if (got != kind)
    throw std::runtime_error("checkpoint: " + path + " holds a " + got + " model, expected " +
                             kind);
  return j;
}

}  // namespace

void save_spatial_model(const std::string& path, const SpatialModel& model,
                        const std::string& config_hash) {
  nlohmann::json j;
  j["version"] = kCheckpointVersion;
  j["kind"] = "spatial";
  j["config_hash"] = config_hash;
  j["head"] = head_to_json(model.head);
  write_checkpoint(path, std::move(j));
}

void save_temporal_model(const std::string& path, const TemporalModel& model,
                         const std::string& config_hash) {
  nlohmann::json j;
  j["version"] = kCheckpointVersion;
  j["kind"] = "temporal";
  j["config_hash"] = config_hash;
  j["kernel"] = matrix_to_json(model.conv.kernel);
  j["head"] = head_to_json(model.head);
  write_checkpoint(path, std::move(j));
}

void save_structural_model(const std::string& path, const StructuralModel& model,
                           const std::string& kind, const std::string& config_hash) {
  nlohmann::json j;
  j["version"] = kCheckpointVersion;
  j["kind"] = kind;
  j["config_hash"] = config_hash;
  j["lstm"] = lstm_to_json(model.lstm);
  j["head"] = head_to_json(model.head);
  write_checkpoint(path, std::move(j));
}

SpatialModel load_spatial_model(const std::string& path) {
  const nlohmann::json j = read_checkpoint(path, "spatial");
  SpatialModel model;
  model.head = head_from_json(j.at("head"));
  return model;
}

TemporalModel load_temporal_model(const std::string& path) {
  const nlohmann::json j = read_checkpoint(path, "temporal");
  TemporalModel model;
  model.conv.kernel = matrix_from_json(j.at("kernel"), "kernel");
  model.head = head_from_json(j.at("head"));
  if (model.head.input_dim() != model.conv.channels())
    throw std::runtime_error("checkpoint: temporal kernel channels disagree with head input");
  return model;
}

StructuralModel load_structural_model(const std::string& path, const std::string& kind) {
  const nlohmann::json j = read_checkpoint(path, kind);
  StructuralModel model;
  model.lstm = lstm_from_json(j.at("lstm"));
  model.head = head_from_json(j.at("head"));
  if (model.head.input_dim() != model.lstm.hidden())
    throw std::runtime_error("checkpoint: structural head input disagrees with hidden size");
  return model;
}

void save_model_bundle(const std::string& dir, const ModelBundle& bundle,
                       const std::string& config_hash) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  save_spatial_model((base / "spatial.json").string(), bundle.spatial, config_hash);
  save_temporal_model((base / "temporal.json").string(), bundle.temporal, config_hash);
  save_structural_model((base / "spatial_structural.json").string(),
                        bundle.spatial_structural, "spatial_structural", config_hash);
  save_structural_model((base / "temporal_structural.json").string(),
                        bundle.temporal_structural, "temporal_structural", config_hash);
}

ModelBundle load_model_bundle(const std::string& dir) {
  const std::filesystem::path base(dir);
  ModelBundle bundle;
  bundle.spatial = load_spatial_model((base / "spatial.json").string());
  bundle.temporal = load_temporal_model((base / "temporal.json").string());
  bundle.spatial_structural =
      load_structural_model((base / "spatial_structural.json").string(), "spatial_structural");
  bundle.temporal_structural =
      load_structural_model((base / "temporal_structural.json").string(), "temporal_structural");
  const int m = bundle.classes();
  if (bundle.temporal.classes() != m || bundle.spatial_structural.classes() != m ||
      bundle.temporal_structural.classes() != m)
    throw std::runtime_error("checkpoint: bundle models disagree on class count");
  return bundle;
}

}  // namespace ip
