#include "ip/fusion.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace ip {

const std::array<std::string, kNumModels>& model_row_names() {
  static const std::array<std::string, kNumModels> names = {
      "spatial", "temporal", "spatial_structural", "temporal_structural"};
  return names;
}

ScoreMatrix::ScoreMatrix(int classes) {
  if (classes < 2) throw std::invalid_argument("ScoreMatrix: need at least 2 classes");
  scores = Matrix(kNumModels, classes);
}

void ScoreMatrix::set_row(int row, const Vector& s) {
  if (row < 0 || row >= kNumModels) throw std::invalid_argument("ScoreMatrix: bad row");
  if (static_cast<int>(s.size()) != classes())
    throw std::invalid_argument("ScoreMatrix: row dim mismatch");
  double sum = 0.0;
  for (double v : s) {
    if (!(v >= 0.0)) throw std::invalid_argument("ScoreMatrix: negative score");
    sum += v;
  }
  if (std::fabs(sum - 1.0) > 1e-6)
    throw std::invalid_argument("ScoreMatrix: row does not sum to 1");
  for (int i = 0; i < classes(); ++i) scores(row, i) = s[i];
}

Vector ScoreMatrix::column(int cls0) const {
  if (cls0 < 0 || cls0 >= classes()) throw std::invalid_argument("ScoreMatrix: bad class");
  Vector col(kNumModels);
  for (int r = 0; r < kNumModels; ++r) col[r] = scores(r, cls0);
  return col;
}

std::vector<RankPair> build_pairs(const std::vector<std::pair<ScoreMatrix, int>>& labeled) {
  std::vector<RankPair> pairs;
  for (const auto& [mat, label] : labeled) {
    if (label < 1 || label > mat.classes())
      throw std::invalid_argument("build_pairs: label outside 1..m");
    const int l = label - 1;
    for (int j = 0; j < mat.classes(); ++j) {
      if (j == l) continue;
      RankPair pos, neg;
      pos.y = 1;
      neg.y = -1;
      for (int r = 0; r < kNumModels; ++r) {
        pos.x[r] = mat.at(r, l) - mat.at(r, j);
        neg.x[r] = -pos.x[r];
      }
      pairs.push_back(pos);
      pairs.push_back(neg);
    }
  }
  return pairs;
}

double ranking_objective(const std::vector<RankPair>& pairs,
                         const std::array<double, kNumModels>& w, double c) {
  double obj = 0.0;
  for (int r = 0; r < kNumModels; ++r) obj += w[r] * w[r];
  for (const RankPair& p : pairs) {
    double margin = 0.0;
    for (int r = 0; r < kNumModels; ++r) margin += w[r] * p.x[r];
    margin *= p.y;
    if (margin < 1.0) obj += c * (1.0 - margin);
  }
  return obj;
}

namespace {

std::array<double, kNumModels> train_ranker_masked(const std::vector<RankPair>& pairs,
                                                   double c, int iterations,
                                                   const std::array<bool, kNumModels>& active) {
  std::array<double, kNumModels> w{};
  std::array<double, kNumModels> best = w;
  double best_obj = ranking_objective(pairs, w, c);

  for (int t = 1; t <= iterations; ++t) {
    // One pass computes both the subgradient and the objective at w.
    std::array<double, kNumModels> grad{};
    double obj = 0.0;
    for (int r = 0; r < kNumModels; ++r) {
      if (!active[r]) continue;
      grad[r] = 2.0 * w[r];
      obj += w[r] * w[r];
    }
    for (const RankPair& p : pairs) {
      double margin = 0.0;
      for (int r = 0; r < kNumModels; ++r) margin += w[r] * p.x[r];
      margin *= p.y;
      if (margin < 1.0) {
        obj += c * (1.0 - margin);
        for (int r = 0; r < kNumModels; ++r)
          if (active[r]) grad[r] -= c * p.y * p.x[r];
      }
    }
    if (obj < best_obj) {
      best_obj = obj;
      best = w;
    }
    const double step = 1.0 / (2.0 * t);
    for (int r = 0; r < kNumModels; ++r)
      if (active[r]) w[r] -= step * grad[r];
  }
  if (ranking_objective(pairs, w, c) < best_obj) best = w;
  return best;
}

}  // namespace

std::array<double, kNumModels> train_ranker(const std::vector<RankPair>& pairs, double c,
                                            int iterations) {
  if (pairs.empty()) throw std::invalid_argument("train_ranker: no pairs");
  if (c <= 0.0 || iterations < 1)
    throw std::invalid_argument("train_ranker: bad hyperparameters");
  return train_ranker_masked(pairs, c, iterations, {true, true, true, true});
}

void validate_fusion_weights(const FusionWeights& w) {
  bool any_positive = false;
  for (double v : w.w) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw std::invalid_argument("fusion weights: component not finite and >= 0");
    if (v > 0.0) any_positive = true;
  }
  if (!any_positive) throw std::invalid_argument("fusion weights: all components zero");
}

FusionWeights nonneg_project_retrain(const std::vector<RankPair>& pairs, double c,
                                     int iterations, int* out_rounds) {
  if (pairs.empty()) throw std::invalid_argument("nonneg_project_retrain: no pairs");
  std::array<bool, kNumModels> active = {true, true, true, true};
  int rounds = 0;

  // Each round either finishes or removes at least one coordinate, so four
  // rounds always suffice.
  while (true) {
    int n_active = 0;
    for (bool a : active) n_active += a ? 1 : 0;
    if (n_active == 0)
      throw std::runtime_error("nonneg_project_retrain: no positively contributing model");

    std::array<double, kNumModels> w = train_ranker_masked(pairs, c, iterations, active);
    ++rounds;
    bool clean = true;
    for (int r = 0; r < kNumModels; ++r) {
      if (active[r] && w[r] < 0.0) {
        active[r] = false;
        clean = false;
      }
    }
    if (clean) {
      FusionWeights out;
      out.w = w;
      validate_fusion_weights(out);
      if (out_rounds) *out_rounds = rounds;
      return out;
    }
  }
}

Vector fuse_scores(const ScoreMatrix& scores, const FusionWeights& weights) {
  Vector fused(scores.classes(), 0.0);
  for (int i = 0; i < scores.classes(); ++i)
    for (int r = 0; r < kNumModels; ++r) fused[i] += weights.w[r] * scores.at(r, i);
  return fused;
}

void save_fusion_weights(const std::string& path, const FusionWeights& weights, double c,
                         int iterations) {
  validate_fusion_weights(weights);
  nlohmann::json j;
  j["row_order"] = model_row_names();
  j["w"] = weights.w;
  j["C"] = c;
  j["iterations"] = iterations;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_fusion_weights: cannot open " + path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("save_fusion_weights: write failed for " + path);
}

FusionWeights load_fusion_weights(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_fusion_weights: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_fusion_weights: " + path + ": " + e.what());
  }
  const auto names = j.at("row_order").get<std::vector<std::string>>();
  if (names.size() != kNumModels)
    throw std::runtime_error("load_fusion_weights: row_order must have 4 entries");
  for (int r = 0; r < kNumModels; ++r)
    if (names[r] != model_row_names()[r])
      throw std::runtime_error("load_fusion_weights: unexpected row order entry " + names[r]);
  const auto w = j.at("w").get<std::vector<double>>();
  if (w.size() != kNumModels)
    throw std::runtime_error("load_fusion_weights: w must have 4 entries");
  FusionWeights out;
  for (int r = 0; r < kNumModels; ++r) out.w[r] = w[r];
  validate_fusion_weights(out);
  return out;
}

}  // namespace ip
