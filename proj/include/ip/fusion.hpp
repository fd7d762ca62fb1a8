#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "ip/numerics.hpp"

namespace ip {

inline constexpr int kNumModels = 4;

enum ModelRowIndex {
  kSpatialRow = 0,
  kTemporalRow = 1,
  kSpatialStructuralRow = 2,
  kTemporalStructuralRow = 3,
};

const std::array<std::string, kNumModels>& model_row_names();

// Per-step score matrix: one probability row per model, fixed row order
// spatial, temporal, spatial-structural, temporal-structural.
struct ScoreMatrix {
  Matrix scores;  // kNumModels x m

  explicit ScoreMatrix(int classes);
  int classes() const { return scores.cols; }
  double at(int row, int cls0) const { return scores(row, cls0); }
  // Rows must be distributions: entries >= 0 summing to 1 within 1e-6.
  void set_row(int row, const Vector& s);
  Vector column(int cls0) const;  // the 4 per-model scores of one class
};

// One ranking example: x = s_l - s_j (or its mirror), y in {+1, -1}.
struct RankPair {
  std::array<double, kNumModels> x{};
  int y = 0;
};

// Emits, for each labeled matrix and each wrong class j, the pair
// (s_l - s_j, +1) and its mirror (s_j - s_l, -1).
std::vector<RankPair> build_pairs(const std::vector<std::pair<ScoreMatrix, int>>& labeled);

// ||w||^2 + c * sum_i max(0, 1 - y_i <w, x_i>)
double ranking_objective(const std::vector<RankPair>& pairs,
                         const std::array<double, kNumModels>& w, double c);

// Full-batch subgradient descent from w = 0 with step 1/(2t); returns the
// best iterate seen. Deterministic: no sampling is involved.
std::array<double, kNumModels> train_ranker(const std::vector<RankPair>& pairs, double c,
                                            int iterations = 10000);

struct FusionWeights {
  std::array<double, kNumModels> w{};
};

void validate_fusion_weights(const FusionWeights& w);

// Iterated zero-and-retrain: train on the active coordinates, zero any
// negative ones, drop them from the active set, repeat (at most 4 rounds).
// Throws if every coordinate gets eliminated. out_rounds, when non-null,
// receives the number of training rounds used.
FusionWeights nonneg_project_retrain(const std::vector<RankPair>& pairs, double c,
                                     int iterations = 10000, int* out_rounds = nullptr);

// c_i = sum_p w_p * s_{p,i}; not renormalized.
Vector fuse_scores(const ScoreMatrix& scores, const FusionWeights& weights);

void save_fusion_weights(const std::string& path, const FusionWeights& weights, double c,
                         int iterations);
FusionWeights load_fusion_weights(const std::string& path);

}  // namespace ip
