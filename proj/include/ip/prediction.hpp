#pragma once

#include <vector>

#include "ip/context.hpp"
#include "ip/fusion.hpp"
#include "ip/models.hpp"

namespace ip {

// Argmax as a class label in 1..m; ties resolve to the smallest index.
int per_step_label(const Vector& fused);

// Most frequent label; ties resolve to the smallest class index.
int majority_vote(const std::vector<int>& labels);

// Scores of all four models at step t (1-based) of a record. Flow-driven
// rows use flow t while it exists and flow n-1 at the final step; with no
// flow at all (single-frame observation) they emit uniform scores.
ScoreMatrix build_score_matrix(const ModelBundle& bundle, const VideoRecord& rec, int t);

struct StepDecision {
  int t = 0;  // 1-based step
  Vector fused;
  int predicted = 0;
};

struct SequencePrediction {
  int label = 0;  // majority vote over the steps
  std::vector<StepDecision> steps;
};

SequencePrediction predict_sequence(const ModelBundle& bundle, const FusionWeights& weights,
                                    const VideoRecord& rec, int upto);

}  // namespace ip
