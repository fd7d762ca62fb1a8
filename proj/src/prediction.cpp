#include "ip/prediction.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace ip {

int per_step_label(const Vector& fused) {
  if (fused.empty()) throw std::invalid_argument("per_step_label: empty scores");
  int best = 0;
  for (int i = 1; i < static_cast<int>(fused.size()); ++i)
    if (fused[i] > fused[best]) best = i;
  return best + 1;
}

int majority_vote(const std::vector<int>& labels) {
  if (labels.empty()) throw std::invalid_argument("majority_vote: empty label list");
  int max_label = 0;
  for (int l : labels) {
    if (l < 1) throw std::invalid_argument("majority_vote: labels must be >= 1");
    max_label = std::max(max_label, l);
  }
  std::vector<int> counts(static_cast<std::size_t>(max_label) + 1, 0);
  for (int l : labels) ++counts[l];
  int best = 1;
  for (int l = 2; l <= max_label; ++l)
    if (counts[l] > counts[best]) best = l;
  return best;
}

ScoreMatrix build_score_matrix(const ModelBundle& bundle, const VideoRecord& rec, int t) {
  const int n = rec.frames();
  if (n < 1) throw std::invalid_argument("build_score_matrix: record has no frames");
  if (t < 1 || t > n)
    throw std::invalid_argument("build_score_matrix: step " + std::to_string(t) +
                                " outside 1.." + std::to_string(n));
  const int n_flows = static_cast<int>(rec.flow_feats.size());
  if (n_flows != n - 1 || static_cast<int>(rec.flow_context_seq.size()) != n - 1)
    throw std::invalid_argument("build_score_matrix: flow streams must have n-1 entries");

  const int m = bundle.classes();
  if (bundle.temporal.classes() != m || bundle.spatial_structural.classes() != m ||
      bundle.temporal_structural.classes() != m)
    throw std::invalid_argument("build_score_matrix: bundle class count mismatch");

  ScoreMatrix out(m);
  const ContextSequence& ctx = rec.context_seq[t - 1];
  out.set_row(kSpatialRow, bundle.spatial.forward(ctx.regions[kGlobal]));
  out.set_row(kSpatialStructuralRow, bundle.spatial_structural.forward(ctx));

  if (n_flows == 0) {
    // Single-frame observation: no motion evidence yet.
    const Vector uniform(m, 1.0 / m);
    out.set_row(kTemporalRow, uniform);
    out.set_row(kTemporalStructuralRow, uniform);
    return out;
  }

  const int fi = std::min(t, n_flows);  // flow index for this step, 1-based
  const std::vector<Vector> so_far(rec.flow_feats.begin(), rec.flow_feats.begin() + fi);
  const int k = bundle.temporal.conv.k();
  out.set_row(kTemporalRow, bundle.temporal.forward(pad_flow_sequence(so_far, fi, k)));
  out.set_row(kTemporalStructuralRow,
              bundle.temporal_structural.forward(rec.flow_context_seq[fi - 1]));
  return out;
}

SequencePrediction predict_sequence(const ModelBundle& bundle, const FusionWeights& weights,
                                    const VideoRecord& rec, int upto) {
  validate_fusion_weights(weights);
  if (upto < 1 || upto > rec.frames())
    throw std::invalid_argument("predict_sequence: upto outside 1..n");

  SequencePrediction pred;
  std::vector<int> votes;
  votes.reserve(static_cast<std::size_t>(upto));
  for (int t = 1; t <= upto; ++t) {
    StepDecision step;
    step.t = t;
    step.fused = fuse_scores(build_score_matrix(bundle, rec, t), weights);
    step.predicted = per_step_label(step.fused);
    votes.push_back(step.predicted);
    pred.steps.push_back(std::move(step));
  }
  pred.label = majority_vote(votes);
  return pred;
}

}  // namespace ip
