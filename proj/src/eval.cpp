#include "ip/eval.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include "ip/log.hpp"
#include "ip/prediction.hpp"

namespace ip {

int slice_length(int n, int ratio_index) {
  if (n < 1) throw std::invalid_argument("slice_length: need n >= 1");
  if (ratio_index < 1 || ratio_index > 10)
    throw std::invalid_argument("slice_length: ratio index outside 1..10");
  // Round half up; n*i stays well inside integer range.
  const int len = (n * ratio_index + 5) / 10;
  return std::max(1, len);
}

VideoRecord slice_observation(const VideoRecord& rec, int ratio_index) {
  const int len = slice_length(rec.frames(), ratio_index);
  VideoRecord out;
  out.id = rec.id;
  out.label = rec.label;
  out.group = rec.group;
  out.context_seq.assign(rec.context_seq.begin(), rec.context_seq.begin() + len);
  out.flow_context_seq.assign(rec.flow_context_seq.begin(),
                              rec.flow_context_seq.begin() + (len - 1));
  out.flow_feats.assign(rec.flow_feats.begin(), rec.flow_feats.begin() + (len - 1));
  return out;
}

RatioTable evaluate(const std::vector<VideoRecord>& test, const ModelBundle& bundle,
                    const FusionWeights& weights) {
  if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
  RatioTable table;
  for (int i = 1; i <= 10; ++i) {
    int correct = 0;
    for (const VideoRecord& rec : test) {
      const VideoRecord obs = slice_observation(rec, i);
      const SequencePrediction pred =
          predict_sequence(bundle, weights, obs, obs.frames());
      if (pred.label == rec.label) ++correct;
    }
    table.acc[i - 1] = static_cast<double>(correct) / static_cast<double>(test.size());
  }
  return table;
}

LosoResult loso_cv(const std::vector<VideoRecord>& data, const TrainFn& train_fn) {
  std::set<int> group_ids;
  int max_label = 0;
  for (const VideoRecord& rec : data) {
    group_ids.insert(rec.group);
    max_label = std::max(max_label, rec.label);
  }
  if (group_ids.size() < 2)
    throw std::invalid_argument("loso_cv: need at least two groups");

  LosoResult result;
  for (int g : group_ids) {
    std::vector<VideoRecord> train, test;
    for (const VideoRecord& rec : data)
      (rec.group == g ? test : train).push_back(rec);

    std::set<int> train_labels;
    for (const VideoRecord& rec : train) train_labels.insert(rec.label);
    for (int l = 1; l <= max_label; ++l)
      if (!train_labels.count(l))
        log_info("loso fold for group %d: training set has no examples of class %d", g, l);

    auto [bundle, weights] = train_fn(train);
    result.fold_groups.push_back(g);
    result.per_fold.push_back(evaluate(test, bundle, weights));
  }

  for (int i = 0; i < 10; ++i) {
    double sum = 0.0;
    for (const RatioTable& t : result.per_fold) sum += t.acc[i];
    result.mean.acc[i] = sum / static_cast<double>(result.per_fold.size());
  }
  return result;
}

void write_ratio_csv(const std::string& path, const RatioTable& table) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_ratio_csv: cannot open " + path);
  out << "ratio,accuracy\n";
  char line[64];
  for (int i = 1; i <= 10; ++i) {
    std::snprintf(line, sizeof(line), "%.1f,%.17g\n", i / 10.0, table.acc[i - 1]);
    out << line;
  }
  if (!out) throw std::runtime_error("write_ratio_csv: write failed for " + path);
}

}  // namespace ip
