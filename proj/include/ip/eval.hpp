#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ip/context.hpp"
#include "ip/fusion.hpp"
#include "ip/models.hpp"

namespace ip {

// Accuracy per observation ratio i/10, i = 1..10.
struct RatioTable {
  std::array<double, 10> acc{};
};

// Number of observed frames at ratio i/10: round-half-up of n*i/10, at
// least 1.
int slice_length(int n, int ratio_index);

// Truncates a record to its first slice_length(n, i) frames; flow streams
// shrink with it.
VideoRecord slice_observation(const VideoRecord& rec, int ratio_index);

RatioTable evaluate(const std::vector<VideoRecord>& test, const ModelBundle& bundle,
                    const FusionWeights& weights);

using TrainFn =
    std::function<std::pair<ModelBundle, FusionWeights>(const std::vector<VideoRecord>&)>;

struct LosoResult {
  RatioTable mean;
  std::vector<int> fold_groups;        // ascending group ids
  std::vector<RatioTable> per_fold;    // aligned with fold_groups
};

// Leave-one-group-out cross-validation; needs at least two groups. A fold
// whose training half misses some class only logs a warning.
LosoResult loso_cv(const std::vector<VideoRecord>& data, const TrainFn& train_fn);

void write_ratio_csv(const std::string& path, const RatioTable& table);

// Synthetic two-actor dataset. Class scripts (1-based label order):
//   1 approach, 2 depart, 3 left-upper oscillation, 4 left-lower
//   oscillation, 5 right-upper oscillation, 6 right-lower oscillation,
//   7 joint sway, 8 stillness then contact and push-back.
// Groups control actor appearance; jitter is seeded. Flow fields are
// exact: they mirror the scripted motion.
struct SynthConfig {
  int num_classes = 4;      // <= 8
  int videos_per_class = 20;
  int frames_per_video = 24;
  int num_groups = 4;
  int width = 64;
  int height = 48;
  std::uint64_t seed = 0;
};

std::vector<RawVideo> generate_synthetic(const SynthConfig& cfg);

}  // namespace ip
