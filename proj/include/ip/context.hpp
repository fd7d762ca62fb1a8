#pragma once

#include <array>
#include <string>
#include <vector>

#include "ip/numerics.hpp"

namespace ip {

// Axis-aligned pixel box, half-open on both axes: x in [x_min, x_max),
// y in [y_min, y_max).
struct BoundingBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  int width() const { return x_max - x_min; }
  int height() const { return y_max - y_min; }
};

bool operator==(const BoundingBox& a, const BoundingBox& b);

// Interleaved 3-channel image, values in [0, 255]. Flow images use the
// same layout with channel 2 pinned to zero.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // width * height * 3

  Image() = default;
  Image(int w, int h, float fill = 0.0f);

  float& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  float at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
};

using FrameImage = Image;
using FlowImage = Image;

// Per-pixel displacement field, components (dx, dy).
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // width * height * 2

  FlowField() = default;
  FlowField(int w, int h);

  float& dx(int x, int y) { return data[(static_cast<std::size_t>(y) * width + x) * 2]; }
  float dx(int x, int y) const { return data[(static_cast<std::size_t>(y) * width + x) * 2]; }
  float& dy(int x, int y) { return data[(static_cast<std::size_t>(y) * width + x) * 2 + 1]; }
  float dy(int x, int y) const { return data[(static_cast<std::size_t>(y) * width + x) * 2 + 1]; }
};

inline constexpr int kContextSteps = 7;

// Fixed region order shared by every context sequence.
enum ContextRegion {
  kGlobal = 0,
  kLeftWhole = 1,
  kRightWhole = 2,
  kLeftUpper = 3,
  kLeftLower = 4,
  kRightUpper = 5,
  kRightLower = 6,
};

using FeatureVector = Vector;

// Region features in the order: global, left whole, right whole, left
// upper, left lower, right upper, right lower.
struct ContextSequence {
  std::array<FeatureVector, kContextSteps> regions;

  int dim() const { return static_cast<int>(regions[0].size()); }
};

// Throws unless all 7 regions are non-empty and share one dimension.
void validate_context_sequence(const ContextSequence& seq);

// Region boxes for a two-actor frame, same order as ContextSequence.
// "left" is the box with smaller x_min; arguments are re-sorted if needed.
// Upper/lower halves split at the integer midline; halves shorter than
// 2 px are rejected.
std::array<BoundingBox, kContextSteps> context_region_boxes(const BoundingBox& a,
                                                            const BoundingBox& b,
                                                            int frame_w, int frame_h);

Image crop(const Image& img, const BoundingBox& box);

std::array<Image, kContextSteps> build_context_regions(const BoundingBox& a,
                                                       const BoundingBox& b,
                                                       const FrameImage& frame);

// Maps each flow component linearly to [0, 255] using the per-image
// min/max of that component; a constant component maps to 128. Channel 2
// is always zero.
FlowImage encode_flow(const FlowField& flow);

// Exhaustive block matching under sum-of-absolute-differences. Frames must
// share shape; block >= 4, search >= 1. Ties prefer the smaller squared
// displacement, then smaller dx, then smaller dy. Samples outside frame b
// are clamped to the border.
FlowField block_matching_flow(const FrameImage& a, const FrameImage& b,
                              int block, int search);

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual int dim() const = 0;
  virtual FeatureVector extract(const Image& region) const = 0;
};

// grid x grid cells; per cell the 3 channel means (scaled to [0,1]) plus a
// magnitude-weighted orientation histogram of gray-level gradients.
// dim = grid^2 * (3 + bins).
class GridFeatureExtractor final : public FeatureExtractor {
 public:
  GridFeatureExtractor(int grid, int bins);
  int dim() const override { return grid_ * grid_ * (3 + bins_); }
  FeatureVector extract(const Image& region) const override;

 private:
  int grid_;
  int bins_;
};

FeatureVector extract_features(const Image& region, const FeatureExtractor& extractor);

// One featurized video. Flow streams have n-1 entries for n frames.
struct VideoRecord {
  std::string id;
  int label = 0;  // 1..m
  int group = 0;
  std::vector<ContextSequence> context_seq;       // per frame
  std::vector<ContextSequence> flow_context_seq;  // per flow image
  std::vector<FeatureVector> flow_feats;          // per flow image

  int frames() const { return static_cast<int>(context_seq.size()); }
};

void validate_video_record(const VideoRecord& rec, int index);

// JSON Lines, one video per line. Round-trips doubles exactly.
std::vector<VideoRecord> load_feature_file(const std::string& path);
void save_feature_file(const std::string& path, const std::vector<VideoRecord>& records);

// Raw material for featurization: frames plus per-frame actor boxes.
// flows may be empty, in which case block matching fills them in.
struct RawVideo {
  std::string id;
  int label = 0;
  int group = 0;
  std::vector<FrameImage> frames;
  std::vector<std::array<BoundingBox, 2>> boxes;  // per frame
  std::vector<FlowField> flows;                   // n-1 entries or empty
};

struct FlowEstimatorConfig {
  int block = 8;
  int search = 4;
};

VideoRecord featurize_video(const RawVideo& raw, const FeatureExtractor& extractor,
                            const FlowEstimatorConfig& flow_cfg);

// Binary PGM (P5) and PPM (P6) files. PGM loads replicate gray into all
// three channels; PGM saves write channel 0.
Image load_image_pnm(const std::string& path);
void save_image_pgm(const std::string& path, const Image& img);
void save_image_ppm(const std::string& path, const Image& img);

}  // namespace ip
