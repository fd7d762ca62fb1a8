#include "ip/context.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace ip {

bool operator==(const BoundingBox& a, const BoundingBox& b) {
  return a.x_min == b.x_min && a.y_min == b.y_min && a.x_max == b.x_max && a.y_max == b.y_max;
}

Image::Image(int w, int h, float fill) {
  if (w <= 0 || h <= 0) throw std::invalid_argument("Image: shape must be positive");
  width = w;
  height = h;
  data.assign(static_cast<std::size_t>(w) * h * 3, fill);
}

FlowField::FlowField(int w, int h) {
  if (w <= 0 || h <= 0) throw std::invalid_argument("FlowField: shape must be positive");
  width = w;
  height = h;
  data.assign(static_cast<std::size_t>(w) * h * 2, 0.0f);
}

void validate_context_sequence(const ContextSequence& seq) {
  const std::size_t d = seq.regions[0].size();
  if (d == 0) throw std::invalid_argument("context sequence: empty feature vector");
  for (int r = 1; r < kContextSteps; ++r)
    if (seq.regions[r].size() != d)
      throw std::invalid_argument("context sequence: region " + std::to_string(r) +
                                  " dimension " + std::to_string(seq.regions[r].size()) +
                                  " != " + std::to_string(d));
}

static void check_box_in_frame(const BoundingBox& b, int w, int h, const char* name) {
  if (b.x_min < 0 || b.y_min < 0 || b.x_max > w || b.y_max > h ||
      b.x_min >= b.x_max || b.y_min >= b.y_max)
    throw std::invalid_argument(std::string(name) + " box invalid or outside frame");
}

// Splits a whole-body box at the integer midline.
static std::pair<BoundingBox, BoundingBox> split_halves(const BoundingBox& b) {
  const int mid = b.y_min + b.height() / 2;
  if (mid - b.y_min < 2 || b.y_max - mid < 2)
    throw std::invalid_argument("context regions: degenerate upper/lower half");
  BoundingBox upper{b.x_min, b.y_min, b.x_max, mid};
  BoundingBox lower{b.x_min, mid, b.x_max, b.y_max};
  return {upper, lower};
}

std::array<BoundingBox, kContextSteps> context_region_boxes(const BoundingBox& a,
                                                            const BoundingBox& b,
                                                            int frame_w, int frame_h) {
  check_box_in_frame(a, frame_w, frame_h, "first");
  check_box_in_frame(b, frame_w, frame_h, "second");
  const BoundingBox& left = (b.x_min < a.x_min) ? b : a;
  const BoundingBox& right = (b.x_min < a.x_min) ? a : b;

  BoundingBox global{std::min(left.x_min, right.x_min), std::min(left.y_min, right.y_min),
                     std::max(left.x_max, right.x_max), std::max(left.y_max, right.y_max)};
  auto [lu, ll] = split_halves(left);
  auto [ru, rl] = split_halves(right);
  return {global, left, right, lu, ll, ru, rl};
}

Image crop(const Image& img, const BoundingBox& box) {
  check_box_in_frame(box, img.width, img.height, "crop");
  Image out(box.width(), box.height());
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(x, y, c) = img.at(box.x_min + x, box.y_min + y, c);
  return out;
}

std::array<Image, kContextSteps> build_context_regions(const BoundingBox& a,
                                                       const BoundingBox& b,
                                                       const FrameImage& frame) {
  const auto boxes = context_region_boxes(a, b, frame.width, frame.height);
  std::array<Image, kContextSteps> out;
  for (int i = 0; i < kContextSteps; ++i) out[i] = crop(frame, boxes[i]);
  return out;
}

FlowImage encode_flow(const FlowField& flow) {
  if (flow.width <= 0 || flow.height <= 0)
    throw std::invalid_argument("encode_flow: empty flow field");
  float lo[2] = {std::numeric_limits<float>::max(), std::numeric_limits<float>::max()};
  float hi[2] = {std::numeric_limits<float>::lowest(), std::numeric_limits<float>::lowest()};
  for (std::size_t i = 0; i < flow.data.size(); i += 2) {
    for (int c = 0; c < 2; ++c) {
      const float v = flow.data[i + c];
      if (!std::isfinite(v)) throw std::invalid_argument("encode_flow: non-finite component");
      lo[c] = std::min(lo[c], v);
      hi[c] = std::max(hi[c], v);
    }
  }
  FlowImage img(flow.width, flow.height);
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) {
      const float comp[2] = {flow.dx(x, y), flow.dy(x, y)};
      for (int c = 0; c < 2; ++c) {
        img.at(x, y, c) = (hi[c] > lo[c])
                              ? (comp[c] - lo[c]) * 255.0f / (hi[c] - lo[c])
                              : 128.0f;
      }
      img.at(x, y, 2) = 0.0f;
    }
  }
  return img;
}

static float sample_clamped(const Image& img, int x, int y, int c) {
  x = std::clamp(x, 0, img.width - 1);
  y = std::clamp(y, 0, img.height - 1);
  return img.at(x, y, c);
}

FlowField block_matching_flow(const FrameImage& a, const FrameImage& b,
                              int block, int search) {
  if (a.width != b.width || a.height != b.height)
    throw std::invalid_argument("block_matching_flow: frame shape mismatch");
  if (block < 4) throw std::invalid_argument("block_matching_flow: block must be >= 4");
  if (search < 1) throw std::invalid_argument("block_matching_flow: search must be >= 1");

  FlowField flow(a.width, a.height);
  for (int by = 0; by < a.height; by += block) {
    const int y1 = std::min(by + block, a.height);
    for (int bx = 0; bx < a.width; bx += block) {
      const int x1 = std::min(bx + block, a.width);

      int best_dx = 0, best_dy = 0;
      double best_sad = std::numeric_limits<double>::max();
      for (int dy = -search; dy <= search; ++dy) {
        for (int dx = -search; dx <= search; ++dx) {
          double sad = 0.0;
          for (int y = by; y < y1; ++y)
            for (int x = bx; x < x1; ++x)
              for (int c = 0; c < 3; ++c)
                sad += std::fabs(static_cast<double>(a.at(x, y, c)) -
                                 static_cast<double>(sample_clamped(b, x + dx, y + dy, c)));
          const int mag = dx * dx + dy * dy;
          const int best_mag = best_dx * best_dx + best_dy * best_dy;
          const bool better =
              sad < best_sad ||
              (sad == best_sad &&
               (mag < best_mag ||
                (mag == best_mag &&
                 (dx < best_dx || (dx == best_dx && dy < best_dy)))));
          if (better) {
            best_sad = sad;
            best_dx = dx;
            best_dy = dy;
          }
        }
      }
      for (int y = by; y < y1; ++y) {
        for (int x = bx; x < x1; ++x) {
          flow.dx(x, y) = static_cast<float>(best_dx);
          flow.dy(x, y) = static_cast<float>(best_dy);
        }
      }
    }
  }
  return flow;
}

GridFeatureExtractor::GridFeatureExtractor(int grid, int bins) : grid_(grid), bins_(bins) {
  if (grid < 1 || bins < 1)
    throw std::invalid_argument("GridFeatureExtractor: grid and bins must be >= 1");
}

FeatureVector GridFeatureExtractor::extract(const Image& region) const {
  if (region.width <= 0 || region.height <= 0 || region.data.empty())
    throw std::invalid_argument("extract: empty region");
  const int g = grid_;
  const int stride = 3 + bins_;
  FeatureVector feat(static_cast<std::size_t>(dim()), 0.0);

  // Cell pixel counts; cells can be empty for regions smaller than the grid.
  std::vector<double> cell_px(static_cast<std::size_t>(g) * g, 0.0);
  auto cell_of = [&](int x, int y) {
    const int cx = std::min(x * g / region.width, g - 1);
    const int cy = std::min(y * g / region.height, g - 1);
    return cy * g + cx;
  };

  for (int y = 0; y < region.height; ++y)
    for (int x = 0; x < region.width; ++x) {
      const int cell = cell_of(x, y);
      cell_px[cell] += 1.0;
      for (int c = 0; c < 3; ++c)
        feat[static_cast<std::size_t>(cell) * stride + c] += region.at(x, y, c) / 255.0;
    }
  for (int cell = 0; cell < g * g; ++cell)
    if (cell_px[cell] > 0.0)
      for (int c = 0; c < 3; ++c) feat[static_cast<std::size_t>(cell) * stride + c] /= cell_px[cell];

  // Gray-level gradients on interior pixels, central differences.
  auto gray = [&](int x, int y) {
    return (region.at(x, y, 0) + region.at(x, y, 1) + region.at(x, y, 2)) / 3.0;
  };
  for (int y = 1; y + 1 < region.height; ++y)
    for (int x = 1; x + 1 < region.width; ++x) {
      const double gx = (gray(x + 1, y) - gray(x - 1, y)) * 0.5;
      const double gy = (gray(x, y + 1) - gray(x, y - 1)) * 0.5;
      const double mag = std::sqrt(gx * gx + gy * gy);
      if (mag <= 0.0) continue;
      const double theta = std::atan2(gy, gx);  // [-pi, pi]
      int bin = static_cast<int>((theta + M_PI) / (2.0 * M_PI) * bins_);
      bin = std::clamp(bin, 0, bins_ - 1);
      const int cell = cell_of(x, y);
      feat[static_cast<std::size_t>(cell) * stride + 3 + bin] += mag / 255.0 / cell_px[cell];
    }
  return feat;
}

FeatureVector extract_features(const Image& region, const FeatureExtractor& extractor) {
  FeatureVector f = extractor.extract(region);
  if (static_cast<int>(f.size()) != extractor.dim())
    throw std::runtime_error("extract_features: extractor violated its dimension contract");
  return f;
}

void validate_video_record(const VideoRecord& rec, int index) {
  const std::string where = "record " + std::to_string(index) + " (" + rec.id + "): ";
  if (rec.id.empty()) throw std::invalid_argument(where + "empty id");
  if (rec.label < 1) throw std::invalid_argument(where + "label must be >= 1");
  if (rec.context_seq.empty()) throw std::invalid_argument(where + "no frames");
  const std::size_t n = rec.context_seq.size();
  if (rec.flow_context_seq.size() != n - 1 || rec.flow_feats.size() != n - 1)
    throw std::invalid_argument(where + "flow stream length != frames - 1");
  const std::size_t d = rec.context_seq[0].regions[0].size();
  for (const auto& seq : rec.context_seq) {
    validate_context_sequence(seq);
    if (seq.regions[0].size() != d) throw std::invalid_argument(where + "dimension mismatch");
  }
  for (const auto& seq : rec.flow_context_seq) {
    validate_context_sequence(seq);
    if (seq.regions[0].size() != d) throw std::invalid_argument(where + "dimension mismatch");
  }
  for (const auto& f : rec.flow_feats)
    if (f.size() != d) throw std::invalid_argument(where + "dimension mismatch");
}

namespace {

nlohmann::json seq_to_json(const ContextSequence& seq) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : seq.regions) arr.push_back(r);
  return arr;
}

ContextSequence seq_from_json(const nlohmann::json& arr, const std::string& where) {
  if (!arr.is_array() || arr.size() != kContextSteps)
    throw std::invalid_argument(where + "context entry must have exactly 7 regions");
  ContextSequence seq;
  for (int r = 0; r < kContextSteps; ++r)
    seq.regions[r] = arr[r].get<FeatureVector>();
  validate_context_sequence(seq);
  return seq;
}

}  // namespace

std::vector<VideoRecord> load_feature_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_feature_file: cannot open " + path);
  std::vector<VideoRecord> records;
  std::string line;
  int index = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::string where = "record " + std::to_string(index) + ": ";
    VideoRecord rec;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      rec.id = j.at("id").get<std::string>();
      rec.label = j.at("label").get<int>();
      rec.group = j.at("group").get<int>();
      for (const auto& entry : j.at("context_seq"))
        rec.context_seq.push_back(seq_from_json(entry, where));
      for (const auto& entry : j.at("flow_context_seq"))
        rec.flow_context_seq.push_back(seq_from_json(entry, where));
      for (const auto& entry : j.at("flow_feats"))
        rec.flow_feats.push_back(entry.get<FeatureVector>());
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("load_feature_file: " + where + e.what());
    }
    validate_video_record(rec, index);
    records.push_back(std::move(rec));
    ++index;
  }
  return records;
}

void save_feature_file(const std::string& path, const std::vector<VideoRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_feature_file: cannot open " + path);
  int index = 0;
  for (const auto& rec : records) {
    validate_video_record(rec, index++);
    nlohmann::json j;
    j["id"] = rec.id;
    j["label"] = rec.label;
    j["group"] = rec.group;
    nlohmann::json ctx = nlohmann::json::array();
    for (const auto& seq : rec.context_seq) ctx.push_back(seq_to_json(seq));
    j["context_seq"] = std::move(ctx);
    nlohmann::json fctx = nlohmann::json::array();
    for (const auto& seq : rec.flow_context_seq) fctx.push_back(seq_to_json(seq));
    j["flow_context_seq"] = std::move(fctx);
    j["flow_feats"] = rec.flow_feats;
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("save_feature_file: write failed for " + path);
}

VideoRecord featurize_video(const RawVideo& raw, const FeatureExtractor& extractor,
                            const FlowEstimatorConfig& flow_cfg) {
  if (raw.frames.empty()) throw std::invalid_argument("featurize_video: no frames");
  if (raw.boxes.size() != raw.frames.size())
    throw std::invalid_argument("featurize_video: boxes/frames count mismatch");
  if (!raw.flows.empty() && raw.flows.size() != raw.frames.size() - 1)
    throw std::invalid_argument("featurize_video: flow count must be frames - 1");

  VideoRecord rec;
  rec.id = raw.id;
  rec.label = raw.label;
  rec.group = raw.group;

  const std::size_t n = raw.frames.size();
  for (std::size_t t = 0; t < n; ++t) {
    const auto crops = build_context_regions(raw.boxes[t][0], raw.boxes[t][1], raw.frames[t]);
    ContextSequence seq;
    for (int r = 0; r < kContextSteps; ++r)
      seq.regions[r] = extract_features(crops[r], extractor);
    rec.context_seq.push_back(std::move(seq));
  }
  for (std::size_t t = 0; t + 1 < n; ++t) {
    const FlowField flow = raw.flows.empty()
                               ? block_matching_flow(raw.frames[t], raw.frames[t + 1],
                                                     flow_cfg.block, flow_cfg.search)
                               : raw.flows[t];
    const FlowImage img = encode_flow(flow);
    // Regions of the t-th flow image come from the boxes of frame t.
    const auto crops = build_context_regions(raw.boxes[t][0], raw.boxes[t][1], img);
    ContextSequence seq;
    for (int r = 0; r < kContextSteps; ++r)
      seq.regions[r] = extract_features(crops[r], extractor);
    rec.flow_feats.push_back(seq.regions[kGlobal]);
    rec.flow_context_seq.push_back(std::move(seq));
  }
  validate_video_record(rec, 0);
  return rec;
}

}  // namespace ip
