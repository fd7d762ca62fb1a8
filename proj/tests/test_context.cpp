#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "ip/context.hpp"
#include "ip/numerics.hpp"

using namespace ip;
namespace fs = std::filesystem;

namespace {

Image random_image(int w, int h, Rng& rng) {
  Image img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const float v = static_cast<float>(rng.next_int(256));
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = v;
    }
  return img;
}

// Independent SAD search used as the oracle for block_matching_flow.
// Same contract (clamped sampling, magnitude/dx/dy tie rule), separate code.
void naive_best(const Image& a, const Image& b, int bx, int by, int x1, int y1, int search,
                int& out_dx, int& out_dy) {
  double best = 1e300;
  out_dx = 0;
  out_dy = 0;
  for (int dy = -search; dy <= search; ++dy)
    for (int dx = -search; dx <= search; ++dx) {
      double sad = 0.0;
      for (int y = by; y < y1; ++y)
        for (int x = bx; x < x1; ++x)
          for (int c = 0; c < 3; ++c) {
            const int sx = std::clamp(x + dx, 0, b.width - 1);
            const int sy = std::clamp(y + dy, 0, b.height - 1);
            sad += std::fabs(a.at(x, y, c) - b.at(sx, sy, c));
          }
      const bool better =
          sad < best ||
          (sad == best &&
           (dx * dx + dy * dy < out_dx * out_dx + out_dy * out_dy ||
            (dx * dx + dy * dy == out_dx * out_dx + out_dy * out_dy &&
             (dx < out_dx || (dx == out_dx && dy < out_dy)))));
      if (better) {
        best = sad;
        out_dx = dx;
        out_dy = dy;
      }
    }
}

}  // namespace

TEST_CASE("context region boxes for a two-actor frame") {
  const BoundingBox a{10, 10, 30, 50};
  const BoundingBox b{60, 10, 80, 50};
  const auto boxes = context_region_boxes(a, b, 100, 100);
  CHECK(boxes[kGlobal] == BoundingBox{10, 10, 80, 50});
  CHECK(boxes[kLeftWhole] == a);
  CHECK(boxes[kRightWhole] == b);
  CHECK(boxes[kLeftUpper] == BoundingBox{10, 10, 30, 30});
  CHECK(boxes[kLeftLower] == BoundingBox{10, 30, 30, 50});
  CHECK(boxes[kRightUpper] == BoundingBox{60, 10, 80, 30});
  CHECK(boxes[kRightLower] == BoundingBox{60, 30, 80, 50});

  // Argument order must not matter: left is decided by x_min.
  const auto swapped = context_region_boxes(b, a, 100, 100);
  for (int i = 0; i < kContextSteps; ++i) CHECK(boxes[i] == swapped[i]);
}

TEST_CASE("context region boxes with unequal heights and odd splits") {
  const BoundingBox a{5, 3, 20, 10};   // height 7 -> halves 3 and 4
  const BoundingBox b{40, 0, 50, 40};  // height 40 -> halves 20/20
  const auto boxes = context_region_boxes(a, b, 64, 48);
  CHECK(boxes[kGlobal] == BoundingBox{5, 0, 50, 40});
  CHECK(boxes[kLeftUpper] == BoundingBox{5, 3, 20, 6});
  CHECK(boxes[kLeftLower] == BoundingBox{5, 6, 20, 10});
  CHECK(boxes[kRightUpper] == BoundingBox{40, 0, 50, 20});
}

TEST_CASE("context region boxes reject degenerate halves and bad boxes") {
  const BoundingBox ok{0, 0, 10, 20};
  CHECK_THROWS(context_region_boxes(ok, BoundingBox{20, 0, 30, 3}, 64, 48));   // height 3
  CHECK_THROWS(context_region_boxes(ok, BoundingBox{20, 0, 30, 2}, 64, 48));   // height 2
  CHECK_THROWS(context_region_boxes(ok, BoundingBox{20, 0, 30, 60}, 64, 48));  // outside
  CHECK_THROWS(context_region_boxes(ok, BoundingBox{20, 10, 30, 10}, 64, 48));  // empty
  CHECK_NOTHROW(context_region_boxes(ok, BoundingBox{20, 0, 30, 4}, 64, 48));
}

TEST_CASE("crop copies the right pixels") {
  Image img(6, 5);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 6; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<float>(10 * y + x + c * 100);
  const Image out = crop(img, BoundingBox{2, 1, 5, 4});
  CHECK(out.width == 3);
  CHECK(out.height == 3);
  CHECK(out.at(0, 0, 0) == 12.0f);
  CHECK(out.at(2, 2, 1) == 134.0f);
  CHECK_THROWS(crop(img, BoundingBox{2, 1, 7, 4}));
}

TEST_CASE("encode_flow maps component extremes to 0 and 255") {
  FlowField flow(3, 1);
  flow.dx(0, 0) = -1.0f;
  flow.dx(1, 0) = 0.0f;
  flow.dx(2, 0) = 1.0f;
  // dy stays 0 everywhere: constant component.
  const FlowImage img = encode_flow(flow);
  CHECK(img.at(0, 0, 0) == doctest::Approx(0.0f));
  CHECK(img.at(1, 0, 0) == doctest::Approx(127.5f));
  CHECK(img.at(2, 0, 0) == doctest::Approx(255.0f));
  for (int x = 0; x < 3; ++x) {
    CHECK(img.at(x, 0, 1) == 128.0f);  // constant -> midpoint
    CHECK(img.at(x, 0, 2) == 0.0f);    // unused channel pinned to zero
  }
}

TEST_CASE("block matching returns zero flow for identical frames") {
  Rng rng(21);
  const Image a = random_image(32, 24, rng);
  const FlowField flow = block_matching_flow(a, a, 8, 4);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 32; ++x) {
      CHECK(flow.dx(x, y) == 0.0f);
      CHECK(flow.dy(x, y) == 0.0f);
    }
}

TEST_CASE("block matching recovers a rigid shift") {
  Rng rng(22);
  const Image a = random_image(40, 32, rng);
  Image b(40, 32);
  // Content of a moves right 2, down 1.
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 40; ++x)
      for (int c = 0; c < 3; ++c)
        b.at(x, y, c) = a.at(std::clamp(x - 2, 0, 39), std::clamp(y - 1, 0, 31), c);
  const FlowField flow = block_matching_flow(a, b, 8, 4);
  // Interior blocks must see exactly (2, 1).
  for (int y = 8; y < 24; ++y)
    for (int x = 8; x < 32; ++x) {
      CHECK(flow.dx(x, y) == 2.0f);
      CHECK(flow.dy(x, y) == 1.0f);
    }
}

TEST_CASE("block matching agrees with an independent SAD search") {
  Rng rng(23);
  const Image a = random_image(20, 12, rng);
  const Image b = random_image(20, 12, rng);
  const int block = 5, search = 3;  // 20/5, 12/5 -> truncated edge blocks too
  const FlowField flow = block_matching_flow(a, b, block, search);
  for (int by = 0; by < 12; by += block)
    for (int bx = 0; bx < 20; bx += block) {
      int dx = 0, dy = 0;
      naive_best(a, b, bx, by, std::min(bx + block, 20), std::min(by + block, 12), search,
                 dx, dy);
      CHECK(flow.dx(bx, by) == static_cast<float>(dx));
      CHECK(flow.dy(bx, by) == static_cast<float>(dy));
      // Every pixel of the block carries the block's displacement.
      CHECK(flow.dx(std::min(bx + block, 20) - 1, std::min(by + block, 12) - 1) ==
            static_cast<float>(dx));
    }
}

TEST_CASE("block matching validates arguments") {
  Image a(16, 16), b(16, 8);
  CHECK_THROWS(block_matching_flow(a, b, 8, 4));
  Image b2(16, 16);
  CHECK_THROWS(block_matching_flow(a, b2, 3, 4));
  CHECK_THROWS(block_matching_flow(a, b2, 8, 0));
}

TEST_CASE("grid extractor on a uniform image: means only") {
  GridFeatureExtractor ex(2, 4);
  CHECK(ex.dim() == 2 * 2 * (3 + 4));
  Image img(10, 10, 100.0f);
  const FeatureVector f = ex.extract(img);
  REQUIRE(static_cast<int>(f.size()) == ex.dim());
  for (int cell = 0; cell < 4; ++cell) {
    for (int c = 0; c < 3; ++c)
      CHECK(f[cell * 7 + c] == doctest::Approx(100.0 / 255.0).epsilon(1e-12));
    for (int bin = 0; bin < 4; ++bin) CHECK(f[cell * 7 + 3 + bin] == 0.0);
  }
}

TEST_CASE("grid extractor on a vertical step edge: hand-computed histogram") {
  // 8x8, left half 0, right half 255, one cell, 8 bins.
  GridFeatureExtractor ex(1, 8);
  Image img(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 4; x < 8; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = 255.0f;
  const FeatureVector f = ex.extract(img);
  REQUIRE(f.size() == 11);
  for (int c = 0; c < 3; ++c) CHECK(f[c] == doctest::Approx(0.5).epsilon(1e-12));
  // Interior columns x = 3, 4 see gx = 127.5, gy = 0 -> angle 0 -> bin 4.
  // 12 pixels, each contributing (127.5 / 255) / 64.
  for (int bin = 0; bin < 8; ++bin) {
    if (bin == 4)
      CHECK(f[3 + bin] == doctest::Approx(0.09375).epsilon(1e-12));
    else
      CHECK(f[3 + bin] == 0.0);
  }
}

TEST_CASE("grid extractor handles regions smaller than the grid") {
  GridFeatureExtractor ex(4, 8);
  Image img(2, 2, 50.0f);  // most cells empty
  const FeatureVector f = ex.extract(img);
  REQUIRE(static_cast<int>(f.size()) == ex.dim());
  for (double v : f) CHECK(std::isfinite(v));
}

TEST_CASE("extractor construction validates arguments") {
  CHECK_THROWS(GridFeatureExtractor(0, 8));
  CHECK_THROWS(GridFeatureExtractor(4, 0));
}

namespace {

VideoRecord tiny_record(const std::string& id, int label, int group, int frames, double base) {
  VideoRecord rec;
  rec.id = id;
  rec.label = label;
  rec.group = group;
  for (int t = 0; t < frames; ++t) {
    ContextSequence seq;
    for (int r = 0; r < kContextSteps; ++r)
      seq.regions[r] = {base + t + 0.125 * r, base - 0.5 * r};
    rec.context_seq.push_back(seq);
    if (t > 0) {
      rec.flow_context_seq.push_back(seq);
      rec.flow_feats.push_back({base * 0.25 + t, 1.0 / (t + 1)});
    }
  }
  return rec;
}

}  // namespace

TEST_CASE("feature file round trip is exact") {
  const fs::path path = fs::temp_directory_path() / "ip_test_features.jsonl";
  std::vector<VideoRecord> records = {tiny_record("a", 1, 1, 3, 0.1),
                                      tiny_record("b", 2, 2, 5, -7.25)};
  save_feature_file(path.string(), records);
  const std::vector<VideoRecord> loaded = load_feature_file(path.string());
  REQUIRE(loaded.size() == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK(loaded[i].id == records[i].id);
    CHECK(loaded[i].label == records[i].label);
    CHECK(loaded[i].group == records[i].group);
    REQUIRE(loaded[i].context_seq.size() == records[i].context_seq.size());
    for (std::size_t t = 0; t < records[i].context_seq.size(); ++t)
      for (int r = 0; r < kContextSteps; ++r)
        CHECK(loaded[i].context_seq[t].regions[r] == records[i].context_seq[t].regions[r]);
    CHECK(loaded[i].flow_feats == records[i].flow_feats);
  }
  fs::remove(path);
}

TEST_CASE("feature file loader reports the offending record") {
  const fs::path path = fs::temp_directory_path() / "ip_test_bad.jsonl";
  {
    std::ofstream out(path);
    out << "{\"id\":\"x\"}\n";
  }
  CHECK_THROWS_WITH_AS(load_feature_file(path.string()),
                       doctest::Contains("record 0"), std::exception);
  fs::remove(path);
  CHECK_THROWS(load_feature_file((fs::temp_directory_path() / "ip_no_such_file").string()));
}

TEST_CASE("validate_video_record rejects inconsistent streams") {
  VideoRecord rec = tiny_record("v", 1, 1, 3, 0.0);
  CHECK_NOTHROW(validate_video_record(rec, 0));
  rec.flow_feats.pop_back();
  CHECK_THROWS(validate_video_record(rec, 0));

  VideoRecord rec2 = tiny_record("v", 0, 1, 3, 0.0);
  CHECK_THROWS(validate_video_record(rec2, 0));

  VideoRecord rec3 = tiny_record("v", 1, 1, 3, 0.0);
  rec3.flow_feats[0] = {1.0, 2.0, 3.0};  // wrong dimension
  CHECK_THROWS(validate_video_record(rec3, 0));
}

TEST_CASE("featurize_video wiring: stream sizes and flow source") {
  RawVideo raw;
  raw.id = "w";
  raw.label = 2;
  raw.group = 1;
  Rng rng(31);
  for (int t = 0; t < 4; ++t) {
    raw.frames.push_back(random_image(48, 40, rng));
    raw.boxes.push_back({BoundingBox{2, 2, 14, 30}, BoundingBox{30, 2, 42, 30}});
  }
  GridFeatureExtractor ex(2, 4);
  const VideoRecord rec = featurize_video(raw, ex, FlowEstimatorConfig{8, 2});
  CHECK(rec.frames() == 4);
  CHECK(rec.flow_context_seq.size() == 3);
  CHECK(rec.flow_feats.size() == 3);
  CHECK(rec.context_seq[0].dim() == ex.dim());
  // The flow feature is the global region of the flow context.
  for (int t = 0; t < 3; ++t)
    CHECK(rec.flow_feats[t] == rec.flow_context_seq[t].regions[kGlobal]);

  // Supplying explicit flows changes the flow-side features.
  RawVideo with_flows = raw;
  for (int t = 0; t < 3; ++t) {
    FlowField f(48, 40);
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 48; ++x) {
        f.dx(x, y) = static_cast<float>((x + t) % 5 - 2);
        f.dy(x, y) = static_cast<float>(y % 3 - 1);
      }
    with_flows.flows.push_back(f);
  }
  const VideoRecord rec2 = featurize_video(with_flows, ex, FlowEstimatorConfig{8, 2});
  CHECK(rec2.flow_feats != rec.flow_feats);
  CHECK(rec2.context_seq[0].regions[kGlobal] == rec.context_seq[0].regions[kGlobal]);

  RawVideo bad = raw;
  bad.boxes.pop_back();
  CHECK_THROWS(featurize_video(bad, ex, FlowEstimatorConfig{8, 2}));
}

TEST_CASE("pnm image round trip") {
  Rng rng(41);
  const Image img = random_image(17, 9, rng);
  const fs::path pgm = fs::temp_directory_path() / "ip_test.pgm";
  save_image_pgm(pgm.string(), img);
  const Image back = load_image_pnm(pgm.string());
  REQUIRE(back.width == 17);
  REQUIRE(back.height == 9);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 17; ++x)
      for (int c = 0; c < 3; ++c) CHECK(back.at(x, y, c) == img.at(x, y, 0));
  fs::remove(pgm);

  const fs::path ppm = fs::temp_directory_path() / "ip_test.ppm";
  Image color(3, 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 3; ++x)
      for (int c = 0; c < 3; ++c) color.at(x, y, c) = static_cast<float>(40 * y + 10 * x + c);
  save_image_ppm(ppm.string(), color);
  const Image cback = load_image_pnm(ppm.string());
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 3; ++x)
      for (int c = 0; c < 3; ++c) CHECK(cback.at(x, y, c) == color.at(x, y, c));
  fs::remove(ppm);
  CHECK_THROWS(load_image_pnm((fs::temp_directory_path() / "ip_missing.pgm").string()));
}

TEST_CASE("context sequence validation") {
  ContextSequence seq;
  for (int r = 0; r < kContextSteps; ++r) seq.regions[r] = {1.0, 2.0};
  CHECK_NOTHROW(validate_context_sequence(seq));
  seq.regions[3] = {1.0};
  CHECK_THROWS(validate_context_sequence(seq));
  seq.regions[3] = {};
  CHECK_THROWS(validate_context_sequence(seq));
}
