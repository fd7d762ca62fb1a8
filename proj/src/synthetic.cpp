#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include "ip/eval.hpp"

namespace ip {

namespace {

constexpr int kActorW = 12;
constexpr int kActorH = 24;
constexpr int kArmSize = 6;
constexpr int kLeadIn = 2;  // transitions before any scripted motion

Rng make_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return Rng(seed ^ (a * 0x9E3779B97F4A7C15ULL) ^ (b * 0xBF58476D1CE4E5B9ULL));
}

std::vector<float> make_texture(int w, int h, float lo, float hi, Rng& rng) {
  std::vector<float> tex(static_cast<std::size_t>(w) * h);
  for (float& v : tex)
    v = static_cast<float>(static_cast<int>(rng.uniform(lo, hi)));
  return tex;
}

struct ActorTrack {
  std::vector<int> x, y;        // body origin per frame
  bool has_arm = false;
  int arm_y = 0;                // arm origin relative to body
  std::vector<int> arm_x;       // per frame, relative to body
};

struct Script {
  ActorTrack left, right;
};

// Oscillation offsets with period 4; constant during the lead-in.
int osc_offset(int t, int phase) {
  static const int seq[4] = {2, 4, 6, 4};
  const int idx = phase + std::max(0, t - kLeadIn);
  return seq[idx % 4];
}

Script build_script(int label, int n, int frame_w, Rng& rng) {
  Script s;
  const int jlx = rng.next_int(5) - 2;
  const int jly = rng.next_int(5) - 2;
  const int jrx = rng.next_int(5) - 2;
  const int jry = rng.next_int(5) - 2;
  const int phase = rng.next_int(4);

  int lx = 10 + jlx, ly = 12 + jly;
  int rx = frame_w - kActorW - 10 + jrx, ry = 12 + jry;
  const int l_min = 0;
  const int r_max = frame_w - kActorW - 6;  // depart's right actor stops early
  bool contacted = false;

  s.left.x.reserve(n);
  for (int t = 0; t < n; ++t) {
    s.left.x.push_back(lx);
    s.left.y.push_back(ly);
    s.right.x.push_back(rx);
    s.right.y.push_back(ry);

    if (t + 1 >= n) break;
    const bool moving = t >= kLeadIn;
    const int gap = rx - (lx + kActorW);
    switch (label) {
      case 1:  // approach, left faster than right
        if (moving && gap > 4) {
          lx += 2;
          rx -= 1;
        }
        break;
      case 2:  // depart, left faster and with more room
        if (moving) {
          lx = std::max(l_min, lx - 2);
          rx = std::min(r_max, rx + 1);
        }
        break;
      case 7: {  // joint sway
        if (moving) {
          const int step = ((phase + t - kLeadIn) % 4 < 2) ? 1 : -1;
          lx += step;
          rx += step;
        }
        break;
      }
      case 8: {  // still, then contact, then right pushed back
        const int start = std::max(kLeadIn, (n * 2) / 5);
        if (t >= start) {
          if (gap <= 2) contacted = true;
          if (!contacted) {
            lx += 2;
            rx = std::max(lx + kActorW + 2, rx - 2);
          } else {
            rx = std::min(frame_w - kActorW, rx + 2);
          }
        }
        break;
      }
      default:
        break;  // oscillation classes keep their bodies still
    }
  }

  if (label >= 3 && label <= 6) {
    ActorTrack& actor = (label <= 4) ? s.left : s.right;
    actor.has_arm = true;
    actor.arm_y = (label % 2 == 1) ? 3 : kActorH / 2 + 3;  // upper or lower half
    actor.arm_x.reserve(n);
    for (int t = 0; t < n; ++t) actor.arm_x.push_back(osc_offset(t, phase));
  }
  return s;
}

struct Appearance {
  std::vector<float> background;  // frame-sized
  std::vector<float> left_tex, right_tex, arm_tex;
};

FrameImage render(const Script& s, const Appearance& ap, int t, int w, int h) {
  FrameImage frame(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const float v = ap.background[static_cast<std::size_t>(y) * w + x];
      for (int c = 0; c < 3; ++c) frame.at(x, y, c) = v;
    }

  auto draw = [&](const ActorTrack& actor, const std::vector<float>& tex) {
    const int ax = actor.x[t], ay = actor.y[t];
    for (int py = 0; py < kActorH; ++py)
      for (int px = 0; px < kActorW; ++px) {
        float v = tex[static_cast<std::size_t>(py) * kActorW + px];
        if (actor.has_arm) {
          const int rx = px - actor.arm_x[t], ry = py - actor.arm_y;
          if (rx >= 0 && rx < kArmSize && ry >= 0 && ry < kArmSize)
            v = ap.arm_tex[static_cast<std::size_t>(ry) * kArmSize + rx];
        }
        const int gx = ax + px, gy = ay + py;
        for (int c = 0; c < 3; ++c) frame.at(gx, gy, c) = v;
      }
  };
  draw(s.left, ap.left_tex);
  draw(s.right, ap.right_tex);
  return frame;
}

// Exact flow for the scripted motion: body displacement over the body box,
// arm displacement over the arm box.
FlowField script_flow(const Script& s, int t, int w, int h) {
  FlowField flow(w, h);
  auto fill = [&](int x0, int y0, int bw, int bh, int dx, int dy) {
    for (int y = y0; y < y0 + bh; ++y)
      for (int x = x0; x < x0 + bw; ++x) {
        flow.dx(x, y) = static_cast<float>(dx);
        flow.dy(x, y) = static_cast<float>(dy);
      }
  };
  for (const ActorTrack* actor : {&s.left, &s.right}) {
    const int dx = actor->x[t + 1] - actor->x[t];
    const int dy = actor->y[t + 1] - actor->y[t];
    fill(actor->x[t], actor->y[t], kActorW, kActorH, dx, dy);
    if (actor->has_arm) {
      const int ax = actor->x[t] + actor->arm_x[t];
      const int ay = actor->y[t] + actor->arm_y;
      const int adx = (actor->x[t + 1] + actor->arm_x[t + 1]) - (actor->x[t] + actor->arm_x[t]);
      fill(ax, ay, kArmSize, kArmSize, adx, dy);
    }
  }
  return flow;
}

}  // namespace

std::vector<RawVideo> generate_synthetic(const SynthConfig& cfg) {
  if (cfg.num_classes < 2 || cfg.num_classes > 8)
    throw std::invalid_argument("generate_synthetic: num_classes must be in 2..8");
  if (cfg.videos_per_class < 1 || cfg.frames_per_video < 4 || cfg.num_groups < 1)
    throw std::invalid_argument("generate_synthetic: bad counts");
  if (cfg.width < 48 || cfg.height < 40)
    throw std::invalid_argument("generate_synthetic: frame must be at least 48x40");

  std::vector<RawVideo> videos;
  for (int label = 1; label <= cfg.num_classes; ++label) {
    for (int v = 0; v < cfg.videos_per_class; ++v) {
      const int group = v % cfg.num_groups + 1;

      Rng vid_rng = make_rng(cfg.seed, static_cast<std::uint64_t>(label),
                             static_cast<std::uint64_t>(v) + 1000);
      Rng left_rng = make_rng(cfg.seed, 7000 + static_cast<std::uint64_t>(group), 1);
      Rng right_rng = make_rng(cfg.seed, 7000 + static_cast<std::uint64_t>(group), 2);
      Rng arm_rng = make_rng(cfg.seed, 9000 + static_cast<std::uint64_t>(group), 3);

      Appearance ap;
      ap.background = make_texture(cfg.width, cfg.height, 40.0f, 90.0f, vid_rng);
      ap.left_tex = make_texture(kActorW, kActorH, 120.0f, 230.0f, left_rng);
      ap.right_tex = make_texture(kActorW, kActorH, 120.0f, 230.0f, right_rng);
      ap.arm_tex = make_texture(kArmSize, kArmSize, 0.0f, 60.0f, arm_rng);

      const Script script = build_script(label, cfg.frames_per_video, cfg.width, vid_rng);

      RawVideo raw;
      char id[32];
      std::snprintf(id, sizeof(id), "c%d_v%02d", label, v);
      raw.id = id;
      raw.label = label;
      raw.group = group;
      for (int t = 0; t < cfg.frames_per_video; ++t) {
        raw.frames.push_back(render(script, ap, t, cfg.width, cfg.height));
        raw.boxes.push_back(
            {BoundingBox{script.left.x[t], script.left.y[t], script.left.x[t] + kActorW,
                         script.left.y[t] + kActorH},
             BoundingBox{script.right.x[t], script.right.y[t], script.right.x[t] + kActorW,
                         script.right.y[t] + kActorH}});
        if (t + 1 < cfg.frames_per_video)
          raw.flows.push_back(script_flow(script, t, cfg.width, cfg.height));
      }
      videos.push_back(std::move(raw));
    }
  }
  return videos;
}

}  // namespace ip
