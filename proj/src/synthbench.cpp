#include "refvos/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <stdexcept>

#include "refvos/rng.hpp"

namespace refvos {

const char* to_string(ShapeKind s) {
  switch (s) {
    case ShapeKind::circle: return "circle";
    case ShapeKind::square: return "square";
    case ShapeKind::triangle: return "triangle";
  }
  return "circle";
}

const char* to_string(Direction d) {
  switch (d) {
    case Direction::stationary: return "stationary";
    case Direction::right: return "right";
    case Direction::down_right: return "down-right";
    case Direction::down: return "down";
    case Direction::down_left: return "down-left";
    case Direction::left: return "left";
    case Direction::up_left: return "up-left";
    case Direction::up: return "up";
    case Direction::up_right: return "up-right";
  }
  return "stationary";
}

const char* to_string(FrameSide s) {
  switch (s) {
    case FrameSide::none: return "none";
    case FrameSide::left: return "left";
    case FrameSide::right: return "right";
    case FrameSide::top: return "top";
    case FrameSide::bottom: return "bottom";
  }
  return "none";
}

void GenParams::validate() const {
  if (width < 32 || height < 32)
    throw std::invalid_argument("synthbench: frame size too small to fit objects");
  if (min_frames < 2 || min_frames > max_frames || max_frames > 64)
    throw std::invalid_argument("synthbench: frame count range invalid");
  if (min_objects < 1 || min_objects > max_objects || max_objects > 8)
    throw std::invalid_argument("synthbench: object count range invalid");
  if (distractor_prob < 0.0 || distractor_prob > 1.0)
    throw std::invalid_argument("synthbench: distractor_prob outside [0,1]");
}

std::pair<double, double> Trajectory::center_at(int frame) const {
  if (waypoints.empty()) return {0.0, 0.0};
  if (frame <= waypoints.front().frame) return {waypoints.front().cx, waypoints.front().cy};
  if (frame >= waypoints.back().frame) return {waypoints.back().cx, waypoints.back().cy};
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    if (frame <= waypoints[i].frame) {
      const Waypoint& a = waypoints[i - 1];
      const Waypoint& b = waypoints[i];
      const double t = static_cast<double>(frame - a.frame) / (b.frame - a.frame);
      return {a.cx + t * (b.cx - a.cx), a.cy + t * (b.cy - a.cy)};
    }
  }
  return {waypoints.back().cx, waypoints.back().cy};
}

Direction estimate_direction(const std::vector<std::pair<double, double>>& centers) {
  if (centers.size() < 2)
    throw std::invalid_argument("estimate_direction: need at least 2 visible frames");
  const double dx = centers.back().first - centers.front().first;
  const double dy = centers.back().second - centers.front().second;
  if (std::sqrt(dx * dx + dy * dy) < 3.0) return Direction::stationary;
  const double deg = std::atan2(dy, dx) * 57.29577951308232;
  int k = static_cast<int>(std::ceil((deg + 22.5) / 45.0)) - 1;
  k = ((k % 8) + 8) % 8;
  static constexpr Direction kSectors[8] = {Direction::right,   Direction::down_right,
                                            Direction::down,    Direction::down_left,
                                            Direction::left,    Direction::up_left,
                                            Direction::up,      Direction::up_right};
  return kSectors[k];
}

std::string grid_cell(double x, double y, int width, int height, GridMode mode) {
  if (x < 0.0 || x >= width || y < 0.0 || y >= height)
    throw std::invalid_argument("grid_cell: point outside the frame");
  const int g = mode == GridMode::g3x3 ? 3 : 2;
  auto bin = [g](double v, int extent) {
    // Half-open bins [k*extent/g, (k+1)*extent/g); edges evaluated exactly.
    for (int k = g - 1; k > 0; --k)
      if (v >= static_cast<double>(k) * extent / g) return k;
    return 0;
  };
  const int col = bin(x, width), row = bin(y, height);
  if (mode == GridMode::g3x3) {
    static const char* kRows[3] = {"top", "mid", "bottom"};
    static const char* kCols[3] = {"left", "center", "right"};
    return std::string(kRows[row]) + "-" + kCols[col];
  }
  static const char* kRows2[2] = {"top", "bottom"};
  static const char* kCols2[2] = {"left", "right"};
  return std::string(kRows2[row]) + "-" + kCols2[col];
}

std::string render_expression(const MotionDescriptor& d, const ShapeSpec& object,
                              ExpressionStyle style) {
  const std::string head = "The " + object.color + " " + to_string(object.shape);
  switch (style) {
    case ExpressionStyle::appearance:
      return head;
    case ExpressionStyle::spatial:
      return head + " in the " + d.start_cell;
    case ExpressionStyle::motion: {
      std::string s = head;
      if (d.entry_side != FrameSide::none)
        s += std::string(" appears from the ") + to_string(d.entry_side) + ",";
      if (d.direction == Direction::stationary)
        s += " staying in the " + d.end_cell;
      else
        s += std::string(" moves ") + to_string(d.direction) + " to the " + d.end_cell;
      if (d.exit_side != FrameSide::none) s += ", and disappears";
      return s;
    }
  }
  return head;
}

std::vector<int> merge_short_segments(std::vector<int> segments, int min_frames) {
  while (segments.size() > 1) {
    std::size_t short_idx = segments.size();
    for (std::size_t i = 0; i < segments.size(); ++i)
      if (segments[i] < min_frames) {
        short_idx = i;
        break;
      }
    if (short_idx == segments.size()) break;
    if (short_idx > 0) {
      segments[short_idx - 1] += segments[short_idx];
      segments.erase(segments.begin() + static_cast<std::ptrdiff_t>(short_idx));
    } else {
      segments[1] += segments[0];
      segments.erase(segments.begin());
    }
  }
  return segments;
}

namespace {

struct ColorDef {
  const char* name;
  double r, g, b;
};

constexpr ColorDef kColors[6] = {
    {"red", 0.85, 0.12, 0.12},  {"green", 0.12, 0.75, 0.18}, {"blue", 0.15, 0.25, 0.90},
    {"yellow", 0.90, 0.85, 0.15}, {"magenta", 0.85, 0.15, 0.80}, {"cyan", 0.15, 0.80, 0.80}};

const ColorDef& color_by_name(const std::string& name) {
  for (const auto& c : kColors)
    if (name == c.name) return c;
  throw std::invalid_argument("synthbench: unknown color " + name);
}

bool point_in_shape(double px, double py, ShapeKind shape, double cx, double cy, double size) {
  const double hx = px - cx, hy = py - cy, half = size / 2.0;
  switch (shape) {
    case ShapeKind::circle:
      return hx * hx + hy * hy <= half * half;
    case ShapeKind::square:
      return std::abs(hx) <= half && std::abs(hy) <= half;
    case ShapeKind::triangle: {
      // upward-pointing with its centroid on (cx, cy): apex at cy - size/2,
      // base at cy + size/4, so the mask centroid tracks the trajectory
      const double top = -half, bottom = half / 2.0, tri_h = 0.75 * size;
      if (hy < top || hy > bottom) return false;
      return std::abs(hx) <= half * ((hy - top) / tri_h);
    }
  }
  return false;
}

struct ObjectPlan {
  ShapeSpec spec;
  Trajectory traj;
  bool enters = false, exits = false;
  FrameSide entry_side = FrameSide::none, exit_side = FrameSide::none;
};

bool prerender_visible(const ObjectPlan& o, int t, int w, int h) {
  const auto [cx, cy] = o.traj.center_at(t);
  const double half = o.spec.size / 2.0;
  return cx + half > 1.0 && cx - half < w - 1 && cy + half > 1.0 && cy - half < h - 1;
}

FrameSide outside_side(double cx, double cy, int w, int h) {
  const double dl = -cx, dr = cx - w, dt = -cy, db = cy - h;
  const double m = std::max({dl, dr, dt, db});
  if (m <= 0.0) return FrameSide::none;
  if (m == dl) return FrameSide::left;
  if (m == dr) return FrameSide::right;
  if (m == dt) return FrameSide::top;
  return FrameSide::bottom;
}

ObjectPlan sample_plan(Rng& rng, const ShapeSpec& spec, int frames, int w, int h) {
  ObjectPlan plan;
  plan.spec = spec;
  const double half = spec.size / 2.0;
  const double m = half + 1.0;
  auto inside_point = [&] {
    return std::pair<double, double>{rng.uniform(m, w - m), rng.uniform(m, h - m)};
  };
  auto outside_point = [&](FrameSide side) {
    const double off = half + 2.0;
    switch (side) {
      case FrameSide::left: return std::pair<double, double>{-off, rng.uniform(m, h - m)};
      case FrameSide::right: return std::pair<double, double>{w + off, rng.uniform(m, h - m)};
      case FrameSide::top: return std::pair<double, double>{rng.uniform(m, w - m), -off};
      default: return std::pair<double, double>{rng.uniform(m, w - m), h + off};
    }
  };
  auto random_side = [&] {
    static constexpr FrameSide kSides[4] = {FrameSide::left, FrameSide::right, FrameSide::top,
                                            FrameSide::bottom};
    return kSides[rng.uniform_int(0, 3)];
  };

  const bool stationary = rng.bernoulli(0.2);
  plan.enters = !stationary && rng.bernoulli(0.35);
  plan.exits = !stationary && rng.bernoulli(0.35);
  if (plan.enters) plan.entry_side = random_side();
  if (plan.exits) plan.exit_side = random_side();
  if (plan.enters && plan.exits && plan.entry_side == plan.exit_side)
    plan.exit_side = plan.exit_side == FrameSide::left ? FrameSide::right : FrameSide::left;

  std::pair<double, double> p0 = plan.enters ? outside_point(plan.entry_side) : inside_point();
  std::pair<double, double> p1;
  if (stationary) {
    p1 = p0;
  } else if (plan.exits) {
    p1 = outside_point(plan.exit_side);
  } else {
    const double lo = 0.30 * std::min(w, h), hi = 0.65 * std::min(w, h);
    p1 = inside_point();
    for (int tries = 0; tries < 24; ++tries) {
      const double d = std::hypot(p1.first - p0.first, p1.second - p0.second);
      if (d >= lo && d <= hi) break;
      p1 = inside_point();
    }
  }

  plan.traj.waypoints = {{0, p0.first, p0.second}, {frames - 1, p1.first, p1.second}};
  if (!stationary && !plan.enters && !plan.exits && frames >= 12 && rng.bernoulli(0.3)) {
    // Bent path: leg lengths come from a random split with short runs merged.
    const int cut = static_cast<int>(rng.uniform_int(2, frames - 3));
    const auto legs = merge_short_segments({cut, frames - 1 - cut}, 5);
    if (legs.size() == 2) {
      const double t = static_cast<double>(legs[0]) / (frames - 1);
      double mx = p0.first + t * (p1.first - p0.first) + rng.uniform(-14.0, 14.0);
      double my = p0.second + t * (p1.second - p0.second) + rng.uniform(-14.0, 14.0);
      mx = std::min(std::max(mx, m), static_cast<double>(w) - m);
      my = std::min(std::max(my, m), static_cast<double>(h) - m);
      plan.traj.waypoints = {{0, p0.first, p0.second}, {legs[0], mx, my},
                             {frames - 1, p1.first, p1.second}};
    }
  }
  return plan;
}

bool plans_overlap(const ObjectPlan& a, const ObjectPlan& b, int frames, int w, int h) {
  for (int t = 0; t < frames; ++t) {
    if (!prerender_visible(a, t, w, h) || !prerender_visible(b, t, w, h)) continue;
    const auto [ax, ay] = a.traj.center_at(t);
    const auto [bx, by] = b.traj.center_at(t);
    const double min_dist = (a.spec.size + b.spec.size) / 2.0 + 2.0;
    if (std::hypot(ax - bx, ay - by) < min_dist) return true;
  }
  return false;
}

struct RenderedObject {
  ObjectPlan plan;
  std::vector<std::uint8_t> visible;                  // per frame
  std::vector<std::pair<double, double>> bbox_track;  // centers on visible frames
  MotionDescriptor descriptor;
  int first_visible = -1, last_visible = -1;
};

Eigen::ArrayXd make_background(Rng& rng, int w, int h) {
  constexpr int kGrid = 6;
  double coarse[kGrid * kGrid * 3];
  for (double& v : coarse) v = rng.uniform(0.25, 0.75);
  Eigen::ArrayXd bg(3 * w * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gx = static_cast<double>(x) / (w - 1) * (kGrid - 1);
      const double gy = static_cast<double>(y) / (h - 1) * (kGrid - 1);
      const int x0 = std::min(static_cast<int>(gx), kGrid - 2);
      const int y0 = std::min(static_cast<int>(gy), kGrid - 2);
      const double fx = gx - x0, fy = gy - y0;
      for (int c = 0; c < 3; ++c) {
        const double v00 = coarse[(y0 * kGrid + x0) * 3 + c];
        const double v01 = coarse[(y0 * kGrid + x0 + 1) * 3 + c];
        const double v10 = coarse[((y0 + 1) * kGrid + x0) * 3 + c];
        const double v11 = coarse[((y0 + 1) * kGrid + x0 + 1) * 3 + c];
        const double v = (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
        bg[c * w * h + y * w + x] = v;
      }
    }
  return bg;
}

// One full generation attempt; returns false when a constraint only visible
// after rendering fails (caller retries with a fresh seed).
bool try_generate(const GenParams& params, std::uint64_t seed, const std::string& clip_id,
                  VideoClip& out_clip, std::vector<ReferringSample>& out_samples) {
  Rng rng(seed);
  const int w = params.width, h = params.height;
  const int frames = static_cast<int>(rng.uniform_int(params.min_frames, params.max_frames));
  int want = static_cast<int>(rng.uniform_int(params.min_objects, params.max_objects));
  const bool force_distractor = rng.bernoulli(params.distractor_prob) && want >= 2;

  const double size_lo = 0.15 * std::min(w, h), size_hi = 0.27 * std::min(w, h);
  auto sample_spec = [&] {
    ShapeSpec s;
    s.shape = static_cast<ShapeKind>(rng.uniform_int(0, 2));
    s.class_id = static_cast<int>(s.shape);
    s.color = kColors[rng.uniform_int(0, 5)].name;
    s.size = rng.uniform(size_lo, size_hi);
    if (s.size < 6.0) s.size = 6.0;
    return s;
  };

  std::vector<ObjectPlan> plans;
  for (int k = 0; k < want; ++k) {
    ShapeSpec spec = sample_spec();
    if (force_distractor && k == 1) {
      spec.shape = plans[0].spec.shape;
      spec.class_id = plans[0].spec.class_id;
      spec.color = plans[0].spec.color;
    }
    bool placed = false;
    for (int attempt = 0; attempt < 80 && !placed; ++attempt) {
      ObjectPlan candidate = sample_plan(rng, spec, frames, w, h);
      int vis = 0;
      for (int t = 0; t < frames; ++t) vis += prerender_visible(candidate, t, w, h);
      if (vis < 3) continue;
      bool ok = true;
      for (const auto& other : plans)
        if (plans_overlap(candidate, other, frames, w, h)) {
          ok = false;
          break;
        }
      if (!ok) continue;
      plans.push_back(std::move(candidate));
      placed = true;
    }
    if (!placed) {
      if (static_cast<int>(plans.size()) >= params.min_objects &&
          !(force_distractor && static_cast<int>(plans.size()) < 2))
        break;  // settle for fewer objects
      return false;
    }
  }
  const int count = static_cast<int>(plans.size());

  // Render: static textured background, shapes drawn by id order.
  const Eigen::ArrayXd background = make_background(rng, w, h);
  VideoClip clip;
  clip.clip_id = clip_id;
  clip.width = w;
  clip.height = h;
  const int hw = w * h;
  for (int t = 0; t < frames; ++t) {
    Eigen::ArrayXd frame = background;
    std::vector<std::uint8_t> mask(hw, 0);
    for (int k = 0; k < count; ++k) {
      const auto [cx, cy] = plans[k].traj.center_at(t);
      const ColorDef& col = color_by_name(plans[k].spec.color);
      const double half = plans[k].spec.size / 2.0 + 1.0;
      const int x_lo = std::max(0, static_cast<int>(std::floor(cx - half)));
      const int x_hi = std::min(w - 1, static_cast<int>(std::ceil(cx + half)));
      const int y_lo = std::max(0, static_cast<int>(std::floor(cy - half)));
      const int y_hi = std::min(h - 1, static_cast<int>(std::ceil(cy + half)));
      for (int y = y_lo; y <= y_hi; ++y)
        for (int x = x_lo; x <= x_hi; ++x)
          if (point_in_shape(x + 0.5, y + 0.5, plans[k].spec.shape, cx, cy, plans[k].spec.size)) {
            mask[y * w + x] = static_cast<std::uint8_t>(k + 1);
            frame[0 * hw + y * w + x] = col.r;
            frame[1 * hw + y * w + x] = col.g;
            frame[2 * hw + y * w + x] = col.b;
          }
    }
    // quantize to PNG precision so save/load round-trips exactly
    for (Eigen::Index i = 0; i < frame.size(); ++i)
      frame[i] = std::lround(frame[i] * 255.0) / 255.0;
    clip.frames.push_back(std::move(frame));
    clip.masks.push_back(std::move(mask));
  }

  // Post-render bookkeeping: visibility, boxes, descriptors.
  std::vector<RenderedObject> rendered(count);
  for (int k = 0; k < count; ++k) {
    RenderedObject& ro = rendered[k];
    ro.plan = plans[k];
    ro.visible.assign(frames, 0);
    ObjectTrack track;
    track.object_id = k + 1;
    track.class_id = plans[k].spec.class_id;
    track.attributes["shape"] = to_string(plans[k].spec.shape);
    track.attributes["color"] = plans[k].spec.color;
    {
      // ground-truth trajectory as metadata, consumed only by test oracles
      std::string traj;
      char buf[64];
      for (const auto& wp : plans[k].traj.waypoints) {
        std::snprintf(buf, sizeof(buf), "%s%d:%.4f,%.4f", traj.empty() ? "" : ";", wp.frame,
                      wp.cx, wp.cy);
        traj += buf;
      }
      std::snprintf(buf, sizeof(buf), "%.4f", plans[k].spec.size);
      track.attributes["size"] = buf;
      track.attributes["traj"] = traj;
    }
    for (int t = 0; t < frames; ++t) {
      int x_min = w, x_max = -1, y_min = h, y_max = -1;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (clip.masks[t][y * w + x] == k + 1) {
            x_min = std::min(x_min, x);
            x_max = std::max(x_max, x);
            y_min = std::min(y_min, y);
            y_max = std::max(y_max, y);
          }
      if (x_max < 0) continue;
      ro.visible[t] = 1;
      if (ro.first_visible < 0) ro.first_visible = t;
      ro.last_visible = t;
      const Box box{static_cast<double>(x_min), static_cast<double>(y_min),
                    static_cast<double>(x_max + 1), static_cast<double>(y_max + 1)};
      track.bboxes[t] = box;
      ro.bbox_track.emplace_back(box.cx(), box.cy());
    }
    if (static_cast<int>(ro.bbox_track.size()) < 3) return false;
    clip.objects.push_back(std::move(track));

    MotionDescriptor& d = ro.descriptor;
    d.grid_mode = params.grid;
    d.direction = estimate_direction(ro.bbox_track);
    d.start_cell = grid_cell(ro.bbox_track.front().first, ro.bbox_track.front().second, w, h,
                             params.grid);
    d.end_cell = grid_cell(ro.bbox_track.back().first, ro.bbox_track.back().second, w, h,
                           params.grid);
    if (ro.first_visible > 0) {
      const auto [sx, sy] = plans[k].traj.center_at(0);
      d.entry_side = outside_side(sx, sy, w, h);
    }
    if (ro.last_visible < frames - 1) {
      const auto [ex, ey] = plans[k].traj.center_at(frames - 1);
      d.exit_side = outside_side(ex, ey, w, h);
    }
  }

  // Motion expressions must disambiguate same-appearance objects.
  for (int a = 0; a < count; ++a)
    for (int b = a + 1; b < count; ++b) {
      if (rendered[a].plan.spec.shape != rendered[b].plan.spec.shape ||
          rendered[a].plan.spec.color != rendered[b].plan.spec.color)
        continue;
      const std::string ea =
          render_expression(rendered[a].descriptor, rendered[a].plan.spec, ExpressionStyle::motion);
      const std::string eb =
          render_expression(rendered[b].descriptor, rendered[b].plan.spec, ExpressionStyle::motion);
      if (ea == eb) return false;
    }

  std::vector<ReferringSample> samples;
  for (int k = 0; k < count; ++k) {
    bool appearance_unique = true, spatial_unique = true;
    for (int other = 0; other < count; ++other) {
      if (other == k) continue;
      const bool same_look = rendered[other].plan.spec.shape == rendered[k].plan.spec.shape &&
                             rendered[other].plan.spec.color == rendered[k].plan.spec.color;
      if (!same_look) continue;
      appearance_unique = false;
      if (rendered[other].descriptor.start_cell == rendered[k].descriptor.start_cell)
        spatial_unique = false;
    }
    auto push = [&](ExpressionStyle style) {
      ReferringSample s;
      s.clip_id = clip_id;
      s.expression = render_expression(rendered[k].descriptor, rendered[k].plan.spec, style);
      s.target_ids = {k + 1};
      s.style = style;
      samples.push_back(std::move(s));
    };
    if (appearance_unique) push(ExpressionStyle::appearance);
    if (spatial_unique) push(ExpressionStyle::spatial);
    push(ExpressionStyle::motion);
  }

  out_clip = std::move(clip);
  out_samples = std::move(samples);
  return true;
}

}  // namespace

std::pair<VideoClip, std::vector<ReferringSample>> generate_clip(const GenParams& params,
                                                                 std::uint64_t seed,
                                                                 const std::string& clip_id) {
  params.validate();
  const double max_size = 0.27 * std::min(params.width, params.height);
  if (max_size + 4 > std::min(params.width, params.height))
    throw std::invalid_argument("synthbench: objects cannot fit inside the frame");

  VideoClip clip;
  std::vector<ReferringSample> samples;
  for (int retry = 0; retry < 64; ++retry) {
    if (try_generate(params, mix_seed(seed, retry), clip_id, clip, samples))
      return {std::move(clip), std::move(samples)};
  }
  throw std::runtime_error("synthbench: could not satisfy generation constraints for " + clip_id);
}

Dataset generate_dataset(const GenParams& params, int clips, std::uint64_t seed) {
  if (clips < 1) throw std::invalid_argument("generate_dataset: clip count must be positive");
  Dataset data;
  for (int i = 0; i < clips; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "clip_%04d", i);
    ClipEntry entry;
    auto [clip, samples] = generate_clip(params, mix_seed(seed, 1000003ULL * i), name);
    entry.clip = std::move(clip);
    entry.samples = std::move(samples);
    data.push_back(std::move(entry));
  }
  return data;
}

}  // namespace refvos
