#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "refvos/types.hpp"

namespace refvos {

enum class ShapeKind { circle, square, triangle };
enum class Direction {
  stationary, right, down_right, down, down_left, left, up_left, up, up_right
};
enum class FrameSide { none, left, right, top, bottom };
enum class GridMode { g2x2, g3x3 };

const char* to_string(ShapeKind s);
const char* to_string(Direction d);
const char* to_string(FrameSide s);

struct ShapeSpec {
  ShapeKind shape = ShapeKind::circle;
  std::string color;
  double size = 12.0;  // bounding diameter in pixels
  int class_id = 0;    // derived from shape
};

struct Waypoint {
  int frame = 0;
  double cx = 0.0, cy = 0.0;
};

struct Trajectory {
  std::vector<Waypoint> waypoints;      // strictly increasing frames, linear in between
  std::vector<std::uint8_t> visibility; // per frame, filled in after rendering

  std::pair<double, double> center_at(int frame) const;
};

struct MotionDescriptor {
  Direction direction = Direction::stationary;
  std::string start_cell, end_cell;
  FrameSide entry_side = FrameSide::none;
  FrameSide exit_side = FrameSide::none;
  GridMode grid_mode = GridMode::g3x3;
};

struct GenParams {
  int width = 96, height = 96;
  int min_frames = 8, max_frames = 24;
  int min_objects = 2, max_objects = 5;
  GridMode grid = GridMode::g3x3;
  double distractor_prob = 0.5;

  void validate() const;
};

// Net displacement of the track (last minus first visible center, x right,
// y down); under 3 px is stationary, otherwise the angle is binned into eight
// 45-degree sectors, boundary angles to the counter-clockwise sector.
Direction estimate_direction(const std::vector<std::pair<double, double>>& centers);

// Half-open bins per axis; 3x3 names {top,mid,bottom}-{left,center,right},
// 2x2 names {top,bottom}-{left,right}. Points outside the frame are rejected.
std::string grid_cell(double x, double y, int width, int height, GridMode mode);

std::string render_expression(const MotionDescriptor& descriptor, const ShapeSpec& object,
                              ExpressionStyle style);

// Segments shorter than min_frames merge into the preceding neighbor (the
// following one at the front); a lone short segment stays as is.
std::vector<int> merge_short_segments(std::vector<int> segments, int min_frames = 10);

// Renders one clip (textured background, solid moving shapes, exact masks)
// plus its expressions: motion always, appearance/spatial only when
// unambiguous among the clip's objects. Deterministic in (params, seed).
std::pair<VideoClip, std::vector<ReferringSample>> generate_clip(const GenParams& params,
                                                                 std::uint64_t seed,
                                                                 const std::string& clip_id);

Dataset generate_dataset(const GenParams& params, int clips, std::uint64_t seed);

}  // namespace refvos
