#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace refvos {

struct Box {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;  // half-open, x right, y down

  double cx() const { return 0.5 * (x0 + x1); }
  double cy() const { return 0.5 * (y0 + y1); }
  bool operator==(const Box&) const = default;
};

struct ObjectTrack {
  int object_id = 0;  // positive; 0 is background in masks
  int class_id = 0;
  std::map<std::string, std::string> attributes;  // shape, color
  std::map<int, Box> bboxes;                      // frame index -> box, visible frames only

  bool visible_at(int t) const { return bboxes.count(t) != 0; }
  bool operator==(const ObjectTrack&) const = default;
};

// One video: frames are unit-interval RGB stored channel-major per frame
// ([3, H*W], index c*H*W + y*W + x); masks hold object ids (0 = background).
struct VideoClip {
  std::string clip_id;
  int width = 0, height = 0;
  std::vector<Eigen::ArrayXd> frames;
  std::vector<std::vector<std::uint8_t>> masks;
  std::vector<ObjectTrack> objects;  // sorted by object_id

  int length() const { return static_cast<int>(frames.size()); }
  const ObjectTrack* find_object(int object_id) const {
    for (const auto& o : objects)
      if (o.object_id == object_id) return &o;
    return nullptr;
  }
  bool mask_empty_at(int t, int object_id) const {
    for (const std::uint8_t v : masks[t])
      if (v == object_id) return false;
    return true;
  }
};

enum class ExpressionStyle { appearance, spatial, motion };

const char* to_string(ExpressionStyle s);
ExpressionStyle style_from_string(const std::string& s);

struct ReferringSample {
  std::string clip_id;
  std::string expression;
  std::set<int> target_ids;
  ExpressionStyle style = ExpressionStyle::appearance;

  bool operator==(const ReferringSample&) const = default;
};

struct ClipEntry {
  VideoClip clip;
  std::vector<ReferringSample> samples;
};

using Dataset = std::vector<ClipEntry>;

// Split rule: clips ordered by clip_id, first 70% train, next 15% val, rest test.
enum class Split { train, val, test, all };
std::vector<int> split_indices(const Dataset& data, Split split);

bool clips_equal(const VideoClip& a, const VideoClip& b);

}  // namespace refvos
