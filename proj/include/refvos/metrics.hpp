#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "refvos/types.hpp"

namespace refvos {

struct BinaryMask {
  int h = 0, w = 0;
  std::vector<std::uint8_t> grid;  // row-major, 0/1

  bool empty_mask() const {
    for (const auto v : grid)
      if (v) return false;
    return true;
  }
};

// |A∩B| / |A∪B|; both empty -> 1, exactly one empty -> 0.
double iou(const BinaryMask& pred, const BinaryMask& gt);

// 2|A∩B| / (|A|+|B|); same empty-mask conventions as iou.
double dice(const BinaryMask& pred, const BinaryMask& gt);

// Boundary F-measure: 1-pixel 4-neighbor boundaries matched within a Chebyshev
// pixel tolerance; F = 2PR/(P+R). Both boundaries empty -> 1, one empty -> 0.
double boundary_f(const BinaryMask& pred, const BinaryMask& gt, int tolerance);

// DAVIS-style default: max(1, round(0.008 * image diagonal)).
int default_boundary_tolerance(int h, int w);

struct MetricValues {
  double j = 0.0, f = 0.0, jf = 0.0, dice = 0.0, iou = 0.0;
};

struct EvalReport {
  std::map<int, MetricValues> per_object;  // target object id -> temporal means
  MetricValues aggregate;                  // means over referred objects
  int num_frames = 0;
  int num_objects = 0;
};

// Frame-wise metrics against each referred object's ground truth, averaged
// temporally per object (empty-mask conventions on frames without the
// object), then across objects. `predictions` holds one full-resolution
// binary mask per frame (the union of kept queries).
EvalReport evaluate(const std::vector<BinaryMask>& predictions, const VideoClip& gt,
                    const std::set<int>& target_ids, int boundary_tolerance = -1);

}  // namespace refvos
