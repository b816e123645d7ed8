#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "refvos/config.hpp"
#include "refvos/tensor.hpp"

namespace refvos {

// Injective assignment of ground-truth objects to queries; unlisted queries
// are background.
struct MatchResult {
  std::vector<std::pair<int, int>> pairs;  // (query index, gt object index), by query
  double total_cost = 0.0;
};

// Minimum-cost assignment of all G objects to distinct queries, G <= N.
// Rows index queries, columns ground-truth objects. Non-finite costs are
// rejected.
MatchResult hungarian_match(const Eigen::ArrayXd& cost, int num_queries, int num_objects);

// Ground truth for one referring sample restricted to a frame subset: class
// ids plus per-frame stride-4 binary masks for each target object.
struct SampleTargets {
  std::vector<int> class_ids;                          // [G]
  std::vector<std::vector<Eigen::ArrayXd>> masks4;     // [G][F], each (h/4)*(w/4) of {0,1}
  std::vector<std::vector<std::uint8_t>> visible;      // [G][F]

  int objects() const { return static_cast<int>(class_ids.size()); }
  int frames() const { return class_ids.empty() ? 0 : static_cast<int>(masks4.front().size()); }
};

// Nearest-neighbor downsample of an id mask to a binary stride-`factor` grid
// (cell centers are sampled).
Eigen::ArrayXd downsample_mask_nearest(const std::vector<std::uint8_t>& mask, int h, int w,
                                       int object_id, int factor);

// cost(i,g) = w.cls * (-log p_i(class_g)) + w.bce * BCE + w.dice * (1 - Dice),
// summed over the frames in `targets` (empty ground truth -> empty matrix).
Eigen::ArrayXd match_cost(const std::vector<Eigen::ArrayXd>& class_logits,
                          const std::vector<Eigen::ArrayXd>& mask_probs,
                          const SampleTargets& targets, const LossWeights& weights,
                          int num_queries, int num_classes);

struct FramePredictionTape {
  std::vector<ad::Tensor> class_logits;  // per frame [N, C+1]
  std::vector<ad::Tensor> masks;         // per frame [N, (h/4)*(w/4)] probabilities
  // Pre-sigmoid masks; when present, BCE terms run through the logits so the
  // gradient survives saturated probabilities. Values match the probability
  // form up to the clamping epsilon.
  std::vector<ad::Tensor> mask_logits;
};

struct FrameLossTerms {
  ad::Tensor cls, bce, dice;
};

// Cross-entropy on all queries (unmatched and invisible-frame labels are
// background); BCE and soft-Dice on matched masks, averaged over matches and
// frames.
FrameLossTerms frame_loss(const FramePredictionTape& pred, const SampleTargets& targets,
                          const MatchResult& match, int num_classes);

// Mean over matched queries and adjacent selected-frame pairs of
// 1 - cos(q[t], q[t+1]); zero vectors contribute 0.
ad::Tensor temporal_similarity_loss(const std::vector<ad::Tensor>& queries,
                                    const MatchResult& match);

// BCE + soft-Dice pooled over the whole selected-frame volume per matched
// object, then averaged over matches.
ad::Tensor video_mask_loss(const FramePredictionTape& pred, const SampleTargets& targets,
                           const MatchResult& match);

struct LossTerms {
  ad::Tensor cls, mask_bce, mask_dice, temporal, video_mask, keyframe_aux;
};

struct LossBreakdown {
  double cls = 0.0, mask_bce = 0.0, mask_dice = 0.0, temporal = 0.0, video_mask = 0.0,
         keyframe_aux = 0.0, total = 0.0;
};

ad::Tensor total_loss(const LossTerms& terms, const LossWeights& weights);
LossBreakdown breakdown_values(const LossTerms& terms, const LossWeights& weights);

}  // namespace refvos
