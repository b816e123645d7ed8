#pragma once

#include <cstdint>
#include <vector>

#include "refvos/config.hpp"
#include "refvos/decoder.hpp"
#include "refvos/nn.hpp"

namespace refvos {

struct ScorerParams {
  ad::Tensor w1, b1;  // [d_h, C_Q], [d_h]
  ad::Tensor w2, b;   // [1, d_h], scalar

  static ScorerParams create(ParamRegistry& reg, const RunConfig& cfg, std::uint64_t seed);
};

// Frame embedding e_t = mean over the N queries of frame t; output [T, C_Q].
ad::Tensor aggregate_frames(const QuerySet& queries);

struct FrameScores {
  ad::Tensor logits;  // [T, 1]
  ad::Tensor scores;  // [T, 1], sigmoid(logits)
};

// s_t = sigmoid(W2 . relu(W1 . e_t + b1) + b)
FrameScores score_frames(const ad::Tensor& frame_embeddings, const ScorerParams& params);

// Top-T' indices by score, ties toward the lower index, ascending output.
std::vector<int> select_top_frames(const std::vector<double>& scores, int t_prime);

enum class SelectionStrategy { ours, uniform, cosine };

SelectionStrategy strategy_from_string(const std::string& s);
const char* to_string(SelectionStrategy s);

// Baselines mirrored from the key-frame ablation: evenly spaced indices, or
// ranking by cosine similarity between e_t and W_init * F_text.
std::vector<int> baseline_select(SelectionStrategy strategy, const Eigen::ArrayXd& frame_embeddings,
                                 int frames, int query_dim, const Eigen::ArrayXd& text_projected,
                                 int t_prime);

}  // namespace refvos
