#pragma once

#include <cstdint>
#include <vector>

#include "refvos/config.hpp"
#include "refvos/nn.hpp"

namespace refvos {

inline constexpr int kMaxTemporalSlots = 64;

struct InterframeBlockParams {
  nn::AttentionParams attn;
  nn::FfnParams ffn;
  nn::LayerNormParams ln_attn, ln_ffn;
};

struct InterframeParams {
  std::vector<InterframeBlockParams> blocks;
  ad::Tensor temporal_embed;  // [kMaxTemporalSlots, C_Q], used only when enabled

  static InterframeParams create(ParamRegistry& reg, const RunConfig& cfg, std::uint64_t seed);
};

// Flattens [T', N, C_Q] to [T'*N, C_Q], applies self-attention and
// feed-forward with residual connections, and reshapes back. No positional
// encoding is added unless cfg.temporal_pos_embed is set.
std::vector<ad::Tensor> interframe_attend(const std::vector<ad::Tensor>& queries,
                                          const InterframeParams& params, const RunConfig& cfg);

}  // namespace refvos
