#pragma once

#include <cstdint>
#include <vector>

#include "refvos/config.hpp"
#include "refvos/nn.hpp"
#include "refvos/tensor.hpp"

namespace refvos {

// Stage widths of the toy pyramid (strides 4/8/16/32).
inline constexpr int kStageChannels[4] = {32, 64, 128, 256};

struct BackboneParams {
  ad::Tensor conv1_w, conv1_b;    // 3 -> 32, stride 2
  ad::Tensor conv1b_w, conv1b_b;  // 32 -> 32, stride 2
  ad::Tensor mix1_w, mix1_b;
  ad::Tensor conv2_w, conv2_b;  // 32 -> 64
  ad::Tensor mix2_w, mix2_b;
  ad::Tensor conv3_w, conv3_b;  // 64 -> 128
  ad::Tensor mix3_w, mix3_b;
  ad::Tensor conv4_w, conv4_b;  // 128 -> 256
  ad::Tensor mix4_w, mix4_b;
  ad::Tensor lat4_w, lat4_b;  // lateral 1x1 projections to mask_dim
  ad::Tensor lat8_w, lat8_b;
  ad::Tensor lat16_w, lat16_b;
  ad::Tensor lat32_w, lat32_b;

  static BackboneParams create(ParamRegistry& reg, const RunConfig& cfg, std::uint64_t seed);
};

// Multi-scale features per frame, stored channel-major [C, H_s*W_s].
struct FeaturePyramid {
  int h = 0, w = 0;  // input resolution
  std::vector<ad::Tensor> s4, s8, s16, s32;
  std::vector<ad::Tensor> mask_features;  // [mask_dim, (h/4)*(w/4)]

  int frames() const { return static_cast<int>(s4.size()); }
  int h4() const { return h / 4; }
  int w4() const { return w / 4; }
};

// frames: per-frame [3, h*w] tensors (wrap raw pixel arrays as constants to
// run inference; pass parameters to differentiate through the input).
FeaturePyramid extract_features(const std::vector<ad::Tensor>& frames, int h, int w,
                                const BackboneParams& params);

FeaturePyramid extract_features(const std::vector<Eigen::ArrayXd>& frames, int h, int w,
                                const BackboneParams& params);

}  // namespace refvos
