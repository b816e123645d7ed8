#include "refvos/backbone.hpp"

#include <cmath>
#include <stdexcept>

namespace refvos {

namespace nn {

ad::Array sine_position_encoding(int h, int w, int dim) {
  // DETR-style: first half encodes y, second half x, interleaved sin/cos.
  ad::Array pe(static_cast<std::int64_t>(h) * w * dim);
  const int half = dim / 2;
  const double temperature = 10000.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::int64_t row = (static_cast<std::int64_t>(y) * w + x) * dim;
      const double ny = (y + 0.5) / h * 6.283185307179586;
      const double nx = (x + 0.5) / w * 6.283185307179586;
      for (int i = 0; i < half; ++i) {
        const double div = std::pow(temperature, 2.0 * (i / 2) / half);
        const double vy = ny / div, vx = nx / div;
        pe[row + i] = (i % 2 == 0) ? std::sin(vy) : std::cos(vy);
        pe[row + half + i] = (i % 2 == 0) ? std::sin(vx) : std::cos(vx);
      }
      for (int i = 2 * half; i < dim; ++i) pe[row + i] = 0.0;
    }
  }
  return pe;
}

}  // namespace nn

BackboneParams BackboneParams::create(ParamRegistry& reg, const RunConfig& cfg,
                                      std::uint64_t seed) {
  BackboneParams p;
  const int c1 = kStageChannels[0], c2 = kStageChannels[1], c3 = kStageChannels[2],
            c4 = kStageChannels[3];
  p.conv1_w = nn::he_param(reg, "backbone.conv1.w", {c1, 3 * 9}, 3 * 9, seed);
  p.conv1_b = nn::zeros_param(reg, "backbone.conv1.b", {1, c1});
  p.conv1b_w = nn::he_param(reg, "backbone.conv1b.w", {c1, c1 * 9}, c1 * 9, seed);
  p.conv1b_b = nn::zeros_param(reg, "backbone.conv1b.b", {1, c1});
  p.mix1_w = nn::he_param(reg, "backbone.mix1.w", {c1, c1}, c1, seed);
  p.mix1_b = nn::zeros_param(reg, "backbone.mix1.b", {1, c1});
  p.conv2_w = nn::he_param(reg, "backbone.conv2.w", {c2, c1 * 9}, c1 * 9, seed);
  p.conv2_b = nn::zeros_param(reg, "backbone.conv2.b", {1, c2});
  p.mix2_w = nn::he_param(reg, "backbone.mix2.w", {c2, c2}, c2, seed);
  p.mix2_b = nn::zeros_param(reg, "backbone.mix2.b", {1, c2});
  p.conv3_w = nn::he_param(reg, "backbone.conv3.w", {c3, c2 * 9}, c2 * 9, seed);
  p.conv3_b = nn::zeros_param(reg, "backbone.conv3.b", {1, c3});
  p.mix3_w = nn::he_param(reg, "backbone.mix3.w", {c3, c3}, c3, seed);
  p.mix3_b = nn::zeros_param(reg, "backbone.mix3.b", {1, c3});
  p.conv4_w = nn::he_param(reg, "backbone.conv4.w", {c4, c3 * 9}, c3 * 9, seed);
  p.conv4_b = nn::zeros_param(reg, "backbone.conv4.b", {1, c4});
  p.mix4_w = nn::he_param(reg, "backbone.mix4.w", {c4, c4}, c4, seed);
  p.mix4_b = nn::zeros_param(reg, "backbone.mix4.b", {1, c4});
  const int dm = cfg.mask_dim;
  p.lat4_w = nn::xavier_param(reg, "backbone.lat4.w", {dm, c1}, c1, dm, seed);
  p.lat4_b = nn::zeros_param(reg, "backbone.lat4.b", {1, dm});
  p.lat8_w = nn::xavier_param(reg, "backbone.lat8.w", {dm, c2}, c2, dm, seed);
  p.lat8_b = nn::zeros_param(reg, "backbone.lat8.b", {1, dm});
  p.lat16_w = nn::xavier_param(reg, "backbone.lat16.w", {dm, c3}, c3, dm, seed);
  p.lat16_b = nn::zeros_param(reg, "backbone.lat16.b", {1, dm});
  p.lat32_w = nn::xavier_param(reg, "backbone.lat32.w", {dm, c4}, c4, dm, seed);
  p.lat32_b = nn::zeros_param(reg, "backbone.lat32.b", {1, dm});
  return p;
}

namespace {

// 1x1 conv on channel-major maps: x [Cin, HW] -> [Cout, HW].
ad::Tensor pointwise(const ad::Tensor& x, const ad::Tensor& w, const ad::Tensor& b) {
  return ad::add_colvec(ad::matmul(w, x), ad::reshape(b, {w.rows(), 1}));
}

ad::Tensor conv_block(const ad::Tensor& x, int h, int w, const ad::Tensor& cw,
                      const ad::Tensor& cb) {
  return ad::relu(ad::conv2d_s2(x, h, w, cw, ad::reshape(cb, {cw.rows(), 1})));
}

}  // namespace

FeaturePyramid extract_features(const std::vector<ad::Tensor>& frames, int h, int w,
                                const BackboneParams& p) {
  if (h % 32 != 0 || w % 32 != 0)
    throw std::invalid_argument("extract_features: H and W must be multiples of 32");

  FeaturePyramid pyr;
  pyr.h = h;
  pyr.w = w;
  const int h4 = h / 4, w4 = w / 4, h8 = h / 8, w8 = w / 8, h16 = h / 16, w16 = w / 16,
            h32 = h / 32, w32 = w / 32;

  for (const auto& frame : frames) {
    if (frame.rows() != 3 || frame.cols() != h * w)
      throw std::invalid_argument("extract_features: frame tensor must be [3, h*w]");

    ad::Tensor x = conv_block(frame, h, w, p.conv1_w, p.conv1_b);        // [32, h/2*w/2]
    x = conv_block(x, h / 2, w / 2, p.conv1b_w, p.conv1b_b);             // [32, h4*w4]
    const ad::Tensor s4 = ad::relu(pointwise(x, p.mix1_w, p.mix1_b));
    ad::Tensor y = conv_block(s4, h4, w4, p.conv2_w, p.conv2_b);
    const ad::Tensor s8 = ad::relu(pointwise(y, p.mix2_w, p.mix2_b));
    y = conv_block(s8, h8, w8, p.conv3_w, p.conv3_b);
    const ad::Tensor s16 = ad::relu(pointwise(y, p.mix3_w, p.mix3_b));
    y = conv_block(s16, h16, w16, p.conv4_w, p.conv4_b);
    const ad::Tensor s32 = ad::relu(pointwise(y, p.mix4_w, p.mix4_b));

    // FPN-style mask features: lateral projections summed top-down.
    ad::Tensor f = pointwise(s32, p.lat32_w, p.lat32_b);
    f = ad::add(pointwise(s16, p.lat16_w, p.lat16_b), ad::upsample2x(f, h32, w32));
    f = ad::add(pointwise(s8, p.lat8_w, p.lat8_b), ad::upsample2x(f, h16, w16));
    f = ad::add(pointwise(s4, p.lat4_w, p.lat4_b), ad::upsample2x(f, h8, w8));

    pyr.s4.push_back(s4);
    pyr.s8.push_back(s8);
    pyr.s16.push_back(s16);
    pyr.s32.push_back(s32);
    pyr.mask_features.push_back(f);
  }
  return pyr;
}

FeaturePyramid extract_features(const std::vector<Eigen::ArrayXd>& frames, int h, int w,
                                const BackboneParams& params) {
  std::vector<ad::Tensor> wrapped;
  wrapped.reserve(frames.size());
  for (const auto& f : frames) wrapped.push_back(ad::Tensor::constant({3, h * w}, f));
  return extract_features(wrapped, h, w, params);
}

}  // namespace refvos
