#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "refvos/rng.hpp"
#include "refvos/tensor.hpp"

namespace refvos {

// Named leaf parameters in registration order; the order fixes both the
// optimizer state layout and the checkpoint layout.
class ParamRegistry {
 public:
  ad::Tensor add(const std::string& name, ad::Tensor t) {
    items_.emplace_back(name, t);
    return t;
  }
  const std::vector<std::pair<std::string, ad::Tensor>>& items() const { return items_; }

 private:
  std::vector<std::pair<std::string, ad::Tensor>> items_;
};

namespace nn {

inline ad::Tensor he_param(ParamRegistry& reg, const std::string& name, std::vector<int> shape,
                           int fan_in, std::uint64_t seed) {
  Rng rng = derive_rng(seed, name);
  std::int64_t n = 1;
  for (const int d : shape) n *= d;
  ad::Array a(n);
  const double s = std::sqrt(2.0 / fan_in);
  for (std::int64_t i = 0; i < n; ++i) a[i] = rng.normal() * s;
  return reg.add(name, ad::Tensor::parameter(std::move(shape), std::move(a)));
}

inline ad::Tensor xavier_param(ParamRegistry& reg, const std::string& name, std::vector<int> shape,
                               int fan_in, int fan_out, std::uint64_t seed, double gain = 1.0) {
  Rng rng = derive_rng(seed, name);
  std::int64_t n = 1;
  for (const int d : shape) n *= d;
  ad::Array a(n);
  const double s = gain * std::sqrt(2.0 / (fan_in + fan_out));
  for (std::int64_t i = 0; i < n; ++i) a[i] = rng.normal() * s;
  return reg.add(name, ad::Tensor::parameter(std::move(shape), std::move(a)));
}

inline ad::Tensor zeros_param(ParamRegistry& reg, const std::string& name, std::vector<int> shape) {
  std::int64_t n = 1;
  for (const int d : shape) n *= d;
  return reg.add(name, ad::Tensor::parameter(std::move(shape), ad::Array::Zero(n)));
}

inline ad::Tensor ones_param(ParamRegistry& reg, const std::string& name, std::vector<int> shape) {
  std::int64_t n = 1;
  for (const int d : shape) n *= d;
  return reg.add(name, ad::Tensor::parameter(std::move(shape), ad::Array::Constant(n, 1.0)));
}

// Projection weights for one attention block. Output projections start small
// so residual blocks begin close to (but not exactly at) the identity.
struct AttentionParams {
  ad::Tensor wq, bq, wk, bk, wv, bv, wo, bo;

  static AttentionParams create(ParamRegistry& reg, const std::string& prefix, int dim,
                                std::uint64_t seed) {
    AttentionParams p;
    p.wq = xavier_param(reg, prefix + ".wq", {dim, dim}, dim, dim, seed);
    p.bq = zeros_param(reg, prefix + ".bq", {1, dim});
    p.wk = xavier_param(reg, prefix + ".wk", {dim, dim}, dim, dim, seed);
    p.bk = zeros_param(reg, prefix + ".bk", {1, dim});
    p.wv = xavier_param(reg, prefix + ".wv", {dim, dim}, dim, dim, seed);
    p.bv = zeros_param(reg, prefix + ".bv", {1, dim});
    p.wo = xavier_param(reg, prefix + ".wo", {dim, dim}, dim, dim, seed, 0.5);
    p.bo = zeros_param(reg, prefix + ".bo", {1, dim});
    return p;
  }
};

struct FfnParams {
  ad::Tensor w1, b1, w2, b2;

  static FfnParams create(ParamRegistry& reg, const std::string& prefix, int dim, int hidden,
                          std::uint64_t seed) {
    FfnParams p;
    p.w1 = he_param(reg, prefix + ".w1", {hidden, dim}, dim, seed);
    p.b1 = zeros_param(reg, prefix + ".b1", {1, hidden});
    p.w2 = xavier_param(reg, prefix + ".w2", {dim, hidden}, hidden, dim, seed, 0.5);
    p.b2 = zeros_param(reg, prefix + ".b2", {1, dim});
    return p;
  }
};

struct LayerNormParams {
  ad::Tensor gain, bias;

  static LayerNormParams create(ParamRegistry& reg, const std::string& prefix, int dim) {
    return {ones_param(reg, prefix + ".gain", {1, dim}), zeros_param(reg, prefix + ".bias", {1, dim})};
  }
};

// Multi-head attention. `allowed`, when present, flags key columns per query
// row (rows with nothing allowed fall back to full attention inside softmax).
inline ad::Tensor multihead_attention(const ad::Tensor& query, const ad::Tensor& key,
                                      const ad::Tensor& value, int heads,
                                      const AttentionParams& p,
                                      const std::vector<std::uint8_t>* allowed = nullptr) {
  const int dim = query.cols();
  const int dh = dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const ad::Tensor qp = ad::linear(query, p.wq, p.bq);
  const ad::Tensor kp = ad::linear(key, p.wk, p.bk);
  const ad::Tensor vp = ad::linear(value, p.wv, p.bv);

  ad::Tensor merged;
  for (int h = 0; h < heads; ++h) {
    const ad::Tensor qh = ad::slice_cols(qp, h * dh, (h + 1) * dh);
    const ad::Tensor kh = ad::slice_cols(kp, h * dh, (h + 1) * dh);
    const ad::Tensor vh = ad::slice_cols(vp, h * dh, (h + 1) * dh);
    ad::Tensor scores = ad::scale(ad::matmul_nt(qh, kh), inv_sqrt);
    ad::Tensor attn = allowed ? ad::softmax_rows_masked(scores, *allowed) : ad::softmax_rows(scores);
    const ad::Tensor oh = ad::matmul(attn, vh);
    merged = h == 0 ? oh : ad::concat_cols(merged, oh);
  }
  return ad::linear(merged, p.wo, p.bo);
}

inline ad::Tensor ffn(const ad::Tensor& x, const FfnParams& p) {
  return ad::linear(ad::relu(ad::linear(x, p.w1, p.b1)), p.w2, p.b2);
}

inline ad::Tensor layer_norm(const ad::Tensor& x, const LayerNormParams& p) {
  return ad::layer_norm_rows(x, p.gain, p.bias);
}

// Fixed 2-D sine/cosine positional encoding, [h*w, dim] row-major over pixels.
ad::Array sine_position_encoding(int h, int w, int dim);

}  // namespace nn
}  // namespace refvos
