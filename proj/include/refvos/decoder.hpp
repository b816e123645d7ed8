#pragma once

#include <cstdint>
#include <vector>

#include "refvos/backbone.hpp"
#include "refvos/config.hpp"
#include "refvos/nn.hpp"
#include "refvos/text_encoder.hpp"

namespace refvos {

// Per-frame language-conditioned object queries. All frames share the layer-0
// node (the init is broadcast), later layers diverge per frame. The same N
// queries serve both decoding and frame-level aggregation.
struct QuerySet {
  std::vector<ad::Tensor> per_frame;  // each [N, C_Q]
  int layer = 0;

  int frames() const { return static_cast<int>(per_frame.size()); }
};

struct DecoderLayerParams {
  nn::AttentionParams cross, self;
  nn::FfnParams ffn;
  nn::LayerNormParams ln_cross, ln_self, ln_ffn;
};

struct DecoderParams {
  ad::Tensor w_init;      // [C_Q, d]
  ad::Tensor query_bias;  // [N, C_Q], the per-query b_i
  ad::Tensor text_kv_w, text_kv_b;  // text token projected into every cross-attention
  ad::Tensor in8_w, in8_b, in16_w, in16_b, in32_w, in32_b;  // level projections to C_Q
  std::vector<DecoderLayerParams> layers;
  ad::Tensor cls_w, cls_b;                        // [(C+1), C_Q + d]
  ad::Tensor mask_w1, mask_b1, mask_w2, mask_b2;  // 2-layer mask-embedding MLP

  static DecoderParams create(ParamRegistry& reg, const RunConfig& cfg, std::uint64_t seed);
};

// Eq-1 style init: q_i = W_init * F_text + b_i, identical across frames.
QuerySet init_queries(const TextEmbedding& text, const DecoderParams& params, int frames);

// L rounds of masked cross-attention (levels round-robin 32 -> 16 -> 8, text
// token appended to keys/values), self-attention, feed-forward. When
// `masked_attention` is on, layer l >= 1 attends only where the layer l-1
// mask prediction is at least 0.5 (computed with the current mask head; rows
// with no admissible pixel fall back to full attention).
QuerySet decode(const QuerySet& queries, const FeaturePyramid& pyramid, const TextEmbedding& text,
                const DecoderParams& params, const RunConfig& cfg);

// Per-frame class logits [N, C+1] from [q || F_text].
std::vector<ad::Tensor> classify(const QuerySet& queries, const TextEmbedding& text,
                                 const DecoderParams& params);

// Per-frame mask embeddings [N, d_m].
std::vector<ad::Tensor> embed_masks(const QuerySet& queries, const DecoderParams& params);

// Per-frame mask logits [N, (h/4)*(w/4)] = <e_i, F_mask>.
std::vector<ad::Tensor> predict_mask_logits(const std::vector<ad::Tensor>& mask_embeddings,
                                            const std::vector<ad::Tensor>& mask_features);

// Per-frame probability masks, sigmoid of the logits.
std::vector<ad::Tensor> predict_masks(const std::vector<ad::Tensor>& mask_embeddings,
                                      const std::vector<ad::Tensor>& mask_features);

// kept_i = [max foreground softmax probability > tau]; background never keeps.
std::vector<std::uint8_t> select_queries(const Eigen::ArrayXd& class_logits, int num_queries,
                                         int num_classes, double tau);

}  // namespace refvos
