#include "refvos/decoder.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace refvos {

DecoderParams DecoderParams::create(ParamRegistry& reg, const RunConfig& cfg, std::uint64_t seed) {
  DecoderParams p;
  const int cq = cfg.query_dim, d = cfg.text_dim, dm = cfg.mask_dim;
  p.w_init = nn::xavier_param(reg, "decoder.w_init", {cq, d}, d, cq, seed);
  {
    // b_i: small distinct offsets so queries break symmetry from the start.
    Rng rng = derive_rng(seed, "decoder.query_bias");
    ad::Array b(static_cast<std::int64_t>(cfg.num_queries) * cq);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = rng.normal() * 0.1;
    p.query_bias = reg.add("decoder.query_bias",
                           ad::Tensor::parameter({cfg.num_queries, cq}, std::move(b)));
  }
  p.text_kv_w = nn::xavier_param(reg, "decoder.text_kv.w", {cq, d}, d, cq, seed);
  p.text_kv_b = nn::zeros_param(reg, "decoder.text_kv.b", {1, cq});
  p.in8_w = nn::xavier_param(reg, "decoder.in8.w", {cq, kStageChannels[1]}, kStageChannels[1], cq, seed);
  p.in8_b = nn::zeros_param(reg, "decoder.in8.b", {1, cq});
  p.in16_w = nn::xavier_param(reg, "decoder.in16.w", {cq, kStageChannels[2]}, kStageChannels[2], cq, seed);
  p.in16_b = nn::zeros_param(reg, "decoder.in16.b", {1, cq});
  p.in32_w = nn::xavier_param(reg, "decoder.in32.w", {cq, kStageChannels[3]}, kStageChannels[3], cq, seed);
  p.in32_b = nn::zeros_param(reg, "decoder.in32.b", {1, cq});
  for (int l = 0; l < cfg.decoder_layers; ++l) {
    const std::string prefix = "decoder.layer" + std::to_string(l);
    DecoderLayerParams lp;
    lp.cross = nn::AttentionParams::create(reg, prefix + ".cross", cq, seed);
    lp.ln_cross = nn::LayerNormParams::create(reg, prefix + ".ln_cross", cq);
    lp.self = nn::AttentionParams::create(reg, prefix + ".self", cq, seed);
    lp.ln_self = nn::LayerNormParams::create(reg, prefix + ".ln_self", cq);
    lp.ffn = nn::FfnParams::create(reg, prefix + ".ffn", cq, 4 * cq, seed);
    lp.ln_ffn = nn::LayerNormParams::create(reg, prefix + ".ln_ffn", cq);
    p.layers.push_back(std::move(lp));
  }
  p.cls_w = nn::xavier_param(reg, "decoder.cls.w", {cfg.num_classes + 1, cq + d}, cq + d,
                             cfg.num_classes + 1, seed);
  p.cls_b = nn::zeros_param(reg, "decoder.cls.b", {1, cfg.num_classes + 1});
  p.mask_w1 = nn::he_param(reg, "decoder.mask.w1", {cq, cq}, cq, seed);
  p.mask_b1 = nn::zeros_param(reg, "decoder.mask.b1", {1, cq});
  p.mask_w2 = nn::xavier_param(reg, "decoder.mask.w2", {dm, cq}, cq, dm, seed);
  p.mask_b2 = nn::zeros_param(reg, "decoder.mask.b2", {1, dm});
  return p;
}

QuerySet init_queries(const TextEmbedding& text, const DecoderParams& params, int frames) {
  if (text.vector.size() != params.w_init.cols())
    throw std::invalid_argument("init_queries: text dimension mismatch");
  if (frames < 1) throw std::invalid_argument("init_queries: need at least one frame");
  const ad::Tensor ft = ad::Tensor::constant({1, static_cast<int>(text.vector.size())}, text.vector);
  const ad::Tensor base = ad::matmul_nt(ft, params.w_init);  // [1, C_Q]
  const ad::Tensor q0 = ad::add_rowvec(params.query_bias, base);
  QuerySet qs;
  qs.layer = 0;
  qs.per_frame.assign(frames, q0);  // one shared node: the broadcast is exact
  return qs;
}

namespace {

struct LevelView {
  const std::vector<ad::Tensor>* feats;  // backbone level, [C, HW]
  const ad::Tensor *w, *b;               // projection to C_Q
  int h, w_px;
};

// Positional encodings are pure functions of (h, w, dim); cached per shape.
const ad::Array& cached_pe(int h, int w, int dim) {
  static std::map<std::tuple<int, int, int>, ad::Array> cache;
  auto key = std::make_tuple(h, w, dim);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, nn::sine_position_encoding(h, w, dim)).first;
  return it->second;
}

// Numeric-only mask head evaluation used to build attention masks; the hard
// 0.5 threshold is not differentiated through.
Eigen::ArrayXd eval_mask_probs(const Eigen::ArrayXd& q, int n, int cq, const DecoderParams& p,
                               const Eigen::ArrayXd& fmask, int dm, int hw) {
  using MatRM = ad::MatRM;
  Eigen::Map<const MatRM> Q(q.data(), n, cq);
  Eigen::Map<const MatRM> W1(p.mask_w1.value().data(), cq, cq);
  Eigen::Map<const MatRM> W2(p.mask_w2.value().data(), dm, cq);
  Eigen::Map<const MatRM> F(fmask.data(), dm, hw);
  MatRM hidden = (Q * W1.transpose()).cwiseMax(0.0);
  hidden.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(p.mask_b1.value().data(), cq);
  MatRM emb = hidden * W2.transpose();
  emb.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(p.mask_b2.value().data(), dm);
  MatRM logits = emb * F;
  Eigen::ArrayXd probs(static_cast<std::int64_t>(n) * hw);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < hw; ++j) {
      const double z = logits(i, j);
      probs[static_cast<std::int64_t>(i) * hw + j] =
          z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    }
  return probs;
}

}  // namespace

QuerySet decode(const QuerySet& queries, const FeaturePyramid& pyramid, const TextEmbedding& text,
                const DecoderParams& params, const RunConfig& cfg) {
  if (queries.layer != 0) throw std::invalid_argument("decode: queries must be at layer 0");
  if (queries.frames() != pyramid.frames())
    throw std::invalid_argument("decode: query/pyramid frame count mismatch");

  const int cq = cfg.query_dim;
  const int n = cfg.num_queries;
  const int h4 = pyramid.h4(), w4 = pyramid.w4();
  const LevelView levels[3] = {
      {&pyramid.s32, &params.in32_w, &params.in32_b, pyramid.h / 32, pyramid.w / 32},
      {&pyramid.s16, &params.in16_w, &params.in16_b, pyramid.h / 16, pyramid.w / 16},
      {&pyramid.s8, &params.in8_w, &params.in8_b, pyramid.h / 8, pyramid.w / 8},
  };

  const ad::Tensor ft = ad::Tensor::constant({1, static_cast<int>(text.vector.size())}, text.vector);
  const ad::Tensor text_token = ad::linear(ft, params.text_kv_w, params.text_kv_b);  // [1, C_Q]

  QuerySet out;
  out.layer = static_cast<int>(params.layers.size());
  out.per_frame.reserve(queries.frames());

  for (int t = 0; t < queries.frames(); ++t) {
    ad::Tensor q = queries.per_frame[t];
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
      const DecoderLayerParams& lp = params.layers[l];
      const LevelView& lv = levels[l % 3];
      const int hw = lv.h * lv.w_px;

      // Keys/values: projected level pixels plus the text token; positional
      // encoding goes on keys only.
      const ad::Tensor proj =
          ad::transpose(ad::add_colvec(ad::matmul(*lv.w, (*lv.feats)[t]),
                                       ad::reshape(*lv.b, {cq, 1})));  // [HW, C_Q]
      const ad::Tensor pe = ad::Tensor::constant({hw, cq}, cached_pe(lv.h, lv.w_px, cq));
      const ad::Tensor keys = ad::concat_rows({ad::add(proj, pe), text_token});
      const ad::Tensor values = ad::concat_rows({proj, text_token});

      std::vector<std::uint8_t> allowed;
      const std::vector<std::uint8_t>* allowed_ptr = nullptr;
      if (cfg.masked_attention && l > 0) {
        const Eigen::ArrayXd probs = eval_mask_probs(q.value(), n, cq, params,
                                                     pyramid.mask_features[t].value(),
                                                     cfg.mask_dim, h4 * w4);
        allowed.assign(static_cast<std::size_t>(n) * (hw + 1), 0);
        const int fy = h4 / lv.h, fx = w4 / lv.w_px;
        for (int i = 0; i < n; ++i) {
          for (int y = 0; y < lv.h; ++y)
            for (int x = 0; x < lv.w_px; ++x) {
              const int sy = y * fy + fy / 2, sx = x * fx + fx / 2;
              const double pr = probs[static_cast<std::int64_t>(i) * h4 * w4 + sy * w4 + sx];
              allowed[static_cast<std::size_t>(i) * (hw + 1) + y * lv.w_px + x] = pr >= 0.5;
            }
          allowed[static_cast<std::size_t>(i) * (hw + 1) + hw] = 1;  // text always visible
        }
        allowed_ptr = &allowed;
      }

      // Pre-norm residual blocks.
      q = ad::add(q, nn::multihead_attention(nn::layer_norm(q, lp.ln_cross), keys, values,
                                             cfg.attention_heads, lp.cross, allowed_ptr));
      const ad::Tensor qn = nn::layer_norm(q, lp.ln_self);
      q = ad::add(q, nn::multihead_attention(qn, qn, qn, cfg.attention_heads, lp.self));
      q = ad::add(q, nn::ffn(nn::layer_norm(q, lp.ln_ffn), lp.ffn));
    }
    out.per_frame.push_back(q);
  }
  return out;
}

std::vector<ad::Tensor> classify(const QuerySet& queries, const TextEmbedding& text,
                                 const DecoderParams& params) {
  const int d = static_cast<int>(text.vector.size());
  std::vector<ad::Tensor> out;
  out.reserve(queries.frames());
  for (int t = 0; t < queries.frames(); ++t) {
    const int n = queries.per_frame[t].rows();
    ad::Array rep(static_cast<std::int64_t>(n) * d);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) rep[static_cast<std::int64_t>(i) * d + j] = text.vector[j];
    const ad::Tensor ft_rows = ad::Tensor::constant({n, d}, std::move(rep));
    out.push_back(ad::linear(ad::concat_cols(queries.per_frame[t], ft_rows), params.cls_w,
                             params.cls_b));
  }
  return out;
}

std::vector<ad::Tensor> embed_masks(const QuerySet& queries, const DecoderParams& params) {
  std::vector<ad::Tensor> out;
  out.reserve(queries.frames());
  for (const auto& q : queries.per_frame)
    out.push_back(ad::linear(ad::relu(ad::linear(q, params.mask_w1, params.mask_b1)),
                             params.mask_w2, params.mask_b2));
  return out;
}

std::vector<ad::Tensor> predict_mask_logits(const std::vector<ad::Tensor>& mask_embeddings,
                                            const std::vector<ad::Tensor>& mask_features) {
  if (mask_embeddings.size() != mask_features.size())
    throw std::invalid_argument("predict_masks: frame count mismatch");
  std::vector<ad::Tensor> out;
  out.reserve(mask_embeddings.size());
  for (std::size_t t = 0; t < mask_embeddings.size(); ++t)
    out.push_back(ad::matmul(mask_embeddings[t], mask_features[t]));
  return out;
}

std::vector<ad::Tensor> predict_masks(const std::vector<ad::Tensor>& mask_embeddings,
                                      const std::vector<ad::Tensor>& mask_features) {
  auto logits = predict_mask_logits(mask_embeddings, mask_features);
  for (auto& t : logits) t = ad::sigmoid(t);
  return logits;
}

std::vector<std::uint8_t> select_queries(const Eigen::ArrayXd& class_logits, int num_queries,
                                         int num_classes, double tau) {
  if (!(tau > 0.0 && tau < 1.0))
    throw std::invalid_argument("select_queries: tau must lie in (0,1)");
  const int c1 = num_classes + 1;
  if (class_logits.size() != static_cast<std::int64_t>(num_queries) * c1)
    throw std::invalid_argument("select_queries: logits size mismatch");
  std::vector<std::uint8_t> kept(num_queries, 0);
  for (int i = 0; i < num_queries; ++i) {
    const std::int64_t off = static_cast<std::int64_t>(i) * c1;
    double mx = class_logits[off];
    for (int j = 1; j < c1; ++j) mx = std::max(mx, class_logits[off + j]);
    double denom = 0.0;
    for (int j = 0; j < c1; ++j) denom += std::exp(class_logits[off + j] - mx);
    double best_fg = 0.0;
    for (int j = 0; j < num_classes; ++j)
      best_fg = std::max(best_fg, std::exp(class_logits[off + j] - mx) / denom);
    kept[i] = best_fg > tau;
  }
  return kept;
}

}  // namespace refvos
