#include "refvos/temporal.hpp"

#include <stdexcept>

namespace refvos {

InterframeParams InterframeParams::create(ParamRegistry& reg, const RunConfig& cfg,
                                          std::uint64_t seed) {
  InterframeParams p;
  for (int b = 0; b < cfg.interframe_blocks; ++b) {
    const std::string prefix = "interframe.block" + std::to_string(b);
    InterframeBlockParams bp;
    bp.attn = nn::AttentionParams::create(reg, prefix + ".attn", cfg.query_dim, seed);
    bp.ln_attn = nn::LayerNormParams::create(reg, prefix + ".ln_attn", cfg.query_dim);
    bp.ffn = nn::FfnParams::create(reg, prefix + ".ffn", cfg.query_dim, 4 * cfg.query_dim, seed);
    bp.ln_ffn = nn::LayerNormParams::create(reg, prefix + ".ln_ffn", cfg.query_dim);
    p.blocks.push_back(std::move(bp));
  }
  {
    Rng rng = derive_rng(seed, "interframe.temporal_embed");
    ad::Array e(static_cast<std::int64_t>(kMaxTemporalSlots) * cfg.query_dim);
    for (Eigen::Index i = 0; i < e.size(); ++i) e[i] = rng.normal() * 0.02;
    p.temporal_embed = reg.add("interframe.temporal_embed",
                               ad::Tensor::parameter({kMaxTemporalSlots, cfg.query_dim}, std::move(e)));
  }
  return p;
}

std::vector<ad::Tensor> interframe_attend(const std::vector<ad::Tensor>& queries,
                                          const InterframeParams& params, const RunConfig& cfg) {
  const int tprime = static_cast<int>(queries.size());
  if (tprime < 1) throw std::invalid_argument("interframe_attend: need at least one frame");
  const int n = queries.front().rows();
  const int cq = queries.front().cols();
  for (const auto& q : queries)
    if (q.rows() != n || q.cols() != cq)
      throw std::invalid_argument("interframe_attend: inconsistent query shapes");

  ad::Tensor flat = ad::concat_rows(queries);  // [T'*N, C_Q], row-major flatten
  if (cfg.temporal_pos_embed) {
    if (tprime > kMaxTemporalSlots)
      throw std::invalid_argument("interframe_attend: T' exceeds temporal embedding slots");
    std::vector<ad::Tensor> rows;
    rows.reserve(static_cast<std::size_t>(tprime) * n);
    for (int t = 0; t < tprime; ++t) {
      const ad::Tensor row = ad::slice_rows(params.temporal_embed, t, t + 1);
      for (int i = 0; i < n; ++i) rows.push_back(row);
    }
    flat = ad::add(flat, ad::concat_rows(rows));
  }

  for (const auto& block : params.blocks) {
    const ad::Tensor normed = nn::layer_norm(flat, block.ln_attn);
    flat = ad::add(flat, nn::multihead_attention(normed, normed, normed, cfg.attention_heads,
                                                 block.attn));
    flat = ad::add(flat, nn::ffn(nn::layer_norm(flat, block.ln_ffn), block.ffn));
  }

  std::vector<ad::Tensor> out;
  out.reserve(tprime);
  for (int t = 0; t < tprime; ++t) out.push_back(ad::slice_rows(flat, t * n, (t + 1) * n));
  return out;
}

}  // namespace refvos
