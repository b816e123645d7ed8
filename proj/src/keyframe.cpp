#include "refvos/keyframe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace refvos {

ScorerParams ScorerParams::create(ParamRegistry& reg, const RunConfig& cfg, std::uint64_t seed) {
  ScorerParams p;
  p.w1 = nn::he_param(reg, "scorer.w1", {cfg.scorer_hidden, cfg.query_dim}, cfg.query_dim, seed);
  p.b1 = nn::zeros_param(reg, "scorer.b1", {1, cfg.scorer_hidden});
  p.w2 = nn::xavier_param(reg, "scorer.w2", {1, cfg.scorer_hidden}, cfg.scorer_hidden, 1, seed);
  p.b = nn::zeros_param(reg, "scorer.b", {1, 1});
  return p;
}

ad::Tensor aggregate_frames(const QuerySet& queries) {
  if (queries.frames() == 0) throw std::invalid_argument("aggregate_frames: no frames");
  std::vector<ad::Tensor> rows;
  rows.reserve(queries.frames());
  for (const auto& q : queries.per_frame) rows.push_back(ad::mean_rows(q));
  return ad::concat_rows(rows);  // [T, C_Q]
}

FrameScores score_frames(const ad::Tensor& frame_embeddings, const ScorerParams& params) {
  const ad::Tensor hidden = ad::relu(ad::linear(frame_embeddings, params.w1, params.b1));
  const ad::Tensor logits = ad::add_rowvec(ad::matmul_nt(hidden, params.w2), params.b);
  return {logits, ad::sigmoid(logits)};
}

std::vector<int> select_top_frames(const std::vector<double>& scores, int t_prime) {
  if (t_prime < 1) throw std::invalid_argument("select_top_frames: T' must be at least 1");
  const int t = static_cast<int>(scores.size());
  std::vector<int> order(t);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&scores](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;  // tie toward the lower index
  });
  order.resize(std::min(t_prime, t));
  std::sort(order.begin(), order.end());
  return order;
}

SelectionStrategy strategy_from_string(const std::string& s) {
  if (s == "ours") return SelectionStrategy::ours;
  if (s == "uniform") return SelectionStrategy::uniform;
  if (s == "cosine") return SelectionStrategy::cosine;
  throw std::invalid_argument("unknown key-frame selection strategy '" + s + "'");
}

const char* to_string(SelectionStrategy s) {
  switch (s) {
    case SelectionStrategy::ours: return "ours";
    case SelectionStrategy::uniform: return "uniform";
    case SelectionStrategy::cosine: return "cosine";
  }
  return "ours";
}

std::vector<int> baseline_select(SelectionStrategy strategy, const Eigen::ArrayXd& frame_embeddings,
                                 int frames, int query_dim, const Eigen::ArrayXd& text_projected,
                                 int t_prime) {
  if (t_prime < 1) throw std::invalid_argument("baseline_select: T' must be at least 1");
  if (strategy == SelectionStrategy::uniform) {
    if (t_prime == 1) return {frames / 2};
    std::vector<int> out;
    for (int k = 0; k < std::min(t_prime, frames); ++k) {
      const int idx = static_cast<int>(
          std::lround(static_cast<double>(k) * (frames - 1) / (std::min(t_prime, frames) - 1)));
      if (out.empty() || out.back() != idx) out.push_back(idx);
    }
    return out;
  }
  if (strategy == SelectionStrategy::cosine) {
    if (frame_embeddings.size() != static_cast<std::int64_t>(frames) * query_dim)
      throw std::invalid_argument("baseline_select: embedding size mismatch");
    if (text_projected.size() != query_dim)
      throw std::invalid_argument("baseline_select: projected text size mismatch");
    std::vector<double> sims(frames, 0.0);
    const double tn = std::sqrt((text_projected * text_projected).sum());
    for (int t = 0; t < frames; ++t) {
      double dot = 0.0, en = 0.0;
      for (int j = 0; j < query_dim; ++j) {
        const double e = frame_embeddings[static_cast<std::int64_t>(t) * query_dim + j];
        dot += e * text_projected[j];
        en += e * e;
      }
      const double denom = std::sqrt(en) * tn;
      sims[t] = denom < 1e-24 ? 0.0 : dot / denom;
    }
    return select_top_frames(sims, t_prime);
  }
  throw std::invalid_argument("baseline_select: strategy must be uniform or cosine");
}

}  // namespace refvos
