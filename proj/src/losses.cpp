#include "refvos/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace refvos {

namespace {

constexpr double kEps = 1e-6;

double bce_scalar(const double* p, const double* t, std::int64_t n) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double pc = std::min(std::max(p[i], kEps), 1.0 - kEps);
    acc += -(t[i] * std::log(pc) + (1.0 - t[i]) * std::log(1.0 - pc));
  }
  return acc / static_cast<double>(n);
}

double soft_dice_scalar(const double* p, const double* t, std::int64_t n) {
  double inter = 0.0, ps = 0.0, ts = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    inter += p[i] * t[i];
    ps += p[i];
    ts += t[i];
  }
  return (2.0 * inter + 1.0) / (ps + ts + 1.0);
}

}  // namespace

MatchResult hungarian_match(const Eigen::ArrayXd& cost, int num_queries, int num_objects) {
  if (cost.size() != static_cast<std::int64_t>(num_queries) * num_objects)
    throw std::invalid_argument("hungarian_match: cost matrix size mismatch");
  if (num_objects > num_queries)
    throw std::invalid_argument("hungarian_match: more objects than queries");
  for (Eigen::Index i = 0; i < cost.size(); ++i)
    if (!std::isfinite(cost[i]))
      throw std::invalid_argument("hungarian_match: non-finite cost entry");

  MatchResult result;
  if (num_objects == 0) return result;

  // Potentials-based assignment (rows = objects, columns = queries).
  const int g = num_objects, n = num_queries;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(g + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  auto at = [&cost, g](int obj, int query) {  // 1-based in, row-major [query, obj] storage
    return cost[static_cast<std::int64_t>(query - 1) * g + (obj - 1)];
  };
  for (int i = 1; i <= g; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = at(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  for (int j = 1; j <= n; ++j) {
    if (p[j] != 0) {
      result.pairs.emplace_back(j - 1, p[j] - 1);
      result.total_cost += at(p[j], j);
    }
  }
  std::sort(result.pairs.begin(), result.pairs.end());
  return result;
}

Eigen::ArrayXd downsample_mask_nearest(const std::vector<std::uint8_t>& mask, int h, int w,
                                       int object_id, int factor) {
  const int oh = h / factor, ow = w / factor;
  Eigen::ArrayXd out(static_cast<std::int64_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const int sy = y * factor + factor / 2, sx = x * factor + factor / 2;
      out[static_cast<std::int64_t>(y) * ow + x] =
          mask[static_cast<std::size_t>(sy) * w + sx] == object_id ? 1.0 : 0.0;
    }
  return out;
}

Eigen::ArrayXd match_cost(const std::vector<Eigen::ArrayXd>& class_logits,
                          const std::vector<Eigen::ArrayXd>& mask_probs,
                          const SampleTargets& targets, const LossWeights& weights,
                          int num_queries, int num_classes) {
  const int g = targets.objects();
  Eigen::ArrayXd cost(static_cast<std::int64_t>(num_queries) * g);
  if (g == 0) return cost;
  const int frames = targets.frames();
  if (static_cast<int>(class_logits.size()) != frames ||
      static_cast<int>(mask_probs.size()) != frames)
    throw std::invalid_argument("match_cost: frame count mismatch");
  const int c1 = num_classes + 1;
  const std::int64_t hw = targets.masks4.front().front().size();

  cost.setZero();
  for (int f = 0; f < frames; ++f) {
    for (int q = 0; q < num_queries; ++q) {
      // log-softmax of the query's class logits
      const double* row = class_logits[f].data() + static_cast<std::int64_t>(q) * c1;
      double mx = row[0];
      for (int j = 1; j < c1; ++j) mx = std::max(mx, row[j]);
      double lse = 0.0;
      for (int j = 0; j < c1; ++j) lse += std::exp(row[j] - mx);
      lse = mx + std::log(lse);
      const double* pm = mask_probs[f].data() + static_cast<std::int64_t>(q) * hw;
      for (int obj = 0; obj < g; ++obj) {
        const double neg_logp = lse - row[targets.class_ids[obj]];
        const double* tm = targets.masks4[obj][f].data();
        cost[static_cast<std::int64_t>(q) * g + obj] +=
            weights.cls * neg_logp + weights.bce * bce_scalar(pm, tm, hw) +
            weights.dice * (1.0 - soft_dice_scalar(pm, tm, hw));
      }
    }
  }
  return cost;
}

FrameLossTerms frame_loss(const FramePredictionTape& pred, const SampleTargets& targets,
                          const MatchResult& match, int num_classes) {
  const int frames = static_cast<int>(pred.class_logits.size());
  if (frames == 0) throw std::invalid_argument("frame_loss: no frames");
  const int n = pred.class_logits.front().rows();

  ad::Tensor cls_acc, bce_acc, dice_acc;
  int mask_terms = 0;
  for (int f = 0; f < frames; ++f) {
    std::vector<int> labels(n, num_classes);  // background
    for (const auto& [q, obj] : match.pairs)
      if (targets.visible[obj][f]) labels[q] = targets.class_ids[obj];
    const ad::Tensor ce = ad::softmax_xent_rows(pred.class_logits[f], labels);
    cls_acc = f == 0 ? ce : ad::add(cls_acc, ce);

    for (const auto& [q, obj] : match.pairs) {
      const ad::Tensor row = ad::slice_rows(pred.masks[f], q, q + 1);
      const ad::Tensor b =
          pred.mask_logits.empty()
              ? ad::bce_mean_probs(row, targets.masks4[obj][f], kEps)
              : ad::bce_logits_mean(ad::slice_rows(pred.mask_logits[f], q, q + 1),
                                    targets.masks4[obj][f]);
      const ad::Tensor d = ad::dice_loss(row, targets.masks4[obj][f]);
      bce_acc = mask_terms == 0 ? b : ad::add(bce_acc, b);
      dice_acc = mask_terms == 0 ? d : ad::add(dice_acc, d);
      ++mask_terms;
    }
  }

  FrameLossTerms out;
  out.cls = ad::scale(cls_acc, 1.0 / frames);
  if (mask_terms > 0) {
    out.bce = ad::scale(bce_acc, 1.0 / mask_terms);
    out.dice = ad::scale(dice_acc, 1.0 / mask_terms);
  } else {
    out.bce = ad::Tensor::scalar_const(0.0);
    out.dice = ad::Tensor::scalar_const(0.0);
  }
  return out;
}

ad::Tensor temporal_similarity_loss(const std::vector<ad::Tensor>& queries,
                                    const MatchResult& match) {
  const int frames = static_cast<int>(queries.size());
  if (frames < 2 || match.pairs.empty()) return ad::Tensor::scalar_const(0.0);

  ad::Tensor acc = ad::Tensor::scalar_const(0.0);
  int terms = 0;
  for (const auto& [q, obj] : match.pairs) {
    (void)obj;
    for (int f = 0; f + 1 < frames; ++f) {
      const ad::Tensor a = ad::slice_rows(queries[f], q, q + 1);
      const ad::Tensor b = ad::slice_rows(queries[f + 1], q, q + 1);
      const bool a_zero = (a.value() * a.value()).sum() < 1e-24;
      const bool b_zero = (b.value() * b.value()).sum() < 1e-24;
      if (!a_zero && !b_zero)
        acc = ad::add(acc, ad::sub(ad::Tensor::scalar_const(1.0), ad::cosine_sim(a, b)));
      ++terms;  // zero-vector pairs still count with a 0 contribution
    }
  }
  return ad::scale(acc, 1.0 / terms);
}

ad::Tensor video_mask_loss(const FramePredictionTape& pred, const SampleTargets& targets,
                           const MatchResult& match) {
  if (match.pairs.empty()) return ad::Tensor::scalar_const(0.0);
  const int frames = static_cast<int>(pred.masks.size());
  const std::int64_t hw = targets.masks4.front().front().size();

  ad::Tensor acc;
  int terms = 0;
  for (const auto& [q, obj] : match.pairs) {
    std::vector<ad::Tensor> vol_rows, logit_rows;
    Eigen::ArrayXd vol_target(static_cast<std::int64_t>(frames) * hw);
    for (int f = 0; f < frames; ++f) {
      vol_rows.push_back(ad::slice_rows(pred.masks[f], q, q + 1));
      if (!pred.mask_logits.empty())
        logit_rows.push_back(ad::slice_rows(pred.mask_logits[f], q, q + 1));
      vol_target.segment(static_cast<std::int64_t>(f) * hw, hw) = targets.masks4[obj][f];
    }
    const ad::Tensor vol = ad::concat_rows(vol_rows);  // [F, hw], pooled by the loss
    const ad::Tensor bce = logit_rows.empty()
                               ? ad::bce_mean_probs(vol, vol_target, kEps)
                               : ad::bce_logits_mean(ad::concat_rows(logit_rows), vol_target);
    const ad::Tensor term = ad::add(bce, ad::dice_loss(vol, vol_target));
    acc = terms == 0 ? term : ad::add(acc, term);
    ++terms;
  }
  return ad::scale(acc, 1.0 / terms);
}

ad::Tensor total_loss(const LossTerms& terms, const LossWeights& weights) {
  if (weights.cls < 0 || weights.bce < 0 || weights.dice < 0 || weights.temporal < 0 ||
      weights.video < 0 || weights.keyframe < 0)
    throw std::invalid_argument("total_loss: negative loss weight");
  ad::Tensor total = ad::scale(terms.cls, weights.cls);
  total = ad::add(total, ad::scale(terms.mask_bce, weights.bce));
  total = ad::add(total, ad::scale(terms.mask_dice, weights.dice));
  total = ad::add(total, ad::scale(terms.temporal, weights.temporal));
  total = ad::add(total, ad::scale(terms.video_mask, weights.video));
  total = ad::add(total, ad::scale(terms.keyframe_aux, weights.keyframe));
  return total;
}

LossBreakdown breakdown_values(const LossTerms& terms, const LossWeights& weights) {
  LossBreakdown b;
  b.cls = terms.cls.item();
  b.mask_bce = terms.mask_bce.item();
  b.mask_dice = terms.mask_dice.item();
  b.temporal = terms.temporal.item();
  b.video_mask = terms.video_mask.item();
  b.keyframe_aux = terms.keyframe_aux.item();
  b.total = weights.cls * b.cls + weights.bce * b.mask_bce + weights.dice * b.mask_dice +
            weights.temporal * b.temporal + weights.video * b.video_mask +
            weights.keyframe * b.keyframe_aux;
  return b;
}

}  // namespace refvos
