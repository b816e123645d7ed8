#include "refvos/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace refvos {

namespace {

void require_same_shape(const BinaryMask& a, const BinaryMask& b, const char* who) {
  if (a.h != b.h || a.w != b.w)
    throw std::invalid_argument(std::string(who) + ": mask shape mismatch");
}

std::vector<std::uint8_t> boundary_pixels(const BinaryMask& m) {
  std::vector<std::uint8_t> out(m.grid.size(), 0);
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * m.w + x;
      if (!m.grid[i]) continue;
      const bool edge = y == 0 || y == m.h - 1 || x == 0 || x == m.w - 1;
      if (edge || !m.grid[i - 1] || !m.grid[i + 1] || !m.grid[i - m.w] || !m.grid[i + m.w])
        out[i] = 1;
    }
  return out;
}

// Chebyshev dilation by `r`: separable max filter with a (2r+1) window.
std::vector<std::uint8_t> dilate_chebyshev(const std::vector<std::uint8_t>& in, int h, int w,
                                           int r) {
  if (r == 0) return in;
  std::vector<std::uint8_t> tmp(in.size(), 0), out(in.size(), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = 0;
      for (int dx = -r; dx <= r && !v; ++dx) {
        const int xx = x + dx;
        if (xx >= 0 && xx < w) v = in[static_cast<std::size_t>(y) * w + xx];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = v;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = 0;
      for (int dy = -r; dy <= r && !v; ++dy) {
        const int yy = y + dy;
        if (yy >= 0 && yy < h) v = tmp[static_cast<std::size_t>(yy) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = v;
    }
  return out;
}

}  // namespace

double iou(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_shape(pred, gt, "iou");
  std::int64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.grid.size(); ++i) {
    const bool p = pred.grid[i], g = gt.grid[i];
    inter += p && g;
    uni += p || g;
  }
  if (uni == 0) return 1.0;  // both empty
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double dice(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_shape(pred, gt, "dice");
  std::int64_t inter = 0, pa = 0, ga = 0;
  for (std::size_t i = 0; i < pred.grid.size(); ++i) {
    const bool p = pred.grid[i], g = gt.grid[i];
    inter += p && g;
    pa += p;
    ga += g;
  }
  if (pa + ga == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(pa + ga);
}

int default_boundary_tolerance(int h, int w) {
  const double diag = std::sqrt(static_cast<double>(h) * h + static_cast<double>(w) * w);
  return std::max(1, static_cast<int>(std::lround(0.008 * diag)));
}

double boundary_f(const BinaryMask& pred, const BinaryMask& gt, int tolerance) {
  require_same_shape(pred, gt, "boundary_f");
  if (tolerance < 0) throw std::invalid_argument("boundary_f: tolerance must be non-negative");

  const auto pb = boundary_pixels(pred);
  const auto gb = boundary_pixels(gt);
  std::int64_t np = 0, ng = 0;
  for (const auto v : pb) np += v;
  for (const auto v : gb) ng += v;
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;

  const auto gd = dilate_chebyshev(gb, pred.h, pred.w, tolerance);
  const auto pd = dilate_chebyshev(pb, pred.h, pred.w, tolerance);
  std::int64_t p_hit = 0, g_hit = 0;
  for (std::size_t i = 0; i < pb.size(); ++i) {
    p_hit += pb[i] && gd[i];
    g_hit += gb[i] && pd[i];
  }
  const double precision = static_cast<double>(p_hit) / static_cast<double>(np);
  const double recall = static_cast<double>(g_hit) / static_cast<double>(ng);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

EvalReport evaluate(const std::vector<BinaryMask>& predictions, const VideoClip& gt,
                    const std::set<int>& target_ids, int boundary_tolerance) {
  if (static_cast<int>(predictions.size()) != gt.length())
    throw std::invalid_argument("evaluate: prediction/frame count mismatch");
  for (const int id : target_ids)
    if (!gt.find_object(id))
      throw std::invalid_argument("evaluate: unknown target object id " + std::to_string(id));
  if (target_ids.empty()) throw std::invalid_argument("evaluate: no target objects");

  const int tol = boundary_tolerance >= 0 ? boundary_tolerance
                                          : default_boundary_tolerance(gt.height, gt.width);

  EvalReport report;
  report.num_frames = gt.length();
  report.num_objects = static_cast<int>(target_ids.size());

  for (const int id : target_ids) {
    MetricValues acc;
    for (int t = 0; t < gt.length(); ++t) {
      BinaryMask gm{gt.height, gt.width, std::vector<std::uint8_t>(gt.masks[t].size(), 0)};
      for (std::size_t i = 0; i < gt.masks[t].size(); ++i) gm.grid[i] = gt.masks[t][i] == id;
      const double j = iou(predictions[t], gm);
      const double f = boundary_f(predictions[t], gm, tol);
      acc.j += j;
      acc.f += f;
      acc.dice += dice(predictions[t], gm);
      acc.iou += j;  // J is per-frame IoU
    }
    const double inv = 1.0 / gt.length();
    MetricValues v{acc.j * inv, acc.f * inv, 0.0, acc.dice * inv, acc.iou * inv};
    v.jf = 0.5 * (v.j + v.f);
    report.per_object[id] = v;
  }

  for (const auto& [id, v] : report.per_object) {
    (void)id;
    report.aggregate.j += v.j;
    report.aggregate.f += v.f;
    report.aggregate.dice += v.dice;
    report.aggregate.iou += v.iou;
  }
  const double inv = 1.0 / report.num_objects;
  report.aggregate.j *= inv;
  report.aggregate.f *= inv;
  report.aggregate.dice *= inv;
  report.aggregate.iou *= inv;
  report.aggregate.jf = 0.5 * (report.aggregate.j + report.aggregate.f);
  return report;
}

}  // namespace refvos
