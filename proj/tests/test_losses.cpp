#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "refvos/losses.hpp"
#include "refvos/rng.hpp"

using namespace refvos;
using ad::Tensor;

namespace {

Eigen::ArrayXd arr(std::initializer_list<double> v) {
  Eigen::ArrayXd a(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (const double x : v) a[i++] = x;
  return a;
}

}  // namespace

TEST_CASE("hungarian_match spec examples") {
  const MatchResult diag = hungarian_match(arr({0, 1, 1, 0}), 2, 2);
  REQUIRE(diag.pairs.size() == 2);
  CHECK(diag.pairs[0] == std::pair<int, int>{0, 0});
  CHECK(diag.pairs[1] == std::pair<int, int>{1, 1});

  const MatchResult anti = hungarian_match(arr({1, 0, 0, 1}), 2, 2);
  CHECK(anti.pairs[0] == std::pair<int, int>{0, 1});
  CHECK(anti.pairs[1] == std::pair<int, int>{1, 0});

  Eigen::ArrayXd bad = arr({0, 1, 1, 0});
  bad[2] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(hungarian_match(bad, 2, 2), std::invalid_argument);
  CHECK_THROWS_AS(hungarian_match(arr({0, 1, 1, 0}), 1, 4), std::invalid_argument);
}

TEST_CASE("hungarian_match equals exhaustive search") {
  Rng rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(1, 6));
    const int g = static_cast<int>(rng.uniform_int(0, std::min(n, 4)));
    Eigen::ArrayXd cost(static_cast<Eigen::Index>(n) * g);
    for (Eigen::Index i = 0; i < cost.size(); ++i) cost[i] = rng.uniform(-2.0, 5.0);
    const MatchResult got = hungarian_match(cost, n, g);
    CHECK(static_cast<int>(got.pairs.size()) == g);
    if (g == 0) continue;
    const double want = oracle::exhaustive_min_assignment(cost, n, g);
    CHECK(got.total_cost == doctest::Approx(want).epsilon(1e-10));
    // injective both ways
    std::set<int> qs, os;
    for (const auto& [q, o] : got.pairs) {
      qs.insert(q);
      os.insert(o);
    }
    CHECK(static_cast<int>(qs.size()) == g);
    CHECK(static_cast<int>(os.size()) == g);
  }
}

namespace {

// A tiny synthetic prediction/target setup on a 4x4 stride grid.
struct TinyCase {
  std::vector<Eigen::ArrayXd> logits_vals, mask_vals;
  SampleTargets targets;
  int n = 3, c = 2, hw = 16, frames = 2;

  explicit TinyCase(std::uint64_t seed) {
    Rng rng(seed);
    for (int f = 0; f < frames; ++f) {
      Eigen::ArrayXd lg(n * (c + 1));
      for (Eigen::Index i = 0; i < lg.size(); ++i) lg[i] = rng.normal();
      logits_vals.push_back(lg);
      Eigen::ArrayXd mp(n * hw);
      for (Eigen::Index i = 0; i < mp.size(); ++i) mp[i] = rng.uniform(0.02, 0.98);
      mask_vals.push_back(mp);
    }
    targets.class_ids = {0, 1};
    for (int g = 0; g < 2; ++g) {
      std::vector<Eigen::ArrayXd> ms;
      std::vector<std::uint8_t> vis;
      for (int f = 0; f < frames; ++f) {
        Eigen::ArrayXd m(hw);
        for (int i = 0; i < hw; ++i) m[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
        ms.push_back(m);
        vis.push_back(1);
      }
      targets.masks4.push_back(ms);
      targets.visible.push_back(vis);
    }
  }
};

double hand_cost(const TinyCase& tc, const LossWeights& w, int q, int g) {
  double total = 0.0;
  for (int f = 0; f < tc.frames; ++f) {
    const int c1 = tc.c + 1;
    double mx = -1e300;
    for (int j = 0; j < c1; ++j) mx = std::max(mx, tc.logits_vals[f][q * c1 + j]);
    double lse = 0.0;
    for (int j = 0; j < c1; ++j) lse += std::exp(tc.logits_vals[f][q * c1 + j] - mx);
    const double logp = tc.logits_vals[f][q * c1 + tc.targets.class_ids[g]] - mx - std::log(lse);

    double bce = 0.0, inter = 0.0, ps = 0.0, ts = 0.0;
    for (int i = 0; i < tc.hw; ++i) {
      const double p = tc.mask_vals[f][q * tc.hw + i];
      const double t = tc.targets.masks4[g][f][i];
      bce += -(t * std::log(p) + (1 - t) * std::log(1 - p));
      inter += p * t;
      ps += p;
      ts += t;
    }
    bce /= tc.hw;
    const double dice_v = (2 * inter + 1) / (ps + ts + 1);
    total += w.cls * (-logp) + w.bce * bce + w.dice * (1 - dice_v);
  }
  return total;
}

}  // namespace

TEST_CASE("match_cost agrees with a hand-computed oracle") {
  TinyCase tc(88);
  LossWeights w;
  const Eigen::ArrayXd cost = match_cost(tc.logits_vals, tc.mask_vals, tc.targets, w, tc.n, tc.c);
  for (int q = 0; q < tc.n; ++q)
    for (int g = 0; g < 2; ++g)
      CHECK(cost[q * 2 + g] == doctest::Approx(hand_cost(tc, w, q, g)).epsilon(1e-9));

  // empty ground truth -> empty matrix
  SampleTargets none;
  const Eigen::ArrayXd empty = match_cost(tc.logits_vals, tc.mask_vals, none, w, tc.n, tc.c);
  CHECK(empty.size() == 0);
}

TEST_CASE("match_cost: uniform predictions give constant columns") {
  TinyCase tc(13);
  // make every query identical
  for (int f = 0; f < tc.frames; ++f)
    for (int q = 1; q < tc.n; ++q) {
      for (int j = 0; j < tc.c + 1; ++j)
        tc.logits_vals[f][q * (tc.c + 1) + j] = tc.logits_vals[f][j];
      for (int i = 0; i < tc.hw; ++i) tc.mask_vals[f][q * tc.hw + i] = tc.mask_vals[f][i];
    }
  LossWeights w;
  const Eigen::ArrayXd cost = match_cost(tc.logits_vals, tc.mask_vals, tc.targets, w, tc.n, tc.c);
  for (int g = 0; g < 2; ++g)
    for (int q = 1; q < tc.n; ++q) CHECK(cost[q * 2 + g] == doctest::Approx(cost[g]).epsilon(1e-12));
}

TEST_CASE("frame_loss: exact binary prediction drives dice and bce to zero") {
  SampleTargets targets;
  targets.class_ids = {1};
  Eigen::ArrayXd gt(16);
  for (int i = 0; i < 16; ++i) gt[i] = i % 3 == 0 ? 1.0 : 0.0;
  targets.masks4 = {{gt}};
  targets.visible = {{1}};

  FramePredictionTape pred;
  Eigen::ArrayXd logits = Eigen::ArrayXd::Zero(2 * 3);
  logits[0 * 3 + 1] = 50.0;  // query 0 says class 1
  logits[1 * 3 + 2] = 50.0;  // query 1 says background
  pred.class_logits = {Tensor::constant({2, 3}, logits)};
  Eigen::ArrayXd probs(2 * 16);
  for (int i = 0; i < 16; ++i) {
    probs[i] = gt[i];           // query 0 predicts the target exactly
    probs[16 + i] = 0.0;        // query 1 predicts nothing
  }
  pred.masks = {Tensor::constant({2, 16}, probs)};

  MatchResult match;
  match.pairs = {{0, 0}};
  const FrameLossTerms terms = frame_loss(pred, targets, match, 2);
  CHECK(terms.dice.item() == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(terms.cls.item() == doctest::Approx(0.0).epsilon(1e-9));
  // bce at exact {0,1} probabilities is capped by the clamp, tiny but nonzero
  CHECK(terms.bce.item() < 1e-4);
}

TEST_CASE("frame_loss: all-background with confident background queries is zero cls") {
  SampleTargets targets;  // no objects
  FramePredictionTape pred;
  Eigen::ArrayXd logits = Eigen::ArrayXd::Zero(2 * 3);
  logits[2] = 60.0;
  logits[5] = 60.0;
  pred.class_logits = {Tensor::constant({2, 3}, logits)};
  pred.masks = {Tensor::constant({2, 4}, Eigen::ArrayXd::Zero(8))};
  const FrameLossTerms terms = frame_loss(pred, targets, MatchResult{}, 2);
  CHECK(terms.cls.item() == doctest::Approx(0.0));
  CHECK(terms.bce.item() == 0.0);
  CHECK(terms.dice.item() == 0.0);
}

TEST_CASE("frame_loss matches a per-pixel oracle on a random case") {
  TinyCase tc(404);
  FramePredictionTape pred;
  for (int f = 0; f < tc.frames; ++f) {
    pred.class_logits.push_back(Tensor::constant({tc.n, tc.c + 1}, tc.logits_vals[f]));
    pred.masks.push_back(Tensor::constant({tc.n, tc.hw}, tc.mask_vals[f]));
  }
  MatchResult match;
  match.pairs = {{0, 0}, {2, 1}};
  const FrameLossTerms terms = frame_loss(pred, tc.targets, match, tc.c);

  double want_bce = 0.0, want_dice = 0.0, want_cls = 0.0;
  for (int f = 0; f < tc.frames; ++f) {
    std::vector<int> labels = {tc.targets.class_ids[0], tc.c, tc.targets.class_ids[1]};
    const int c1 = tc.c + 1;
    double ce = 0.0;
    for (int q = 0; q < tc.n; ++q) {
      double mx = -1e300;
      for (int j = 0; j < c1; ++j) mx = std::max(mx, tc.logits_vals[f][q * c1 + j]);
      double lse = 0.0;
      for (int j = 0; j < c1; ++j) lse += std::exp(tc.logits_vals[f][q * c1 + j] - mx);
      ce += -(tc.logits_vals[f][q * c1 + labels[q]] - mx - std::log(lse));
    }
    want_cls += ce / tc.n;
    int qi = 0;
    for (const auto& [q, g] : match.pairs) {
      (void)qi;
      double bce = 0.0, inter = 0.0, ps = 0.0, ts = 0.0;
      for (int i = 0; i < tc.hw; ++i) {
        const double p = tc.mask_vals[f][q * tc.hw + i];
        const double t = tc.targets.masks4[g][f][i];
        bce += -(t * std::log(p) + (1 - t) * std::log(1 - p));
        inter += p * t;
        ps += p;
        ts += t;
      }
      want_bce += bce / tc.hw;
      want_dice += 1.0 - (2 * inter + 1) / (ps + ts + 1);
    }
  }
  want_cls /= tc.frames;
  want_bce /= tc.frames * 2;
  want_dice /= tc.frames * 2;
  CHECK(terms.cls.item() == doctest::Approx(want_cls).epsilon(1e-9));
  CHECK(terms.bce.item() == doctest::Approx(want_bce).epsilon(1e-9));
  CHECK(terms.dice.item() == doctest::Approx(want_dice).epsilon(1e-9));
}

TEST_CASE("temporal similarity loss") {
  Rng rng(5);
  MatchResult match;
  match.pairs = {{0, 0}};

  SUBCASE("identical embeddings give zero") {
    Eigen::ArrayXd q(2 * 4);
    for (int i = 0; i < 8; ++i) q[i] = i < 4 ? 1.0 + i : 1.0 + (i - 4);
    std::vector<Tensor> frames = {Tensor::constant({2, 4}, q), Tensor::constant({2, 4}, q)};
    CHECK(temporal_similarity_loss(frames, match).item() == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("orthogonal unit embeddings give one") {
    Eigen::ArrayXd a = Eigen::ArrayXd::Zero(1 * 4), b = Eigen::ArrayXd::Zero(1 * 4);
    a[0] = 1.0;
    b[1] = 1.0;
    std::vector<Tensor> frames = {Tensor::constant({1, 4}, a), Tensor::constant({1, 4}, b)};
    CHECK(temporal_similarity_loss(frames, match).item() == doctest::Approx(1.0));
  }

  SUBCASE("zero vectors contribute zero") {
    Eigen::ArrayXd a = Eigen::ArrayXd::Zero(4), b = Eigen::ArrayXd::Zero(4);
    b[1] = 2.0;
    std::vector<Tensor> frames = {Tensor::constant({1, 4}, a), Tensor::constant({1, 4}, b)};
    CHECK(temporal_similarity_loss(frames, match).item() == 0.0);
  }

  SUBCASE("random case matches a direct cosine computation") {
    std::vector<Tensor> frames;
    std::vector<Eigen::ArrayXd> vals;
    for (int f = 0; f < 3; ++f) {
      Eigen::ArrayXd q(2 * 4);
      for (Eigen::Index i = 0; i < q.size(); ++i) q[i] = rng.normal();
      vals.push_back(q);
      frames.push_back(Tensor::constant({2, 4}, q));
    }
    MatchResult m2;
    m2.pairs = {{0, 0}, {1, 1}};
    double want = 0.0;
    for (const auto& [q, o] : m2.pairs) {
      (void)o;
      for (int f = 0; f + 1 < 3; ++f) {
        double dot = 0, na = 0, nb = 0;
        for (int j = 0; j < 4; ++j) {
          const double x = vals[f][q * 4 + j], y = vals[f + 1][q * 4 + j];
          dot += x * y;
          na += x * x;
          nb += y * y;
        }
        want += 1.0 - dot / std::sqrt(na * nb);
      }
    }
    want /= 4.0;
    CHECK(temporal_similarity_loss(frames, m2).item() == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("video mask loss") {
  MatchResult match;
  match.pairs = {{0, 0}};

  SUBCASE("perfect binary volume is zero") {
    SampleTargets t;
    t.class_ids = {0};
    Eigen::ArrayXd m(4);
    m << 1, 0, 1, 0;
    t.masks4 = {{m, m}};
    t.visible = {{1, 1}};
    FramePredictionTape pred;
    Eigen::ArrayXd probs(1 * 4);
    probs << 1, 0, 1, 0;
    pred.masks = {Tensor::constant({1, 4}, probs), Tensor::constant({1, 4}, probs)};
    CHECK(video_mask_loss(pred, t, match).item() < 1e-4);
  }

  SUBCASE("disjoint volume has dice term 1") {
    SampleTargets t;
    t.class_ids = {0};
    Eigen::ArrayXd m(4);
    m << 1, 1, 0, 0;
    t.masks4 = {{m}};
    t.visible = {{1}};
    FramePredictionTape pred;
    Eigen::ArrayXd probs(4);
    probs << 0, 0, 1, 1;
    pred.masks = {Tensor::constant({1, 4}, probs)};
    // dice part: 1 - (0 + 1)/(2 + 2 + 1) = 0.8 with smoothing; bce is clamped-large
    const double dice_part = 1.0 - 1.0 / 5.0;
    const double bce_part = -std::log(1e-6);  // each of the 4 pixels is maximally wrong
    CHECK(video_mask_loss(pred, t, match).item() ==
          doctest::Approx(dice_part + bce_part).epsilon(1e-6));
  }

  SUBCASE("random volume matches the pooled-sum oracle") {
    Rng rng(606);
    SampleTargets t;
    t.class_ids = {0, 1};
    FramePredictionTape pred;
    const int frames = 3, hw = 8, n = 3;
    std::vector<Eigen::ArrayXd> probs_vals;
    for (int f = 0; f < frames; ++f) {
      Eigen::ArrayXd p(n * hw);
      for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = rng.uniform(0.05, 0.95);
      probs_vals.push_back(p);
      pred.masks.push_back(Tensor::constant({n, hw}, p));
    }
    for (int g = 0; g < 2; ++g) {
      std::vector<Eigen::ArrayXd> ms;
      std::vector<std::uint8_t> vis;
      for (int f = 0; f < frames; ++f) {
        Eigen::ArrayXd m(hw);
        for (int i = 0; i < hw; ++i) m[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
        ms.push_back(m);
        vis.push_back(1);
      }
      t.masks4.push_back(ms);
      t.visible.push_back(vis);
    }
    MatchResult m2;
    m2.pairs = {{0, 0}, {2, 1}};
    double want = 0.0;
    for (const auto& [q, g] : m2.pairs) {
      double bce = 0, inter = 0, ps = 0, ts = 0;
      for (int f = 0; f < frames; ++f)
        for (int i = 0; i < hw; ++i) {
          const double p = probs_vals[f][q * hw + i];
          const double tv = t.masks4[g][f][i];
          bce += -(tv * std::log(p) + (1 - tv) * std::log(1 - p));
          inter += p * tv;
          ps += p;
          ts += tv;
        }
      want += bce / (frames * hw) + (1.0 - (2 * inter + 1) / (ps + ts + 1));
    }
    want /= 2.0;
    CHECK(video_mask_loss(pred, t, m2).item() == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("total_loss combines terms with the configured weights") {
  LossTerms terms;
  terms.cls = Tensor::scalar_const(0.0);
  terms.mask_bce = Tensor::scalar_const(0.0);
  terms.mask_dice = Tensor::scalar_const(0.0);
  terms.temporal = Tensor::scalar_const(0.0);
  terms.video_mask = Tensor::scalar_const(0.0);
  terms.keyframe_aux = Tensor::scalar_const(0.0);
  LossWeights w;
  CHECK(total_loss(terms, w).item() == 0.0);

  terms.mask_dice = Tensor::scalar_const(0.3);
  CHECK(total_loss(terms, w).item() == doctest::Approx(w.dice * 0.3));

  Rng rng(9);
  LossTerms rt;
  double vals[6];
  for (double& v : vals) v = rng.uniform();
  rt.cls = Tensor::scalar_const(vals[0]);
  rt.mask_bce = Tensor::scalar_const(vals[1]);
  rt.mask_dice = Tensor::scalar_const(vals[2]);
  rt.temporal = Tensor::scalar_const(vals[3]);
  rt.video_mask = Tensor::scalar_const(vals[4]);
  rt.keyframe_aux = Tensor::scalar_const(vals[5]);
  const double want = w.cls * vals[0] + w.bce * vals[1] + w.dice * vals[2] + w.temporal * vals[3] +
                      w.video * vals[4] + w.keyframe * vals[5];
  CHECK(total_loss(rt, w).item() == doctest::Approx(want).epsilon(1e-12));
  CHECK(breakdown_values(rt, w).total == doctest::Approx(want).epsilon(1e-12));

  LossWeights neg;
  neg.dice = -1.0;
  CHECK_THROWS_AS(total_loss(rt, neg), std::invalid_argument);
}

TEST_CASE("gradient of mask losses against finite differences on a 4x4 instance") {
  Rng rng(777);
  ad::Array z(16);
  for (int i = 0; i < 16; ++i) z[i] = rng.normal();
  auto logits = Tensor::parameter({1, 16}, z);
  Eigen::ArrayXd target(16);
  for (int i = 0; i < 16; ++i) target[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
  auto f = [&] {
    auto probs = ad::sigmoid(logits);
    return ad::add(ad::bce_mean_probs(probs, target), ad::dice_loss(probs, target));
  };
  CHECK(testutil::max_rel_grad_error({logits}, f, 16, 3) < 1e-3);
}
