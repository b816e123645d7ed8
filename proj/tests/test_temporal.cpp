#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>

#include "gradcheck.hpp"
#include "refvos/rng.hpp"
#include "refvos/temporal.hpp"

using namespace refvos;
using ad::Tensor;

namespace {

RunConfig cfg_q16() {
  RunConfig cfg;
  cfg.query_dim = 16;
  cfg.attention_heads = 4;
  cfg.interframe_blocks = 1;
  return cfg;
}

std::vector<Tensor> random_queries(int tprime, int n, int cq, Rng& rng) {
  std::vector<Tensor> q;
  for (int t = 0; t < tprime; ++t) {
    Eigen::ArrayXd f(static_cast<Eigen::Index>(n) * cq);
    for (Eigen::Index i = 0; i < f.size(); ++i) f[i] = rng.normal();
    q.push_back(Tensor::constant({n, cq}, f));
  }
  return q;
}

}  // namespace

TEST_CASE("zero output projection and zero FFN weights leave the pure residual path") {
  const RunConfig cfg = cfg_q16();
  ParamRegistry reg;
  auto params = InterframeParams::create(reg, cfg, 3);
  params.blocks[0].attn.wo.value_mut().setZero();
  params.blocks[0].attn.bo.value_mut().setZero();
  params.blocks[0].ffn.w2.value_mut().setZero();
  params.blocks[0].ffn.b2.value_mut().setZero();
  Rng rng(1);
  const auto in = random_queries(4, 3, cfg.query_dim, rng);
  const auto out = interframe_attend(in, params, cfg);
  REQUIRE(out.size() == in.size());
  for (std::size_t t = 0; t < in.size(); ++t)
    CHECK((out[t].value() == in[t].value()).all());
}

TEST_CASE("shapes are preserved for (8, 5, 64): 40 flattened tokens") {
  RunConfig cfg;
  cfg.query_dim = 64;
  ParamRegistry reg;
  const auto params = InterframeParams::create(reg, cfg, 4);
  Rng rng(2);
  const auto in = random_queries(8, 5, 64, rng);
  CHECK(ad::concat_rows(in).rows() == 40);
  const auto out = interframe_attend(in, params, cfg);
  CHECK(out.size() == 8);
  for (const auto& t : out) {
    CHECK(t.rows() == 5);
    CHECK(t.cols() == 64);
    CHECK(t.value().isFinite().all());
  }
}

TEST_CASE("flatten/reshape round trip is exact") {
  Rng rng(3);
  const auto in = random_queries(3, 4, 16, rng);
  const Tensor flat = ad::concat_rows(in);
  for (int t = 0; t < 3; ++t) {
    const Tensor back = ad::slice_rows(flat, t * 4, (t + 1) * 4);
    CHECK((back.value() == in[t].value()).all());
  }
}

TEST_CASE("joint token permutation equivariance (no positional encoding)") {
  RunConfig cfg = cfg_q16();
  ParamRegistry reg;
  auto params = InterframeParams::create(reg, cfg, 5);
  // give the output projection real content, otherwise the block is identity
  Rng wrng(50);
  for (auto& t : {params.blocks[0].attn.wo, params.blocks[0].ffn.w2}) {
    auto node = t.node();
    for (Eigen::Index i = 0; i < node->value.size(); ++i) node->value[i] = wrng.normal() * 0.3;
  }

  Rng rng(6);
  const int tprime = 2, n = 3, cq = cfg.query_dim;
  const auto in = random_queries(tprime, n, cq, rng);

  // tokens live in a [T'*N, C_Q] matrix; permute rows jointly
  std::vector<int> perm(tprime * n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = tprime * n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);

  Eigen::ArrayXd flat(static_cast<Eigen::Index>(tprime) * n * cq);
  for (int t = 0; t < tprime; ++t) flat.segment(t * n * cq, n * cq) = in[t].value();
  Eigen::ArrayXd permuted(flat.size());
  for (int r = 0; r < tprime * n; ++r)
    permuted.segment(static_cast<Eigen::Index>(perm[r]) * cq, cq) =
        flat.segment(static_cast<Eigen::Index>(r) * cq, cq);

  std::vector<Tensor> in_perm;
  for (int t = 0; t < tprime; ++t)
    in_perm.push_back(Tensor::constant({n, cq}, permuted.segment(t * n * cq, n * cq)));

  const auto out = interframe_attend(in, params, cfg);
  const auto out_perm = interframe_attend(in_perm, params, cfg);

  Eigen::ArrayXd out_flat(flat.size()), out_perm_flat(flat.size());
  for (int t = 0; t < tprime; ++t) {
    out_flat.segment(t * n * cq, n * cq) = out[t].value();
    out_perm_flat.segment(t * n * cq, n * cq) = out_perm[t].value();
  }
  for (int r = 0; r < tprime * n; ++r)
    for (int j = 0; j < cq; ++j)
      CHECK(out_perm_flat[static_cast<Eigen::Index>(perm[r]) * cq + j] ==
            doctest::Approx(out_flat[static_cast<Eigen::Index>(r) * cq + j]).epsilon(1e-9));
}

TEST_CASE("gradients through the block match finite differences") {
  RunConfig cfg = cfg_q16();
  ParamRegistry reg;
  const auto params = InterframeParams::create(reg, cfg, 7);
  Rng rng(8);
  const auto in = random_queries(3, 2, cfg.query_dim, rng);
  auto f = [&] {
    const auto out = interframe_attend(in, params, cfg);
    Tensor acc = ad::mean_all(ad::mul(out[0], out[0]));
    for (std::size_t t = 1; t < out.size(); ++t)
      acc = ad::add(acc, ad::mean_all(ad::mul(out[t], out[t])));
    return acc;
  };
  std::vector<Tensor> probed = {params.blocks[0].attn.wq, params.blocks[0].attn.wk,
                                params.blocks[0].attn.wv, params.blocks[0].attn.wo,
                                params.blocks[0].ffn.w1,  params.blocks[0].ffn.w2,
                                params.blocks[0].ln_attn.gain};
  CHECK(testutil::max_rel_grad_error(probed, f, 40, 9) < 1e-3);
}

TEST_CASE("empty selection is rejected, single frame accepted") {
  const RunConfig cfg = cfg_q16();
  ParamRegistry reg;
  const auto params = InterframeParams::create(reg, cfg, 10);
  CHECK_THROWS_AS(interframe_attend({}, params, cfg), std::invalid_argument);
  Rng rng(11);
  const auto one = random_queries(1, 2, cfg.query_dim, rng);
  CHECK(interframe_attend(one, params, cfg).size() == 1);
}
