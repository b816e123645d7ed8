#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "refvos/decoder.hpp"
#include "refvos/rng.hpp"

using namespace refvos;
using ad::Tensor;

namespace {

RunConfig tiny_cfg() {
  RunConfig cfg;
  cfg.image_h = 32;
  cfg.image_w = 32;
  cfg.num_queries = 3;
  cfg.query_dim = 16;
  cfg.text_dim = 16;
  cfg.mask_dim = 8;
  cfg.decoder_layers = 3;
  cfg.num_classes = 2;
  cfg.attention_heads = 4;
  cfg.keyframe_count = 2;
  cfg.optimizer.train_clip_len = 4;
  return cfg;
}

struct Fixture {
  RunConfig cfg = tiny_cfg();
  ParamRegistry reg;
  BackboneParams bb;
  DecoderParams dec;
  FeaturePyramid pyr;
  TextEmbedding text;

  explicit Fixture(std::uint64_t seed = 3, int frames = 2) {
    bb = BackboneParams::create(reg, cfg, seed);
    dec = DecoderParams::create(reg, cfg, seed + 1);
    Rng rng(seed + 2);
    std::vector<Eigen::ArrayXd> fr;
    for (int t = 0; t < frames; ++t) {
      Eigen::ArrayXd f(3 * 32 * 32);
      for (Eigen::Index i = 0; i < f.size(); ++i) f[i] = rng.uniform();
      fr.push_back(std::move(f));
    }
    pyr = extract_features(fr, 32, 32, bb);
    text = encode_expression("the red circle moves left", cfg.text_dim, 99);
  }
};

}  // namespace

TEST_CASE("init_queries implements W_init * F_text + b_i") {
  Fixture fx;

  SUBCASE("identity projection with zero bias reproduces F_text in every query") {
    fx.dec.w_init.value_mut().setZero();
    for (int i = 0; i < fx.cfg.query_dim; ++i)
      fx.dec.w_init.value_mut()[i * fx.cfg.text_dim + i] = 1.0;
    fx.dec.query_bias.value_mut().setZero();
    const QuerySet qs = init_queries(fx.text, fx.dec, 2);
    for (int q = 0; q < fx.cfg.num_queries; ++q)
      for (int j = 0; j < fx.cfg.query_dim; ++j)
        CHECK(qs.per_frame[0].value()[q * fx.cfg.query_dim + j] ==
              doctest::Approx(fx.text.vector[j]).epsilon(1e-12));
  }

  SUBCASE("zero text embedding leaves exactly the per-query bias") {
    TextEmbedding zero{Eigen::ArrayXd::Zero(fx.cfg.text_dim), TextSource::toy_hash};
    const QuerySet qs = init_queries(zero, fx.dec, 1);
    CHECK((qs.per_frame[0].value() == fx.dec.query_bias.value()).all());
  }

  SUBCASE("random projection matches a direct matrix-vector product") {
    const QuerySet qs = init_queries(fx.text, fx.dec, 1);
    for (int q = 0; q < fx.cfg.num_queries; ++q)
      for (int j = 0; j < fx.cfg.query_dim; ++j) {
        double want = fx.dec.query_bias.value()[q * fx.cfg.query_dim + j];
        for (int k = 0; k < fx.cfg.text_dim; ++k)
          want += fx.dec.w_init.value()[j * fx.cfg.text_dim + k] * fx.text.vector[k];
        CHECK(qs.per_frame[0].value()[q * fx.cfg.query_dim + j] ==
              doctest::Approx(want).epsilon(1e-9));
      }
  }

  SUBCASE("broadcast across frames is exact") {
    const QuerySet qs = init_queries(fx.text, fx.dec, 5);
    for (int t = 1; t < 5; ++t) CHECK((qs.per_frame[t].value() == qs.per_frame[0].value()).all());
  }
}

TEST_CASE("decode with zero layers is the identity") {
  Fixture fx;
  fx.cfg.decoder_layers = 0;
  ParamRegistry reg2;
  DecoderParams dec0 = DecoderParams::create(reg2, fx.cfg, 9);
  const QuerySet q0 = init_queries(fx.text, dec0, 2);
  const QuerySet qL = decode(q0, fx.pyr, fx.text, dec0, fx.cfg);
  CHECK(qL.layer == 0);
  for (int t = 0; t < 2; ++t) CHECK((qL.per_frame[t].value() == q0.per_frame[t].value()).all());
}

TEST_CASE("decode keeps the [T, N, C_Q] shape and is deterministic") {
  Fixture fx;
  const QuerySet q0 = init_queries(fx.text, fx.dec, 2);
  const QuerySet a = decode(q0, fx.pyr, fx.text, fx.dec, fx.cfg);
  const QuerySet b = decode(q0, fx.pyr, fx.text, fx.dec, fx.cfg);
  CHECK(a.layer == fx.cfg.decoder_layers);
  for (int t = 0; t < 2; ++t) {
    CHECK(a.per_frame[t].rows() == fx.cfg.num_queries);
    CHECK(a.per_frame[t].cols() == fx.cfg.query_dim);
    CHECK((a.per_frame[t].value() == b.per_frame[t].value()).all());  // bit-identical
    CHECK(a.per_frame[t].value().isFinite().all());
  }
}

TEST_CASE("classification head") {
  Fixture fx;
  const QuerySet q0 = init_queries(fx.text, fx.dec, fx.pyr.frames());
  const QuerySet qL = decode(q0, fx.pyr, fx.text, fx.dec, fx.cfg);

  SUBCASE("zero weights give all-zero logits and nothing kept at tau 0.8") {
    fx.dec.cls_w.value_mut().setZero();
    fx.dec.cls_b.value_mut().setZero();
    const auto logits = classify(qL, fx.text, fx.dec);
    CHECK((logits[0].value() == 0.0).all());
    const auto kept = select_queries(logits[0].value(), fx.cfg.num_queries, fx.cfg.num_classes, 0.8);
    for (const auto k : kept) CHECK(k == 0);  // uniform softmax: max fg prob 1/3
  }

  SUBCASE("concatenation order is (query, text): zeroed text block ignores F_text") {
    auto& w = fx.dec.cls_w.value_mut();
    const int in_dim = fx.cfg.query_dim + fx.cfg.text_dim;
    for (int r = 0; r < fx.cfg.num_classes + 1; ++r)
      for (int c = fx.cfg.query_dim; c < in_dim; ++c) w[r * in_dim + c] = 0.0;
    const auto logits_a = classify(qL, fx.text, fx.dec);
    TextEmbedding other = encode_expression("different words entirely", fx.cfg.text_dim, 1);
    QuerySet same_queries = qL;  // same final queries, different text input to the head
    const auto logits_b = classify(same_queries, other, fx.dec);
    CHECK((logits_a[0].value() == logits_b[0].value()).all());
  }

  SUBCASE("random inputs match an independent affine computation") {
    const auto logits = classify(qL, fx.text, fx.dec);
    const int c1 = fx.cfg.num_classes + 1, in_dim = fx.cfg.query_dim + fx.cfg.text_dim;
    for (int q = 0; q < fx.cfg.num_queries; ++q)
      for (int r = 0; r < c1; ++r) {
        double want = fx.dec.cls_b.value()[r];
        for (int k = 0; k < fx.cfg.query_dim; ++k)
          want += fx.dec.cls_w.value()[r * in_dim + k] *
                  qL.per_frame[0].value()[q * fx.cfg.query_dim + k];
        for (int k = 0; k < fx.cfg.text_dim; ++k)
          want += fx.dec.cls_w.value()[r * in_dim + fx.cfg.query_dim + k] * fx.text.vector[k];
        CHECK(logits[0].value()[q * c1 + r] == doctest::Approx(want).epsilon(1e-9));
      }
  }
}

TEST_CASE("mask embedding head") {
  Fixture fx;
  const QuerySet q0 = init_queries(fx.text, fx.dec, fx.pyr.frames());
  const QuerySet qL = decode(q0, fx.pyr, fx.text, fx.dec, fx.cfg);

  SUBCASE("zero MLP weights give zero embeddings of shape [T, N, d_m]") {
    fx.dec.mask_w1.value_mut().setZero();
    fx.dec.mask_b1.value_mut().setZero();
    fx.dec.mask_w2.value_mut().setZero();
    fx.dec.mask_b2.value_mut().setZero();
    const auto em = embed_masks(qL, fx.dec);
    CHECK(em[0].rows() == fx.cfg.num_queries);
    CHECK(em[0].cols() == fx.cfg.mask_dim);
    CHECK((em[0].value() == 0.0).all());
  }
}

TEST_CASE("mask prediction is a per-pixel sigmoid dot product") {
  SUBCASE("zero embeddings give 0.5 everywhere") {
    std::vector<Tensor> em{Tensor::constant({2, 4}, Eigen::ArrayXd::Zero(8))};
    Eigen::ArrayXd feat(4 * 6);
    for (int i = 0; i < 24; ++i) feat[i] = 0.3 * i;
    std::vector<Tensor> fm{Tensor::constant({4, 6}, feat)};
    const auto masks = predict_masks(em, fm);
    CHECK((masks[0].value() == 0.5).all());
  }

  SUBCASE("sigma(2) on an aligned unit embedding") {
    Eigen::ArrayXd e = Eigen::ArrayXd::Zero(3);
    e[0] = 1.0;
    Eigen::ArrayXd f = Eigen::ArrayXd::Zero(3);
    f[0] = 2.0;
    const auto masks = predict_masks({Tensor::constant({1, 3}, e)}, {Tensor::constant({3, 1}, f)});
    CHECK(masks[0].value()[0] == doctest::Approx(0.880797).epsilon(1e-6));
  }

  SUBCASE("outputs lie strictly inside (0,1)") {
    Rng rng(12);
    Eigen::ArrayXd e(2 * 3), f(3 * 5);
    for (Eigen::Index i = 0; i < e.size(); ++i) e[i] = rng.normal() * 3.0;
    for (Eigen::Index i = 0; i < f.size(); ++i) f[i] = rng.normal() * 3.0;
    const auto masks = predict_masks({Tensor::constant({2, 3}, e)}, {Tensor::constant({3, 5}, f)});
    CHECK((masks[0].value() > 0.0).all());
    CHECK((masks[0].value() < 1.0).all());
  }
}

TEST_CASE("select_queries thresholding") {
  const int n = 3, c = 2;
  Eigen::ArrayXd logits = Eigen::ArrayXd::Zero(n * (c + 1));
  // query 0: logits (10, 0, 0) -> softmax max fg ~ 0.99990 > 0.8
  logits[0] = 10.0;
  // query 1: uniform -> 1/3 < 0.8
  // query 2: strong background only -> never kept
  logits[2 * 3 + 2] = 9.0;
  const auto kept = select_queries(logits, n, c, 0.8);
  CHECK(kept[0] == 1);
  CHECK(kept[1] == 0);
  CHECK(kept[2] == 0);

  CHECK_THROWS_AS(select_queries(logits, n, c, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(select_queries(logits, n, c, 1.0), std::invalid_argument);

  // monotonicity: lowering tau never unkeeps a kept query
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::ArrayXd z(n * (c + 1));
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal() * 3;
    const auto hi = select_queries(z, n, c, 0.9);
    const auto lo = select_queries(z, n, c, 0.4);
    for (int q = 0; q < n; ++q)
      if (hi[q]) CHECK(lo[q] == 1);
  }
}

TEST_CASE("masked attention never sees pixels outside the previous mask") {
  // With masking on and off the outputs differ once intermediate masks are
  // informative; both stay finite and deterministic.
  Fixture fx(8);
  RunConfig masked = fx.cfg;
  masked.masked_attention = true;
  RunConfig open = fx.cfg;
  open.masked_attention = false;
  const QuerySet q0 = init_queries(fx.text, fx.dec, 2);
  const QuerySet a = decode(q0, fx.pyr, fx.text, fx.dec, masked);
  const QuerySet b = decode(q0, fx.pyr, fx.text, fx.dec, open);
  CHECK(a.per_frame[0].value().isFinite().all());
  CHECK(b.per_frame[0].value().isFinite().all());
}

TEST_CASE("end-to-end gradients through decode, classify and mask heads") {
  Fixture fx(21);
  RunConfig cfg = fx.cfg;
  cfg.masked_attention = false;  // keep the loss smooth for finite differences

  auto forward_cls = [&] {
    const QuerySet q0 = init_queries(fx.text, fx.dec, fx.pyr.frames());
    const QuerySet qL = decode(q0, fx.pyr, fx.text, fx.dec, cfg);
    return ad::mean_all(classify(qL, fx.text, fx.dec)[0]);
  };
  std::vector<Tensor> probe1 = {fx.dec.w_init,
                                fx.dec.query_bias,
                                fx.dec.cls_w,
                                fx.dec.text_kv_w,
                                fx.dec.layers[0].cross.wq,
                                fx.dec.layers[0].cross.wv,
                                fx.dec.layers[1].self.wk,
                                fx.dec.layers[2].ffn.w1,
                                fx.dec.layers[2].ln_ffn.gain,
                                fx.dec.in32_w};
  CHECK(testutil::max_rel_grad_error(probe1, forward_cls, 40, 31) < 1e-3);

  auto forward_mask = [&] {
    const QuerySet q0 = init_queries(fx.text, fx.dec, fx.pyr.frames());
    const QuerySet qL = decode(q0, fx.pyr, fx.text, fx.dec, cfg);
    const auto masks = predict_masks(embed_masks(qL, fx.dec), fx.pyr.mask_features);
    return ad::mean_all(masks[0]);
  };
  std::vector<Tensor> probe2 = {fx.dec.w_init, fx.dec.mask_w1, fx.dec.mask_w2,
                                fx.dec.layers[0].cross.wk, fx.dec.layers[1].ffn.w2};
  CHECK(testutil::max_rel_grad_error(probe2, forward_mask, 25, 32) < 1e-3);
}
