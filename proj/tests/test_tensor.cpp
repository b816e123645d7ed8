#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "refvos/rng.hpp"
#include "refvos/tensor.hpp"

using namespace refvos;
using ad::Tensor;

namespace {

Tensor random_param(std::vector<int> shape, Rng& rng, double scl = 1.0) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  ad::Array a(n);
  for (std::int64_t i = 0; i < n; ++i) a[i] = rng.normal() * scl;
  return Tensor::parameter(std::move(shape), std::move(a));
}

ad::Array random_array(std::int64_t n, Rng& rng) {
  ad::Array a(n);
  for (std::int64_t i = 0; i < n; ++i) a[i] = rng.uniform();
  return a;
}

}  // namespace

TEST_CASE("matmul forward matches a hand-rolled product") {
  Rng rng(7);
  auto a = random_param({3, 4}, rng);
  auto b = random_param({4, 2}, rng);
  auto c = ad::matmul(a, b);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += a.value()[i * 4 + k] * b.value()[k * 2 + j];
      CHECK(c.value()[i * 2 + j] == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("gradients match finite differences across the op set") {
  Rng rng(11);

  SUBCASE("matmul + add + relu + mean") {
    auto a = random_param({4, 5}, rng);
    auto b = random_param({5, 3}, rng);
    auto bias = random_param({1, 3}, rng);
    auto f = [&] { return ad::mean_all(ad::relu(ad::add_rowvec(ad::matmul(a, b), bias))); };
    CHECK(testutil::max_rel_grad_error({a, b, bias}, f, 30, 1) < 1e-6);
  }

  SUBCASE("matmul_nt and transpose") {
    auto a = random_param({4, 6}, rng);
    auto b = random_param({3, 6}, rng);
    auto f = [&] { return ad::sum_all(ad::mul(ad::matmul_nt(a, b), ad::matmul(a, ad::transpose(b)))); };
    CHECK(testutil::max_rel_grad_error({a, b}, f, 30, 2) < 1e-6);
  }

  SUBCASE("sigmoid, mul, sub, scale") {
    auto a = random_param({2, 7}, rng);
    auto b = random_param({2, 7}, rng);
    auto f = [&] { return ad::mean_all(ad::mul(ad::sigmoid(a), ad::scale(ad::sub(a, b), 0.7))); };
    CHECK(testutil::max_rel_grad_error({a, b}, f, 30, 3) < 1e-6);
  }

  SUBCASE("softmax rows") {
    auto a = random_param({3, 5}, rng);
    auto w = random_param({3, 5}, rng);
    auto f = [&] { return ad::sum_all(ad::mul(ad::softmax_rows(a), w)); };
    CHECK(testutil::max_rel_grad_error({a, w}, f, 30, 4) < 1e-6);
  }

  SUBCASE("masked softmax rows, including an all-blocked fallback row") {
    auto a = random_param({2, 4}, rng);
    auto w = random_param({2, 4}, rng);
    std::vector<std::uint8_t> allowed = {1, 0, 1, 0, 0, 0, 0, 0};
    auto f = [&] { return ad::sum_all(ad::mul(ad::softmax_rows_masked(a, allowed), w)); };
    CHECK(testutil::max_rel_grad_error({a, w}, f, 20, 5) < 1e-6);
  }

  SUBCASE("layer norm") {
    auto x = random_param({4, 8}, rng);
    auto g = random_param({1, 8}, rng);
    auto b = random_param({1, 8}, rng);
    auto w = random_param({4, 8}, rng);
    auto f = [&] { return ad::sum_all(ad::mul(ad::layer_norm_rows(x, g, b), w)); };
    CHECK(testutil::max_rel_grad_error({x, g, b, w}, f, 40, 6) < 1e-5);
  }

  SUBCASE("concat and slice") {
    auto a = random_param({2, 3}, rng);
    auto b = random_param({3, 3}, rng);
    auto c = random_param({5, 2}, rng);
    auto f = [&] {
      auto cat = ad::concat_cols(ad::concat_rows({a, b}), c);
      auto s = ad::slice_cols(ad::slice_rows(cat, 1, 4), 1, 4);
      return ad::mean_all(ad::mul(s, s));
    };
    CHECK(testutil::max_rel_grad_error({a, b, c}, f, 30, 7) < 1e-6);
  }

  SUBCASE("conv2d stride 2 and upsample") {
    auto x = random_param({2, 8 * 8}, rng);
    auto w = random_param({3, 2 * 9}, rng, 0.5);
    auto bias = random_param({1, 3}, rng);
    auto f = [&] {
      auto y = ad::conv2d_s2(x, 8, 8, w, ad::reshape(bias, {3, 1}));
      return ad::mean_all(ad::mul(ad::upsample2x(y, 4, 4), ad::upsample2x(y, 4, 4)));
    };
    CHECK(testutil::max_rel_grad_error({x, w, bias}, f, 40, 8) < 1e-6);
  }

  SUBCASE("reductions: mean_rows, dot_all") {
    auto a = random_param({4, 6}, rng);
    auto b = random_param({4, 6}, rng);
    auto f = [&] {
      return ad::add(ad::dot_all(a, b), ad::sum_all(ad::mul(ad::mean_rows(a), ad::mean_rows(b))));
    };
    CHECK(testutil::max_rel_grad_error({a, b}, f, 30, 9) < 1e-6);
  }

  SUBCASE("cosine similarity") {
    auto a = random_param({1, 9}, rng);
    auto b = random_param({1, 9}, rng);
    auto f = [&] { return ad::cosine_sim(a, b); };
    CHECK(testutil::max_rel_grad_error({a, b}, f, 18, 10) < 1e-6);
  }

  SUBCASE("bce on probabilities") {
    Rng trng(99);
    auto z = random_param({3, 5}, rng);
    auto t = random_array(15, trng);
    auto f = [&] { return ad::bce_mean_probs(ad::sigmoid(z), t); };
    CHECK(testutil::max_rel_grad_error({z}, f, 15, 11) < 1e-6);
  }

  SUBCASE("soft dice") {
    Rng trng(100);
    auto z = random_param({1, 16}, rng);
    ad::Array t(16);
    for (int i = 0; i < 16; ++i) t[i] = trng.uniform() < 0.5 ? 0.0 : 1.0;
    auto f = [&] { return ad::dice_loss(ad::sigmoid(z), t); };
    CHECK(testutil::max_rel_grad_error({z}, f, 16, 12) < 1e-6);
  }

  SUBCASE("softmax cross entropy") {
    auto z = random_param({4, 3}, rng);
    std::vector<int> labels = {0, 2, 1, 2};
    auto f = [&] { return ad::softmax_xent_rows(z, labels); };
    CHECK(testutil::max_rel_grad_error({z}, f, 12, 13) < 1e-6);
  }

  SUBCASE("bce with logits") {
    auto z = random_param({2, 6}, rng);
    ad::Array t(12);
    Rng trng(101);
    for (int i = 0; i < 12; ++i) t[i] = trng.uniform() < 0.5 ? 0.0 : 1.0;
    auto f = [&] { return ad::bce_logits_mean(z, t); };
    CHECK(testutil::max_rel_grad_error({z}, f, 12, 14) < 1e-6);
  }
}

TEST_CASE("cosine_sim of a zero vector is exactly 0 with no gradient") {
  auto a = Tensor::parameter({1, 4}, ad::Array::Zero(4));
  Rng rng(3);
  ad::Array bv(4);
  for (int i = 0; i < 4; ++i) bv[i] = rng.normal();
  auto b = Tensor::parameter({1, 4}, bv);
  auto c = ad::cosine_sim(a, b);
  CHECK(c.item() == 0.0);
  CHECK_FALSE(c.requires_grad());
}

TEST_CASE("no-grad mode computes identical values and skips the tape") {
  Rng rng(5);
  auto a = random_param({3, 3}, rng);
  auto b = random_param({3, 3}, rng);
  auto with_grad = ad::matmul(a, b);
  ad::Array v1 = with_grad.value();
  {
    ad::NoGradGuard guard;
    auto res = ad::matmul(a, b);
    CHECK_FALSE(res.requires_grad());
    for (int i = 0; i < 9; ++i) CHECK(res.value()[i] == v1[i]);
  }
  CHECK(with_grad.requires_grad());
}

TEST_CASE("grad accumulates on leaves across backward calls") {
  auto a = Tensor::parameter({1, 1}, ad::Array::Constant(1, 2.0));
  auto loss1 = ad::mul(a, a);
  loss1.backward();
  CHECK(a.grad()[0] == doctest::Approx(4.0));
  auto loss2 = ad::mul(a, a);
  loss2.backward();
  CHECK(a.grad()[0] == doctest::Approx(8.0));
}

TEST_CASE("backward on a non-scalar root is rejected") {
  auto a = Tensor::parameter({2, 2}, ad::Array::Zero(4));
  CHECK_THROWS_AS(ad::relu(a).backward(), std::invalid_argument);
}
