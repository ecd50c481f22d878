#include <doctest.h>

#include <cmath>

#include "pointsentinel/losses.hpp"
#include "reference.hpp"

using namespace ps;

namespace {

std::vector<float> one_hot(std::size_t n, std::size_t at) {
  std::vector<float> v(n, 0.0f);
  v[at] = 1.0f;
  return v;
}

}  // namespace

TEST_SUITE_BEGIN("losses");

TEST_CASE("spatial softmax basics") {
  ad::Graph g;
  auto zeros = g.leaf({2, 2}, std::vector<float>(4, 0.0f));
  auto p = loss::spatial_softmax(zeros);
  for (float v : p.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-7));

  const float ln3 = std::log(3.0f);
  auto t = g.leaf({2, 2}, {0.0f, ln3, 0.0f, 0.0f});
  auto p2 = loss::spatial_softmax(t);
  CHECK(p2.values()[0] == doctest::Approx(1.0 / 6).epsilon(1e-6));
  CHECK(p2.values()[1] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(p2.values()[2] == doctest::Approx(1.0 / 6).epsilon(1e-6));
  CHECK(p2.values()[3] == doctest::Approx(1.0 / 6).epsilon(1e-6));

  // shift invariance: +7.3 everywhere changes nothing beyond 1e-6
  auto shifted = ad::add(t, 7.3f);
  auto p3 = loss::spatial_softmax(shifted);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(std::abs(p3.values()[i] - p2.values()[i]) < 1e-6);
  }
}

TEST_CASE("spatial softmax sums to one under large logits") {
  Rng rng(5);
  for (int inst = 0; inst < 20; ++inst) {
    std::vector<float> logits(16 * 16);
    for (float& v : logits) v = static_cast<float>(rng.uniform(-30.0, 30.0));
    ad::Graph g;
    auto p = loss::spatial_softmax(g.leaf({16, 16}, logits));
    double s = 0.0;
    for (float v : p.values()) {
      CHECK(v > 0.0f);
      s += v;
    }
    CHECK(std::abs(s - 1.0) < 1e-5);
  }
}

TEST_CASE("spatial softmax nll closed forms") {
  ad::Graph g;
  auto zeros = g.leaf({2, 2}, std::vector<float>(4, 0.0f), true);
  auto lv = loss::spatial_softmax_nll(zeros, one_hot(4, 0));
  CHECK(lv.scalar.item() == doctest::Approx(std::log(4.0) / 4.0).epsilon(1e-6));

  // 20 at the target, 0 elsewhere: -(1/4) log(e^20/(e^20+3)) < 1e-8
  auto sharp = g.leaf({2, 2}, {20.0f, 0.0f, 0.0f, 0.0f});
  auto lv2 = loss::spatial_softmax_nll(sharp, one_hot(4, 0));
  const double expected = -0.25 * std::log(std::exp(20.0) / (std::exp(20.0) + 3.0));
  CHECK(lv2.scalar.item() == doctest::Approx(expected).epsilon(1e-3));
  CHECK(lv2.scalar.item() < 1e-8);

  CHECK_THROWS_AS((void)loss::spatial_softmax_nll(zeros, std::vector<float>(4, 0.0f)),
                  ValidationError);
  std::vector<float> two(4, 0.0f);
  two[0] = two[3] = 1.0f;
  CHECK_THROWS_AS((void)loss::spatial_softmax_nll(zeros, two), ValidationError);
}

TEST_CASE("spatial softmax nll gradient matches finite differences") {
  Rng rng(17);
  for (int inst = 0; inst < 5; ++inst) {
    std::vector<float> logits(16);
    for (float& v : logits) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    const std::size_t target = rng.index(16);
    const double err = ref::max_grad_rel_error(
        {logits}, {{4, 4}},
        [&](ad::Graph&, std::vector<ad::Tensor>& in) {
          return loss::spatial_softmax_nll(in[0], one_hot(16, target)).scalar;
        },
        [&](const std::vector<ref::dvec>& in) { return ref::softmax_nll(in[0], target, 16); });
    CHECK(err < 1e-3);
  }
}

TEST_CASE("nll decreases strictly as the target logit grows") {
  Rng rng(29);
  std::vector<float> logits(16);
  for (float& v : logits) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  double prev = 1e9;
  for (float bump : {0.0f, 0.5f, 1.0f, 2.0f, 4.0f}) {
    auto l = logits;
    l[5] += bump;
    ad::Graph g;
    const double v = loss::spatial_softmax_nll(g.leaf({4, 4}, l), one_hot(16, 5)).scalar.item();
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("balanced bce closed forms") {
  ad::Graph g;
  auto half = g.leaf({2, 2}, std::vector<float>(4, 0.5f));
  auto lv = loss::balanced_bce_loss(half, one_hot(4, 2));
  CHECK(lv.scalar.item() == doctest::Approx(std::log(2.0)).epsilon(1e-5));

  std::vector<float> perfect(4, 1e-7f);
  perfect[2] = 1.0f - 1e-7f;
  auto lv2 = loss::balanced_bce_loss(g.leaf({2, 2}, perfect), one_hot(4, 2));
  CHECK(lv2.scalar.item() >= 0.0f);
  CHECK(lv2.scalar.item() < 1e-5);

  CHECK_THROWS_AS((void)loss::balanced_bce_loss(half, std::vector<float>(4, 1.0f)),
                  ValidationError);
  CHECK_THROWS_AS((void)loss::balanced_bce_loss(half, std::vector<float>(4, 0.0f)),
                  ValidationError);
}

TEST_CASE("balanced bce is invariant to the negative count at equal predictions") {
  for (int n : {4, 16, 64}) {
    ad::Graph g;
    std::vector<float> probs(static_cast<std::size_t>(n), 0.3f);
    probs[1] = 0.8f;
    auto lv = loss::balanced_bce_loss(
        g.leaf({1, n}, probs), one_hot(static_cast<std::size_t>(n), 1));
    // 0.5*(-log 0.8) + 0.5*(-log 0.7), independent of n
    const double expected = 0.5 * (-std::log(0.8) - std::log(0.7));
    CHECK(lv.scalar.item() == doctest::Approx(expected).epsilon(1e-5));
  }
}

TEST_CASE("balanced bce gradient matches finite differences") {
  Rng rng(41);
  for (int inst = 0; inst < 5; ++inst) {
    std::vector<float> probs(16);
    for (float& v : probs) v = static_cast<float>(rng.uniform(0.05, 0.95));
    const std::size_t target = rng.index(16);
    ref::dvec target_grid(16, 0.0);
    target_grid[target] = 1.0;
    const double err = ref::max_grad_rel_error(
        {probs}, {{4, 4}},
        [&](ad::Graph&, std::vector<ad::Tensor>& in) {
          return loss::balanced_bce_loss(in[0], one_hot(16, target)).scalar;
        },
        [&](const std::vector<ref::dvec>& in) { return ref::balanced_bce(in[0], target_grid); });
    CHECK(err < 1e-3);
  }
}

TEST_CASE("mse point loss") {
  ad::Graph g;
  auto p = g.leaf({2}, {0.3f, 0.7f});
  CHECK(loss::mse_point_loss(p, 0.3f, 0.7f).scalar.item() == 0.0f);

  auto q = g.leaf({2}, {0.5f, 0.5f}, true);
  auto lv = loss::mse_point_loss(q, 0.0f, 0.0f);
  CHECK(lv.scalar.item() == doctest::Approx(0.25).epsilon(1e-7));
  g.backward(lv.scalar);
  CHECK(q.grad()[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(q.grad()[1] == doctest::Approx(0.5).epsilon(1e-6));

  CHECK_THROWS_AS((void)loss::mse_point_loss(q, 1.5f, 0.0f), ValidationError);
}

TEST_CASE("losses are finite and non-negative on random inputs") {
  Rng rng(53);
  for (int inst = 0; inst < 10; ++inst) {
    ad::Graph g;
    std::vector<float> logits(64);
    for (float& v : logits) v = static_cast<float>(rng.uniform(-8.0, 8.0));
    const std::size_t t = rng.index(64);
    const float nll = loss::spatial_softmax_nll(g.leaf({8, 8}, logits), one_hot(64, t)).scalar.item();
    CHECK(std::isfinite(nll));
    CHECK(nll >= 0.0f);

    std::vector<float> probs(64);
    for (float& v : probs) v = static_cast<float>(rng.uniform(0.001, 0.999));
    const float bce = loss::balanced_bce_loss(g.leaf({8, 8}, probs), one_hot(64, t)).scalar.item();
    CHECK(std::isfinite(bce));
    CHECK(bce >= 0.0f);
  }
}

TEST_SUITE_END();
