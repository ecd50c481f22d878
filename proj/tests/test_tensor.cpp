#include <doctest.h>

#include <cmath>

#include "pointsentinel/common.hpp"
#include "pointsentinel/tensor.hpp"
#include "reference.hpp"

using namespace ps;

namespace {

std::vector<float> random_vec(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

// Wraps a non-scalar op output into a scalar by a fixed random weighting, so
// every output element contributes a distinct sensitivity.
ad::Tensor weighted_sum(ad::Graph& g, const ad::Tensor& t, const std::vector<float>& w) {
  ad::Tensor wt = g.leaf(t.shape(), w);
  return ad::sum(ad::mul(t, wt));
}

double ref_weighted(const ref::dvec& vals, const std::vector<float>& w) {
  double acc = 0.0;
  for (std::size_t i = 0; i < vals.size(); ++i) acc += vals[i] * w[i];
  return acc;
}

}  // namespace

TEST_SUITE_BEGIN("tensor");

TEST_CASE("elementwise examples") {
  ad::Graph g;
  auto a = g.leaf({2}, {1.0f, 2.0f});
  auto b = g.leaf({2}, {3.0f, 4.0f});
  auto c = ad::add(a, b);
  CHECK(c.values()[0] == 4.0f);
  CHECK(c.values()[1] == 6.0f);

  auto x = g.leaf({3}, {0.5f, -1.0f, 2.0f}, true);
  auto y = ad::mul(x, 1.0f);
  CHECK(y.values()[0] == 0.5f);
  g.backward(ad::sum(y));
  for (float gv : x.grad()) CHECK(gv == 1.0f);
}

TEST_CASE("product rule") {
  ad::Graph g;
  auto a = g.leaf({1}, {2.0f}, true);
  auto b = g.leaf({1}, {3.0f}, true);
  auto c = ad::mul(a, b);
  g.backward(c);
  CHECK(a.grad()[0] == 3.0f);
  CHECK(b.grad()[0] == 2.0f);
}

TEST_CASE("scalar broadcast on either side") {
  ad::Graph g;
  auto t = g.leaf({2, 2}, {1.0f, 2.0f, 3.0f, 4.0f}, true);
  auto r = ad::sub(10.0f, t);
  CHECK(r.values()[0] == 9.0f);
  CHECK(r.values()[3] == 6.0f);
  auto q = ad::div(t, 2.0f);
  CHECK(q.values()[1] == 1.0f);
  g.backward(ad::sum(r));
  for (float gv : t.grad()) CHECK(gv == -1.0f);
}

TEST_CASE("shape mismatch errors") {
  ad::Graph g;
  auto a = g.leaf({2}, {1.0f, 2.0f});
  auto b = g.leaf({3}, {1.0f, 2.0f, 3.0f});
  CHECK_THROWS_AS((void)ad::add(a, b), ValidationError);
  auto m = g.leaf({2, 2}, {1, 2, 3, 4});
  CHECK_THROWS_AS((void)ad::matmul(m, b.graph()->leaf({3, 1}, {1, 2, 3})), ValidationError);
}

TEST_CASE("matmul identity and hand product") {
  ad::Graph g;
  auto eye = g.leaf({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
  auto m = g.leaf({2, 2}, {5.0f, 6.0f, 7.0f, 8.0f});
  auto r = ad::matmul(eye, m);
  for (std::size_t i = 0; i < 4; ++i) CHECK(r.values()[i] == m.values()[i]);

  auto a = g.leaf({1, 2}, {1.0f, 2.0f});
  auto b = g.leaf({2, 1}, {3.0f, 4.0f});
  CHECK(ad::matmul(a, b).values()[0] == 11.0f);
}

TEST_CASE("conv2d trivial examples") {
  ad::Graph g;
  // all-ones 3x3 input, 1x1 kernel = [2] -> map of 2s
  auto x = g.leaf({1, 3, 3}, std::vector<float>(9, 1.0f));
  auto k = g.leaf({1, 1, 1, 1}, {2.0f});
  auto y = ad::conv2d(x, k, 1, 0);
  CHECK(y.shape() == ad::Shape{1, 3, 3});
  for (float v : y.values()) CHECK(v == 2.0f);

  // [[1,2],[3,4]] against kernel [[1,0],[0,1]] -> [[5]]
  auto x2 = g.leaf({1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
  auto k2 = g.leaf({1, 1, 2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
  auto y2 = ad::conv2d(x2, k2, 1, 0);
  CHECK(y2.values()[0] == 5.0f);

  // non-integer output size
  auto x3 = g.leaf({1, 5, 5}, std::vector<float>(25, 0.0f));
  auto k3 = g.leaf({1, 1, 2, 2}, std::vector<float>(4, 0.0f));
  CHECK_THROWS_AS((void)ad::conv2d(x3, k3, 2, 0), ValidationError);
}

TEST_CASE("activation examples") {
  ad::Graph g;
  auto x = g.leaf({3}, {-1.0f, 0.0f, 2.0f});
  auto r = ad::relu(x);
  CHECK(r.values()[0] == 0.0f);
  CHECK(r.values()[1] == 0.0f);
  CHECK(r.values()[2] == 2.0f);
  CHECK(ad::sigmoid(g.constant(0.0f)).values()[0] == 0.5f);
  CHECK_THROWS_AS((void)ad::log(g.constant(-1.0f)), ValidationError);
  CHECK_THROWS_AS((void)ad::log(g.constant(0.0f)), ValidationError);
}

TEST_CASE("backward basics") {
  ad::Graph g;
  auto x = g.leaf({1}, {3.0f}, true);
  auto loss = ad::mul(x, x);
  g.backward(loss);
  CHECK(x.grad()[0] == 6.0f);
  CHECK(loss.grad()[0] == 1.0f);  // d loss / d loss

  // repeatable after zero_grad
  g.zero_grad();
  g.backward(loss);
  CHECK(x.grad()[0] == 6.0f);

  // accumulates without zeroing
  g.backward(loss);
  CHECK(x.grad()[0] == 12.0f);

  auto v = g.leaf({4}, {1, 2, 3, 4}, true);
  CHECK_THROWS_AS(g.backward(v), ValidationError);  // non-scalar loss
}

TEST_CASE("max_reduce routes ties to first row-major element") {
  ad::Graph g;
  auto x = g.leaf({4}, {2.0f, 7.0f, 7.0f, 1.0f}, true);
  auto m = ad::max_reduce(x);
  CHECK(m.item() == 7.0f);
  g.backward(m);
  CHECK(x.grad()[0] == 0.0f);
  CHECK(x.grad()[1] == 1.0f);
  CHECK(x.grad()[2] == 0.0f);
}

TEST_CASE("determinism: identical inputs give bitwise-identical outputs") {
  Rng rng(42);
  const auto xv = random_vec(rng, 2 * 8 * 8);
  const auto kv = random_vec(rng, 4 * 2 * 3 * 3);
  std::vector<float> first;
  for (int rep = 0; rep < 2; ++rep) {
    ad::Graph g;
    auto x = g.leaf({2, 8, 8}, xv);
    auto k = g.leaf({4, 2, 3, 3}, kv);
    auto y = ad::sigmoid(ad::conv2d(x, k, 1, 1));
    if (rep == 0) {
      first.assign(y.values().begin(), y.values().end());
    } else {
      auto vals = y.values();
      for (std::size_t i = 0; i < vals.size(); ++i) CHECK(vals[i] == first[i]);
    }
  }
}

TEST_CASE("no graph leaks across reset cycles") {
  Rng rng(3);
  const auto xv = random_vec(rng, 16);
  ad::Graph g;
  std::size_t baseline = 0;
  for (int pass = 0; pass < 5; ++pass) {
    g.clear();
    auto x = g.leaf({16}, xv, true);
    auto loss = ad::sum(ad::exp(ad::mul(x, 0.5f)));
    g.backward(loss);
    if (pass == 0) baseline = g.node_count();
    CHECK(g.node_count() == baseline);
  }
}

TEST_CASE("finite values through a deep composite") {
  Rng rng(11);
  ad::Graph g;
  auto x = g.leaf({4, 6, 6}, random_vec(rng, 4 * 6 * 6), true);
  auto k = g.leaf({4, 4, 3, 3}, random_vec(rng, 4 * 4 * 9, -0.4, 0.4), true);
  ad::Tensor h = x;
  for (int i = 0; i < 3; ++i) h = ad::relu(ad::conv2d(h, k, 1, 1));
  auto loss = ad::sum(ad::mul(h, h));
  g.backward(loss);
  for (float v : loss.values()) CHECK(std::isfinite(v));
  for (float v : x.grad()) CHECK(std::isfinite(v));
  for (float v : k.grad()) CHECK(std::isfinite(v));
}

TEST_CASE("gradcheck: elementwise, reductions, activations") {
  Rng rng(7);
  for (int inst = 0; inst < 3; ++inst) {
    const std::size_t n = 12;
    auto a = random_vec(rng, n);
    auto b = random_vec(rng, n, 0.2, 1.2);  // keep divisors away from zero
    const auto w = random_vec(rng, n);

    auto check2 = [&](auto build, auto fwd) {
      const double err = ref::max_grad_rel_error(
          {a, b}, {{12}, {12}},
          [&](ad::Graph& g, std::vector<ad::Tensor>& in) {
            return weighted_sum(g, build(in[0], in[1]), w);
          },
          [&](const std::vector<ref::dvec>& in) {
            ref::dvec out(n);
            for (std::size_t i = 0; i < n; ++i) out[i] = fwd(in[0][i], in[1][i]);
            return ref_weighted(out, w);
          });
      CHECK(err < 1e-3);
    };
    check2([](auto& x, auto& y) { return ad::add(x, y); },
           [](double x, double y) { return x + y; });
    check2([](auto& x, auto& y) { return ad::sub(x, y); },
           [](double x, double y) { return x - y; });
    check2([](auto& x, auto& y) { return ad::mul(x, y); },
           [](double x, double y) { return x * y; });
    check2([](auto& x, auto& y) { return ad::div(x, y); },
           [](double x, double y) { return x / y; });

    // sum of exp (spec example)
    const double err_exp = ref::max_grad_rel_error(
        {a}, {{12}},
        [&](ad::Graph&, std::vector<ad::Tensor>& in) { return ad::sum(ad::exp(in[0])); },
        [&](const std::vector<ref::dvec>& in) {
          double acc = 0.0;
          for (double v : in[0]) acc += std::exp(v);
          return acc;
        });
    CHECK(err_exp < 1e-3);

    // sigmoid
    const double err_sig = ref::max_grad_rel_error(
        {a}, {{12}},
        [&](ad::Graph& g, std::vector<ad::Tensor>& in) {
          return weighted_sum(g, ad::sigmoid(in[0]), w);
        },
        [&](const std::vector<ref::dvec>& in) {
          ref::dvec out(n);
          for (std::size_t i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-in[0][i]));
          return ref_weighted(out, w);
        });
    CHECK(err_sig < 1e-3);

    // relu away from the kink
    ref::GradCheck relu_opts;
    relu_opts.skip = [&](std::size_t, std::size_t idx) { return std::abs(a[idx]) < 5e-3; };
    const double err_relu = ref::max_grad_rel_error(
        {a}, {{12}},
        [&](ad::Graph& g, std::vector<ad::Tensor>& in) {
          return weighted_sum(g, ad::relu(in[0]), w);
        },
        [&](const std::vector<ref::dvec>& in) {
          ref::dvec out(n);
          for (std::size_t i = 0; i < n; ++i) out[i] = std::max(0.0, in[0][i]);
          return ref_weighted(out, w);
        },
        relu_opts);
    CHECK(err_relu < 1e-3);
  }
}

TEST_CASE("gradcheck: matmul against finite differences") {
  Rng rng(19);
  for (int inst = 0; inst < 3; ++inst) {
    auto a = random_vec(rng, 3 * 4);
    auto b = random_vec(rng, 4 * 2);
    const auto w = random_vec(rng, 3 * 2);
    const double err = ref::max_grad_rel_error(
        {a, b}, {{3, 4}, {4, 2}},
        [&](ad::Graph& g, std::vector<ad::Tensor>& in) {
          return weighted_sum(g, ad::matmul(in[0], in[1]), w);
        },
        [&](const std::vector<ref::dvec>& in) {
          return ref_weighted(ref::matmul(in[0], 3, 4, in[1], 2), w);
        });
    CHECK(err < 1e-3);
  }
}

TEST_CASE("gradcheck: conv2d against direct-loop reference") {
  Rng rng(23);
  for (int inst = 0; inst < 3; ++inst) {
    auto x = random_vec(rng, 2 * 8 * 8);
    auto k = random_vec(rng, 3 * 2 * 3 * 3);
    const auto w = random_vec(rng, 3 * 8 * 8);
    const double err = ref::max_grad_rel_error(
        {x, k}, {{2, 8, 8}, {3, 2, 3, 3}},
        [&](ad::Graph& g, std::vector<ad::Tensor>& in) {
          return weighted_sum(g, ad::conv2d(in[0], in[1], 1, 1), w);
        },
        [&](const std::vector<ref::dvec>& in) {
          return ref_weighted(ref::conv2d(in[0], 2, 8, 8, in[1], 3, 3, 3, 1, 1), w);
        });
    CHECK(err < 1e-3);
  }
}

TEST_CASE("gradcheck: pooling, bias, reshape, clamp, max") {
  Rng rng(31);
  auto x = random_vec(rng, 2 * 6 * 6);
  auto b = random_vec(rng, 2);
  const auto w = random_vec(rng, 2 * 3 * 3);
  const auto w2 = random_vec(rng, 2 * 6 * 6);
  const auto wc = random_vec(rng, 2);

  const double err_pool = ref::max_grad_rel_error(
      {x}, {{2, 6, 6}},
      [&](ad::Graph& g, std::vector<ad::Tensor>& in) {
        return weighted_sum(g, ad::avgpool2d(in[0], 2, 2), w);
      },
      [&](const std::vector<ref::dvec>& in) {
        return ref_weighted(ref::avgpool2d(in[0], 2, 6, 6, 2, 2), w);
      });
  CHECK(err_pool < 1e-3);

  const double err_gap = ref::max_grad_rel_error(
      {x}, {{2, 6, 6}},
      [&](ad::Graph& g, std::vector<ad::Tensor>& in) {
        return weighted_sum(g, ad::global_avgpool(in[0]), wc);
      },
      [&](const std::vector<ref::dvec>& in) {
        return ref_weighted(ref::global_avgpool(in[0], 2, 36), wc);
      });
  CHECK(err_gap < 1e-3);

  const double err_bias = ref::max_grad_rel_error(
      {x, b}, {{2, 6, 6}, {2}},
      [&](ad::Graph& g, std::vector<ad::Tensor>& in) {
        return weighted_sum(g, ad::bias_add(in[0], in[1]), w2);
      },
      [&](const std::vector<ref::dvec>& in) {
        return ref_weighted(ref::bias_add(in[0], 2, 36, in[1]), w2);
      });
  CHECK(err_bias < 1e-3);

  const double err_reshape = ref::max_grad_rel_error(
      {x}, {{2, 6, 6}},
      [&](ad::Graph& g, std::vector<ad::Tensor>& in) {
        return weighted_sum(g, ad::reshape(in[0], {72}), w2);
      },
      [&](const std::vector<ref::dvec>& in) { return ref_weighted(in[0], w2); });
  CHECK(err_reshape < 1e-3);

  ref::GradCheck clamp_opts;
  clamp_opts.skip = [&](std::size_t, std::size_t idx) {
    return std::abs(std::abs(x[idx]) - 0.5) < 5e-3;
  };
  const double err_clamp = ref::max_grad_rel_error(
      {x}, {{2, 6, 6}},
      [&](ad::Graph& g, std::vector<ad::Tensor>& in) {
        return weighted_sum(g, ad::clamp(in[0], -0.5f, 0.5f), w2);
      },
      [&](const std::vector<ref::dvec>& in) {
        ref::dvec out(in[0].size());
        for (std::size_t i = 0; i < out.size(); ++i) {
          out[i] = std::clamp(in[0][i], -0.5, 0.5);
        }
        return ref_weighted(out, w2);
      },
      clamp_opts);
  CHECK(err_clamp < 1e-3);

  const double err_max = ref::max_grad_rel_error(
      {x}, {{2, 6, 6}},
      [&](ad::Graph&, std::vector<ad::Tensor>& in) { return ad::max_reduce(in[0]); },
      [&](const std::vector<ref::dvec>& in) {
        return *std::max_element(in[0].begin(), in[0].end());
      });
  CHECK(err_max < 1e-3);
}

TEST_SUITE_END();
