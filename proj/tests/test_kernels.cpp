#include <vector>

#include "doctest.h"
#include "gnr/kernels.hpp"
#include "gnr/reference.hpp"
#include "test_util.hpp"

using namespace gnr;
using gnr::testing::max_abs_diff;
using gnr::testing::random_tensor;

TEST_CASE("gemm matches the serial reference for every transpose combination") {
  Rng rng(11);
  for (int trial = 0; trial < 12; ++trial) {
    const int m = 1 + static_cast<int>(rng.index(17)), n = 1 + static_cast<int>(rng.index(23)),
              k = 1 + static_cast<int>(rng.index(19));
    for (bool ta : {false, true})
      for (bool tb : {false, true}) {
        Tensor a = random_tensor(rng, ta ? Shape{k, m} : Shape{m, k});
        Tensor b = random_tensor(rng, tb ? Shape{n, k} : Shape{k, n});
        Tensor c0 = random_tensor(rng, {m, n});
        Tensor c1 = c0;
        kernels::gemm(ta, tb, m, n, k, 0.7f, a.data(), b.data(), 0.3f, c0.data());
        reference::gemm(ta, tb, m, n, k, 0.7f, a.data(), b.data(), 0.3f, c1.data());
        CHECK(max_abs_diff(c0, c1) < 1e-4);
      }
  }
}

TEST_CASE("conv2d forward and both gradients match direct loops") {
  Rng rng(3);
  struct Case {
    int b, ci, co, h, k, pad;
  };
  for (const Case c : {Case{2, 3, 4, 8, 3, 1}, Case{3, 5, 2, 6, 1, 0}, Case{1, 2, 3, 7, 5, 2}, Case{2, 4, 4, 5, 3, 0}}) {
    Tensor x = random_tensor(rng, {c.b, c.ci, c.h, c.h});
    Tensor w = random_tensor(rng, {c.co, c.ci, c.k, c.k});
    Tensor y = kernels::conv2d(x, w, c.pad);
    CHECK(max_abs_diff(y, reference::conv2d(x, w, c.pad)) < 1e-4);

    Tensor gy = random_tensor(rng, y.shape());
    CHECK(max_abs_diff(kernels::conv2d_input_grad(gy, w, c.pad, x.shape()),
                       reference::conv2d_input_grad(gy, w, c.pad, x.shape())) < 1e-4);
    CHECK(max_abs_diff(kernels::conv2d_weight_grad(x, gy, c.pad, w.shape()),
                       reference::conv2d_weight_grad(x, gy, c.pad, w.shape())) < 1e-3);
  }
}

TEST_CASE("conv2d gradients are adjoint to the forward map") {
  Rng rng(5);
  Tensor x = random_tensor(rng, {2, 3, 6, 6});
  Tensor w = random_tensor(rng, {4, 3, 3, 3});
  Tensor gy = random_tensor(rng, {2, 4, 6, 6});
  const Tensor y = kernels::conv2d(x, w, 1);
  const Tensor dx = kernels::conv2d_input_grad(gy, w, 1, x.shape());
  const Tensor dw = kernels::conv2d_weight_grad(x, gy, 1, w.shape());
  double lhs = 0, rx = 0, rw = 0;
  for (std::size_t i = 0; i < y.numel(); ++i) lhs += static_cast<double>(gy[i]) * y[i];
  for (std::size_t i = 0; i < x.numel(); ++i) rx += static_cast<double>(dx[i]) * x[i];
  for (std::size_t i = 0; i < w.numel(); ++i) rw += static_cast<double>(dw[i]) * w[i];
  CHECK(lhs == doctest::Approx(rx).epsilon(1e-4));
  CHECK(lhs == doctest::Approx(rw).epsilon(1e-4));
}

TEST_CASE("broadcast arithmetic and reductions match the reference") {
  Rng rng(9);
  const std::vector<std::pair<Shape, Shape>> cases = {
      {{2, 3, 4, 5}, {1, 3, 1, 1}}, {{2, 3, 4, 5}, {2, 3, 1, 1}}, {{4, 6}, {1, 6}},
      {{4, 6}, {4, 1}},             {{3, 2, 2}, {2, 2}},          {{5}, {1}}};
  for (const auto& [sa, sb] : cases) {
    Tensor a = random_tensor(rng, sa);
    Tensor b = random_tensor(rng, sb);
    for (auto op : {kernels::BinaryOp::Add, kernels::BinaryOp::Sub, kernels::BinaryOp::Mul}) {
      CHECK(kernels::broadcast_binary(op, a, b) == reference::broadcast_binary(op, a, b));
      CHECK(kernels::broadcast_binary(op, b, a) == reference::broadcast_binary(op, b, a));
    }
    CHECK(max_abs_diff(kernels::sum_to(a, sb), reference::sum_to(a, sb)) < 1e-4);
  }
  CHECK_THROWS_AS(kernels::broadcast_shape({2, 3}, {3, 2}), ShapeError);
}

TEST_CASE("pooling and upsampling") {
  Rng rng(2);
  Tensor x = random_tensor(rng, {2, 3, 8, 6});
  CHECK(max_abs_diff(kernels::avg_pool2(x), reference::avg_pool2(x)) < 1e-6);
  CHECK(kernels::upsample2(x) == reference::upsample2(x));
  // Pooling undoes nearest upsampling exactly.
  CHECK(max_abs_diff(kernels::avg_pool2(kernels::upsample2(x)), x) < 1e-6);
}

TEST_CASE("minibatch stddev: closed form, zero variance and oracle agreement") {
  Tensor two({2, 1}, std::vector<float>{0.0f, 2.0f});
  CHECK(kernels::minibatch_stddev(two, 1e-8f)[0] == doctest::Approx(1.0).epsilon(1e-7));

  Tensor same({4, 3}, 0.25f);
  const Tensor zero_var = kernels::minibatch_stddev(same, 1e-8f);
  for (float v : zero_var.values()) CHECK(v == doctest::Approx(1e-4).epsilon(1e-3));

  Rng rng(1);
  Tensor f = random_tensor(rng, {7, 33});
  CHECK(max_abs_diff(kernels::minibatch_stddev(f, 1e-8f), reference::minibatch_stddev(f, 1e-8f)) < 1e-6);
  CHECK_THROWS_AS(kernels::minibatch_stddev(Tensor({1, 3}), 1e-8f), ShapeError);
}

TEST_CASE("mean/covariance kernel matches two-pass loops") {
  Rng rng(4);
  const int n = 50, d = 6;
  std::vector<double> rows(n * d);
  for (double& v : rows) v = rng.normal() * 2.0 + 1.0;
  std::vector<double> m0(d), c0(d * d), m1(d), c1(d * d);
  kernels::mean_covariance(rows, n, d, m0, c0);
  reference::mean_covariance(rows, n, d, m1, c1);
  for (int i = 0; i < d; ++i) CHECK(m0[i] == doctest::Approx(m1[i]).epsilon(1e-12));
  for (int i = 0; i < d * d; ++i) CHECK(c0[i] == doctest::Approx(c1[i]).epsilon(1e-10));
}

TEST_CASE("gather and scatter rows are adjoint") {
  Rng rng(8);
  Tensor x = random_tensor(rng, {4, 3});
  const std::vector<int> perm = {2, 0, 3, 1};
  Tensor g = kernels::gather_rows(x, perm);
  CHECK(g[0] == x[6]);
  Tensor back = kernels::scatter_rows(g, perm, 4);
  CHECK(back == x);
}
