#pragma once

// OpenMP-parallel compute kernels. Every kernel here has a serial
// counterpart in reference.hpp with the same signature; the tests check the
// two against each other and gnr_bench times them side by side.

#include <cstddef>
#include <span>

#include "gnr/tensor.hpp"

namespace gnr::kernels {

/// c = alpha * op(a) * op(b) + beta * c, all row-major. op(a) is m x k, op(b) is k x n.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, const float* b, float beta,
          float* c);

/// Stride-1 convolution, NCHW input, (out, in, k, k) weight, zero padding `pad`.
/// Output spatial size is H + 2*pad - k + 1.
Tensor conv2d(const Tensor& x, const Tensor& w, int pad);
/// Gradient of conv2d with respect to its input, given the output gradient.
Tensor conv2d_input_grad(const Tensor& gy, const Tensor& w, int pad, const Shape& x_shape);
/// Gradient of conv2d with respect to its weight, given input and output gradient.
Tensor conv2d_weight_grad(const Tensor& x, const Tensor& gy, int pad, const Shape& w_shape);

enum class BinaryOp { Add, Sub, Mul, Div };

/// Numpy-style broadcast of two shapes (rank <= 4).
Shape broadcast_shape(const Shape& a, const Shape& b);
Tensor broadcast_binary(BinaryOp op, const Tensor& a, const Tensor& b);
/// Sum `x` down to a broadcast-compatible `target` shape.
Tensor sum_to(const Tensor& x, const Shape& target);
Tensor broadcast_to(const Tensor& x, const Shape& target);
Tensor scale(const Tensor& x, float s);
double sum(const Tensor& x);

/// 2x2 average pooling (H and W must be even).
Tensor avg_pool2(const Tensor& x);
/// 2x nearest-neighbour upsampling.
Tensor upsample2(const Tensor& x);

Tensor gather_rows(const Tensor& x, std::span<const int> index);
/// out[index[i]] += x[i]; out has `rows` rows.
Tensor scatter_rows(const Tensor& x, std::span<const int> index, int rows);

/// Per-feature population standard deviation across the batch (rows):
/// out_j = sqrt(mean_i (f_ij - mean_i f_ij)^2 + eps).
Tensor minibatch_stddev(const Tensor& feats, float eps);

/// Column means and unbiased (1/(N-1)) covariance of an N x d row-major matrix.
void mean_covariance(std::span<const double> rows, int n, int d, std::span<double> mean, std::span<double> cov);

/// Elementwise map, parallel over elements.
template <class F>
Tensor map(const Tensor& x, F f) {
  Tensor out(x.shape());
  const float* src = x.data();
  float* dst = out.data();
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.numel());
#pragma omp parallel for simd if (n > 32768)
  for (std::ptrdiff_t i = 0; i < n; ++i) dst[i] = f(src[i]);
  return out;
}

/// Elementwise combination of two same-shape tensors.
template <class F>
Tensor zip(const Tensor& a, const Tensor& b, F f) {
  if (a.shape() != b.shape()) throw ShapeError("zip: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out(a.shape());
  const float* pa = a.data();
  const float* pb = b.data();
  float* dst = out.data();
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(a.numel());
#pragma omp parallel for simd if (n > 32768)
  for (std::ptrdiff_t i = 0; i < n; ++i) dst[i] = f(pa[i], pb[i]);
  return out;
}

}  // namespace gnr::kernels
