#pragma once

// Serial reference implementations of the kernels in kernels.hpp. Written as
// direct loops with double accumulation; kept for testing and benchmarking.

#include <span>

#include "gnr/kernels.hpp"
#include "gnr/tensor.hpp"

namespace gnr::reference {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, const float* b, float beta,
          float* c);

Tensor conv2d(const Tensor& x, const Tensor& w, int pad);
Tensor conv2d_input_grad(const Tensor& gy, const Tensor& w, int pad, const Shape& x_shape);
Tensor conv2d_weight_grad(const Tensor& x, const Tensor& gy, int pad, const Shape& w_shape);

Tensor broadcast_binary(kernels::BinaryOp op, const Tensor& a, const Tensor& b);
Tensor sum_to(const Tensor& x, const Shape& target);
Tensor avg_pool2(const Tensor& x);
Tensor upsample2(const Tensor& x);
Tensor minibatch_stddev(const Tensor& feats, float eps);
void mean_covariance(std::span<const double> rows, int n, int d, std::span<double> mean, std::span<double> cov);

}  // namespace gnr::reference
