#include "gnr/reference.hpp"

#include <cmath>
#include <vector>

namespace gnr::reference {
namespace {

// Multi-index helpers for rank <= 4 broadcasting.
std::vector<int> unravel(std::size_t flat, const Shape& s) {
  std::vector<int> idx(s.size());
  for (std::size_t d = s.size(); d-- > 0;) {
    idx[d] = static_cast<int>(flat % static_cast<std::size_t>(s[d]));
    flat /= static_cast<std::size_t>(s[d]);
  }
  return idx;
}

std::size_t ravel_broadcast(const std::vector<int>& out_idx, const Shape& s) {
  const std::size_t off = out_idx.size() - s.size();
  std::size_t flat = 0;
  for (std::size_t d = 0; d < s.size(); ++d) {
    const int i = s[d] == 1 ? 0 : out_idx[off + d];
    flat = flat * static_cast<std::size_t>(s[d]) + static_cast<std::size_t>(i);
  }
  return flat;
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, const float* b, float beta,
          float* c) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) {
        const float av = trans_a ? a[p * m + i] : a[i * k + p];
        const float bv = trans_b ? b[j * k + p] : b[p * n + j];
        acc += static_cast<double>(av) * bv;
      }
      const double prev = beta == 0.0f ? 0.0 : static_cast<double>(beta) * c[i * n + j];
      c[i * n + j] = static_cast<float>(alpha * acc + prev);
    }
  }
}

Tensor conv2d(const Tensor& x, const Tensor& w, int pad) {
  const int B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Co = w.dim(0), K = w.dim(2);
  const int Ho = H + 2 * pad - K + 1, Wo = W + 2 * pad - K + 1;
  Tensor y({B, Co, Ho, Wo});
  for (int b = 0; b < B; ++b)
    for (int o = 0; o < Co; ++o)
      for (int oh = 0; oh < Ho; ++oh)
        for (int ow = 0; ow < Wo; ++ow) {
          double acc = 0.0;
          for (int i = 0; i < Ci; ++i)
            for (int kh = 0; kh < K; ++kh)
              for (int kw = 0; kw < K; ++kw) {
                const int ih = oh + kh - pad, iw = ow + kw - pad;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += static_cast<double>(x.at(b, i, ih, iw)) * w.at(o, i, kh, kw);
              }
          y.at(b, o, oh, ow) = static_cast<float>(acc);
        }
  return y;
}

Tensor conv2d_input_grad(const Tensor& gy, const Tensor& w, int pad, const Shape& x_shape) {
  const int B = x_shape[0], Ci = x_shape[1], H = x_shape[2], W = x_shape[3];
  const int Co = w.dim(0), K = w.dim(2);
  const int Ho = gy.dim(2), Wo = gy.dim(3);
  Tensor dx(x_shape);
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < Ci; ++i)
      for (int ih = 0; ih < H; ++ih)
        for (int iw = 0; iw < W; ++iw) {
          double acc = 0.0;
          for (int o = 0; o < Co; ++o)
            for (int kh = 0; kh < K; ++kh)
              for (int kw = 0; kw < K; ++kw) {
                const int oh = ih - kh + pad, ow = iw - kw + pad;
                if (oh < 0 || oh >= Ho || ow < 0 || ow >= Wo) continue;
                acc += static_cast<double>(gy.at(b, o, oh, ow)) * w.at(o, i, kh, kw);
              }
          dx.at(b, i, ih, iw) = static_cast<float>(acc);
        }
  return dx;
}

Tensor conv2d_weight_grad(const Tensor& x, const Tensor& gy, int pad, const Shape& w_shape) {
  const int B = x.dim(0), H = x.dim(2), W = x.dim(3);
  const int Co = w_shape[0], Ci = w_shape[1], K = w_shape[2];
  const int Ho = gy.dim(2), Wo = gy.dim(3);
  Tensor dw(w_shape);
  for (int o = 0; o < Co; ++o)
    for (int i = 0; i < Ci; ++i)
      for (int kh = 0; kh < K; ++kh)
        for (int kw = 0; kw < K; ++kw) {
          double acc = 0.0;
          for (int b = 0; b < B; ++b)
            for (int oh = 0; oh < Ho; ++oh)
              for (int ow = 0; ow < Wo; ++ow) {
                const int ih = oh + kh - pad, iw = ow + kw - pad;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += static_cast<double>(gy.at(b, o, oh, ow)) * x.at(b, i, ih, iw);
              }
          dw.at(o, i, kh, kw) = static_cast<float>(acc);
        }
  return dw;
}

Tensor broadcast_binary(kernels::BinaryOp op, const Tensor& a, const Tensor& b) {
  const Shape out_shape = kernels::broadcast_shape(a.shape(), b.shape());
  Tensor out(out_shape);
  for (std::size_t f = 0; f < out.numel(); ++f) {
    const std::vector<int> idx = unravel(f, out_shape);
    const float u = a[ravel_broadcast(idx, a.shape())];
    const float v = b[ravel_broadcast(idx, b.shape())];
    switch (op) {
      case kernels::BinaryOp::Add: out[f] = u + v; break;
      case kernels::BinaryOp::Sub: out[f] = u - v; break;
      case kernels::BinaryOp::Mul: out[f] = u * v; break;
      case kernels::BinaryOp::Div: out[f] = u / v; break;
    }
  }
  return out;
}

Tensor sum_to(const Tensor& x, const Shape& target) {
  std::vector<double> acc(shape_numel(target), 0.0);
  for (std::size_t f = 0; f < x.numel(); ++f) acc[ravel_broadcast(unravel(f, x.shape()), target)] += x[f];
  Tensor out(target);
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i]);
  return out;
}

Tensor avg_pool2(const Tensor& x) {
  Tensor y({x.dim(0), x.dim(1), x.dim(2) / 2, x.dim(3) / 2});
  for (int n = 0; n < y.dim(0); ++n)
    for (int c = 0; c < y.dim(1); ++c)
      for (int h = 0; h < y.dim(2); ++h)
        for (int w = 0; w < y.dim(3); ++w) {
          double acc = 0.0;
          for (int dh = 0; dh < 2; ++dh)
            for (int dw = 0; dw < 2; ++dw) acc += x.at(n, c, 2 * h + dh, 2 * w + dw);
          y.at(n, c, h, w) = static_cast<float>(acc / 4.0);
        }
  return y;
}

Tensor upsample2(const Tensor& x) {
  Tensor y({x.dim(0), x.dim(1), 2 * x.dim(2), 2 * x.dim(3)});
  for (int n = 0; n < y.dim(0); ++n)
    for (int c = 0; c < y.dim(1); ++c)
      for (int h = 0; h < y.dim(2); ++h)
        for (int w = 0; w < y.dim(3); ++w) y.at(n, c, h, w) = x.at(n, c, h / 2, w / 2);
  return y;
}

Tensor minibatch_stddev(const Tensor& feats, float eps) {
  const int B = feats.dim(0), F = feats.dim(1);
  Tensor out({F});
  for (int j = 0; j < F; ++j) {
    double mean = 0.0;
    for (int i = 0; i < B; ++i) mean += feats[static_cast<std::size_t>(i * F + j)];
    mean /= B;
    double ss = 0.0;
    for (int i = 0; i < B; ++i) {
      const double d = feats[static_cast<std::size_t>(i * F + j)] - mean;
      ss += d * d;
    }
    out[static_cast<std::size_t>(j)] = static_cast<float>(std::sqrt(ss / B + eps));
  }
  return out;
}

void mean_covariance(std::span<const double> rows, int n, int d, std::span<double> mean, std::span<double> cov) {
  for (int j = 0; j < d; ++j) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += rows[static_cast<std::size_t>(i) * d + j];
    mean[static_cast<std::size_t>(j)] = acc / n;
  }
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i)
        acc += (rows[static_cast<std::size_t>(i) * d + a] - mean[static_cast<std::size_t>(a)]) *
               (rows[static_cast<std::size_t>(i) * d + b] - mean[static_cast<std::size_t>(b)]);
      cov[static_cast<std::size_t>(a) * d + b] = acc / (n - 1);
    }
}

}  // namespace gnr::reference
