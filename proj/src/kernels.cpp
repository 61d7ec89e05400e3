#include "gnr/kernels.hpp"

#include <omp.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace gnr::kernels {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

struct ConvGeom {
  int batch, in_ch, height, width;
  int out_ch, kernel, pad;
  int out_h, out_w;
};

ConvGeom make_geom(const Shape& x, const Shape& w, int pad) {
  if (x.size() != 4 || w.size() != 4) throw ShapeError("conv2d expects NCHW input and OIKK weight");
  if (x[1] != w[1]) throw ShapeError("conv2d channel mismatch: input " + shape_str(x) + " weight " + shape_str(w));
  if (w[2] != w[3]) throw ShapeError("conv2d expects square kernels");
  ConvGeom g{x[0], x[1], x[2], x[3], w[0], w[2], pad, x[2] + 2 * pad - w[2] + 1, x[3] + 2 * pad - w[3] + 1};
  if (g.out_h <= 0 || g.out_w <= 0) throw ShapeError("conv2d kernel larger than padded input");
  return g;
}

// Convolution as a sum of k*k shifted GEMMs over a zero-padded copy of the
// input laid out as (C, B * Hp * Wp). Output column j = b*Hp*Wp + oh*Wp + ow
// reads padded columns j + kh*Wp + kw, so every tap is one strided GEMM over
// the whole batch. Columns with ow >= out_w or oh >= out_h are discarded.
struct PaddedLayout {
  int hp, wp;
  std::ptrdiff_t cols;  // B * Hp * Wp
  std::ptrdiff_t ld;    // cols plus a zero tail so the last tap stays in bounds
  std::ptrdiff_t offset(int kh, int kw) const { return static_cast<std::ptrdiff_t>(kh) * wp + kw; }
};

PaddedLayout padded_layout(const ConvGeom& g) {
  PaddedLayout l{};
  l.hp = g.height + 2 * g.pad;
  l.wp = g.width + 2 * g.pad;
  l.cols = static_cast<std::ptrdiff_t>(g.batch) * l.hp * l.wp;
  l.ld = l.cols + l.offset(g.kernel - 1, g.kernel - 1);
  return l;
}

using StridedConst = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using StridedMut = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;

// (B, C, H, W) -> zero-padded (C, ld).
std::vector<float> pad_input(const float* x, const ConvGeom& g, const PaddedLayout& l) {
  std::vector<float> xp(static_cast<std::size_t>(g.in_ch) * l.ld, 0.0f);
#pragma omp parallel for collapse(2) if (xp.size() > 65536)
  for (int c = 0; c < g.in_ch; ++c)
    for (int b = 0; b < g.batch; ++b) {
      const float* src = x + (static_cast<std::size_t>(b) * g.in_ch + c) * g.height * g.width;
      float* dst = xp.data() + c * l.ld + static_cast<std::ptrdiff_t>(b) * l.hp * l.wp;
      for (int h = 0; h < g.height; ++h)
        std::memcpy(dst + static_cast<std::ptrdiff_t>(h + g.pad) * l.wp + g.pad, src + static_cast<std::size_t>(h) * g.width,
                    sizeof(float) * static_cast<std::size_t>(g.width));
    }
  return xp;
}

// (B, O, out_h, out_w) -> (O, cols) with zeros in the discarded columns.
std::vector<float> spread_output(const float* y, const ConvGeom& g, const PaddedLayout& l) {
  std::vector<float> yp(static_cast<std::size_t>(g.out_ch) * l.cols, 0.0f);
#pragma omp parallel for collapse(2) if (yp.size() > 65536)
  for (int o = 0; o < g.out_ch; ++o)
    for (int b = 0; b < g.batch; ++b) {
      const float* src = y + (static_cast<std::size_t>(b) * g.out_ch + o) * g.out_h * g.out_w;
      float* dst = yp.data() + o * l.cols + static_cast<std::ptrdiff_t>(b) * l.hp * l.wp;
      for (int h = 0; h < g.out_h; ++h)
        std::memcpy(dst + static_cast<std::ptrdiff_t>(h) * l.wp, src + static_cast<std::size_t>(h) * g.out_w,
                    sizeof(float) * static_cast<std::size_t>(g.out_w));
    }
  return yp;
}

// Weight taps as k*k contiguous (O, C) blocks.
std::vector<float> split_taps(const float* w, const ConvGeom& g) {
  const int kk = g.kernel * g.kernel;
  std::vector<float> taps(static_cast<std::size_t>(kk) * g.out_ch * g.in_ch);
  for (int o = 0; o < g.out_ch; ++o)
    for (int c = 0; c < g.in_ch; ++c)
      for (int t = 0; t < kk; ++t)
        taps[(static_cast<std::size_t>(t) * g.out_ch + o) * g.in_ch + c] = w[(static_cast<std::size_t>(o) * g.in_ch + c) * kk + t];
  return taps;
}

struct Padded4 {
  int dims[4];
  std::size_t strides[4];
};

// Left-pad `s` to rank 4; strides are zero on broadcast dimensions of size 1
// when `out` is larger there.
Padded4 pad4(const Shape& s, const Shape& out) {
  Padded4 p{};
  const int off = 4 - static_cast<int>(s.size());
  for (int i = 0; i < 4; ++i) p.dims[i] = i < off ? 1 : s[static_cast<std::size_t>(i - off)];
  std::size_t stride = 1;
  for (int i = 3; i >= 0; --i) {
    const int od = out[static_cast<std::size_t>(i)];
    p.strides[i] = (p.dims[i] == 1 && od != 1) ? 0 : stride;
    stride *= static_cast<std::size_t>(p.dims[i]);
  }
  return p;
}

Shape to_rank4(const Shape& s) {
  Shape out(4 - s.size(), 1);
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

template <class F>
void broadcast_loop(const Tensor& a, const Tensor& b, Tensor& out, F f) {
  const Shape o4 = to_rank4(out.shape());
  const Padded4 pa = pad4(a.shape(), o4);
  const Padded4 pb = pad4(b.shape(), o4);
  const float* A = a.data();
  const float* B = b.data();
  float* O = out.data();
  const int d0 = o4[0], d1 = o4[1], d2 = o4[2], d3 = o4[3];
#pragma omp parallel for collapse(2) if (out.numel() > 32768)
  for (int i0 = 0; i0 < d0; ++i0) {
    for (int i1 = 0; i1 < d1; ++i1) {
      for (int i2 = 0; i2 < d2; ++i2) {
        const std::size_t ao = i0 * pa.strides[0] + i1 * pa.strides[1] + i2 * pa.strides[2];
        const std::size_t bo = i0 * pb.strides[0] + i1 * pb.strides[1] + i2 * pb.strides[2];
        float* orow = O + ((static_cast<std::size_t>(i0) * d1 + i1) * d2 + i2) * d3;
        const std::size_t sa = pa.strides[3], sb = pb.strides[3];
        for (int i3 = 0; i3 < d3; ++i3) orow[i3] = f(A[ao + i3 * sa], B[bo + i3 * sb]);
      }
    }
  }
}

template <class F>
Tensor binary_dispatch(const Tensor& a, const Tensor& b, F f) {
  if (a.shape() == b.shape()) return zip(a, b, f);
  Tensor out(broadcast_shape(a.shape(), b.shape()));
  if (b.numel() == 1) {
    const float s = b[0];
    float* o = out.data();
    const float* pa = a.data();
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(out.numel());
#pragma omp parallel for simd if (n > 32768)
    for (std::ptrdiff_t i = 0; i < n; ++i) o[i] = f(pa[i], s);
    return out;
  }
  broadcast_loop(a, b, out, f);
  return out;
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, const float* b, float beta,
          float* c) {
  MutMap C(c, m, n);
  if (beta == 0.0f) C.setZero();
  else if (beta != 1.0f) C *= beta;
  if (m == 0 || n == 0 || k == 0) return;
  if (!trans_a && !trans_b) {
    C.noalias() += alpha * (ConstMap(a, m, k) * ConstMap(b, k, n));
  } else if (trans_a && !trans_b) {
    C.noalias() += alpha * (ConstMap(a, k, m).transpose() * ConstMap(b, k, n));
  } else if (!trans_a && trans_b) {
    C.noalias() += alpha * (ConstMap(a, m, k) * ConstMap(b, n, k).transpose());
  } else {
    C.noalias() += alpha * (ConstMap(a, k, m).transpose() * ConstMap(b, n, k).transpose());
  }
}

Tensor conv2d(const Tensor& x, const Tensor& w, int pad) {
  const ConvGeom g = make_geom(x.shape(), w.shape(), pad);
  const PaddedLayout l = padded_layout(g);
  const std::vector<float> xp = pad_input(x.data(), g, l);
  const std::vector<float> taps = split_taps(w.data(), g);
  RowMat yp = RowMat::Zero(g.out_ch, l.cols);
  for (int kh = 0; kh < g.kernel; ++kh)
    for (int kw = 0; kw < g.kernel; ++kw) {
      const float* tap = taps.data() + static_cast<std::size_t>(kh * g.kernel + kw) * g.out_ch * g.in_ch;
      yp.noalias() += ConstMap(tap, g.out_ch, g.in_ch) *
                      StridedConst(xp.data() + l.offset(kh, kw), g.in_ch, l.cols, Eigen::OuterStride<>(l.ld));
    }
  Tensor y({g.batch, g.out_ch, g.out_h, g.out_w});
#pragma omp parallel for collapse(2) if (y.numel() > 65536)
  for (int b = 0; b < g.batch; ++b)
    for (int o = 0; o < g.out_ch; ++o) {
      const float* src = yp.data() + o * l.cols + static_cast<std::ptrdiff_t>(b) * l.hp * l.wp;
      float* dst = y.data() + (static_cast<std::size_t>(b) * g.out_ch + o) * g.out_h * g.out_w;
      for (int h = 0; h < g.out_h; ++h)
        std::memcpy(dst + static_cast<std::size_t>(h) * g.out_w, src + static_cast<std::ptrdiff_t>(h) * l.wp,
                    sizeof(float) * static_cast<std::size_t>(g.out_w));
    }
  return y;
}

Tensor conv2d_input_grad(const Tensor& gy, const Tensor& w, int pad, const Shape& x_shape) {
  const ConvGeom g = make_geom(x_shape, w.shape(), pad);
  if (gy.shape() != Shape{g.batch, g.out_ch, g.out_h, g.out_w})
    throw ShapeError("conv2d_input_grad: gradient shape " + shape_str(gy.shape()) + " inconsistent with input " +
                     shape_str(x_shape));
  const PaddedLayout l = padded_layout(g);
  const std::vector<float> yp = spread_output(gy.data(), g, l);
  const std::vector<float> taps = split_taps(w.data(), g);
  std::vector<float> dxp(static_cast<std::size_t>(g.in_ch) * l.ld, 0.0f);
  const ConstMap gym(yp.data(), g.out_ch, l.cols);
  for (int kh = 0; kh < g.kernel; ++kh)
    for (int kw = 0; kw < g.kernel; ++kw) {
      const float* tap = taps.data() + static_cast<std::size_t>(kh * g.kernel + kw) * g.out_ch * g.in_ch;
      StridedMut(dxp.data() + l.offset(kh, kw), g.in_ch, l.cols, Eigen::OuterStride<>(l.ld)).noalias() +=
          ConstMap(tap, g.out_ch, g.in_ch).transpose() * gym;
    }
  Tensor dx(x_shape);
#pragma omp parallel for collapse(2) if (dx.numel() > 65536)
  for (int b = 0; b < g.batch; ++b)
    for (int c = 0; c < g.in_ch; ++c) {
      const float* src = dxp.data() + c * l.ld + static_cast<std::ptrdiff_t>(b) * l.hp * l.wp;
      float* dst = dx.data() + (static_cast<std::size_t>(b) * g.in_ch + c) * g.height * g.width;
      for (int h = 0; h < g.height; ++h)
        std::memcpy(dst + static_cast<std::size_t>(h) * g.width, src + static_cast<std::ptrdiff_t>(h + g.pad) * l.wp + g.pad,
                    sizeof(float) * static_cast<std::size_t>(g.width));
    }
  return dx;
}

Tensor conv2d_weight_grad(const Tensor& x, const Tensor& gy, int pad, const Shape& w_shape) {
  const ConvGeom g = make_geom(x.shape(), w_shape, pad);
  if (gy.shape() != Shape{g.batch, g.out_ch, g.out_h, g.out_w})
    throw ShapeError("conv2d_weight_grad: gradient shape " + shape_str(gy.shape()) + " inconsistent with input " +
                     shape_str(x.shape()));
  const PaddedLayout l = padded_layout(g);
  const std::vector<float> xp = pad_input(x.data(), g, l);
  const std::vector<float> yp = spread_output(gy.data(), g, l);
  const ConstMap gym(yp.data(), g.out_ch, l.cols);
  const int kk = g.kernel * g.kernel;
  Tensor dw(w_shape);
  RowMat tap(g.out_ch, g.in_ch);
  for (int kh = 0; kh < g.kernel; ++kh)
    for (int kw = 0; kw < g.kernel; ++kw) {
      tap.noalias() = gym * StridedConst(xp.data() + l.offset(kh, kw), g.in_ch, l.cols, Eigen::OuterStride<>(l.ld)).transpose();
      const int t = kh * g.kernel + kw;
      for (int o = 0; o < g.out_ch; ++o)
        for (int c = 0; c < g.in_ch; ++c) dw[(static_cast<std::size_t>(o) * g.in_ch + c) * kk + t] = tap(o, c);
    }
  return dw;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  if (a.size() > 4 || b.size() > 4) throw ShapeError("broadcast supports rank <= 4");
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const int da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const int db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

Tensor broadcast_binary(BinaryOp op, const Tensor& a, const Tensor& b) {
  switch (op) {
    case BinaryOp::Add: return binary_dispatch(a, b, [](float u, float v) { return u + v; });
    case BinaryOp::Sub: return binary_dispatch(a, b, [](float u, float v) { return u - v; });
    case BinaryOp::Mul: return binary_dispatch(a, b, [](float u, float v) { return u * v; });
    case BinaryOp::Div: return binary_dispatch(a, b, [](float u, float v) { return u / v; });
  }
  throw std::logic_error("unknown binary op");
}

Tensor sum_to(const Tensor& x, const Shape& target) {
  if (x.shape() == target) return x;
  if (target.size() > x.shape().size()) throw ShapeError("sum_to: target rank exceeds source rank");
  const Shape x4 = to_rank4(x.shape());
  const Shape t4 = to_rank4(target);
  for (int i = 0; i < 4; ++i)
    if (t4[i] != 1 && t4[i] != x4[i])
      throw ShapeError("sum_to: " + shape_str(target) + " is not a reduction of " + shape_str(x.shape()));
  Tensor out(target);
  const float* X = x.data();
  const std::size_t s2 = x4[3], s1 = s2 * x4[2], s0 = s1 * x4[1];
  const int n_out = static_cast<int>(out.numel());
#pragma omp parallel for if (x.numel() > 32768)
  for (int o = 0; o < n_out; ++o) {
    int idx[4];
    int rem = o;
    for (int d = 3; d >= 0; --d) {
      idx[d] = rem % t4[d];
      rem /= t4[d];
    }
    int lo[4], hi[4];
    for (int d = 0; d < 4; ++d) {
      const bool reduce = t4[d] == 1 && x4[d] != 1;
      lo[d] = reduce ? 0 : idx[d];
      hi[d] = reduce ? x4[d] : idx[d] + 1;
    }
    double acc = 0.0;
    for (int i0 = lo[0]; i0 < hi[0]; ++i0)
      for (int i1 = lo[1]; i1 < hi[1]; ++i1)
        for (int i2 = lo[2]; i2 < hi[2]; ++i2) {
          const float* row = X + i0 * s0 + i1 * s1 + i2 * s2;
          for (int i3 = lo[3]; i3 < hi[3]; ++i3) acc += row[i3];
        }
    out[static_cast<std::size_t>(o)] = static_cast<float>(acc);
  }
  return out;
}

Tensor broadcast_to(const Tensor& x, const Shape& target) {
  if (x.shape() == target) return x;
  if (broadcast_shape(x.shape(), target) != target)
    throw ShapeError("broadcast_to: cannot expand " + shape_str(x.shape()) + " to " + shape_str(target));
  Tensor zeros(target);
  return binary_dispatch(zeros, x, [](float, float v) { return v; });
}

Tensor scale(const Tensor& x, float s) {
  return map(x, [s](float v) { return v * s; });
}

double sum(const Tensor& x) {
  double acc = 0.0;
  const float* p = x.data();
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.numel());
#pragma omp parallel for reduction(+ : acc) if (n > 65536)
  for (std::ptrdiff_t i = 0; i < n; ++i) acc += p[i];
  return acc;
}

Tensor avg_pool2(const Tensor& x) {
  if (x.rank() != 4 || x.dim(2) % 2 || x.dim(3) % 2) throw ShapeError("avg_pool2 expects NCHW with even H, W");
  const int planes = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor y({x.dim(0), x.dim(1), H / 2, W / 2});
#pragma omp parallel for if (x.numel() > 32768)
  for (int p = 0; p < planes; ++p) {
    const float* src = x.data() + static_cast<std::size_t>(p) * H * W;
    float* dst = y.data() + static_cast<std::size_t>(p) * (H / 2) * (W / 2);
    for (int h = 0; h < H / 2; ++h) {
      const float* r0 = src + static_cast<std::size_t>(2 * h) * W;
      const float* r1 = r0 + W;
      for (int w = 0; w < W / 2; ++w)
        dst[h * (W / 2) + w] = 0.25f * (r0[2 * w] + r0[2 * w + 1] + r1[2 * w] + r1[2 * w + 1]);
    }
  }
  return y;
}

Tensor upsample2(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("upsample2 expects NCHW");
  const int planes = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor y({x.dim(0), x.dim(1), 2 * H, 2 * W});
#pragma omp parallel for if (y.numel() > 32768)
  for (int p = 0; p < planes; ++p) {
    const float* src = x.data() + static_cast<std::size_t>(p) * H * W;
    float* dst = y.data() + static_cast<std::size_t>(p) * 4 * H * W;
    for (int h = 0; h < 2 * H; ++h) {
      const float* srow = src + static_cast<std::size_t>(h / 2) * W;
      float* drow = dst + static_cast<std::size_t>(h) * 2 * W;
      for (int w = 0; w < 2 * W; ++w) drow[w] = srow[w / 2];
    }
  }
  return y;
}

Tensor gather_rows(const Tensor& x, std::span<const int> index) {
  if (x.rank() < 1) throw ShapeError("gather_rows on rank-0 tensor");
  Shape s = x.shape();
  s[0] = static_cast<int>(index.size());
  Tensor out(s);
  const std::size_t row = x.dim(0) ? x.numel() / static_cast<std::size_t>(x.dim(0)) : 0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= x.dim(0)) throw ShapeError("gather_rows index out of range");
    std::memcpy(out.data() + i * row, x.data() + static_cast<std::size_t>(index[i]) * row, row * sizeof(float));
  }
  return out;
}

Tensor scatter_rows(const Tensor& x, std::span<const int> index, int rows) {
  if (x.rank() < 1 || static_cast<std::size_t>(x.dim(0)) != index.size())
    throw ShapeError("scatter_rows: index length must equal row count");
  Shape s = x.shape();
  s[0] = rows;
  Tensor out(s);
  const std::size_t row = index.empty() ? 0 : x.numel() / index.size();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= rows) throw ShapeError("scatter_rows index out of range");
    float* dst = out.data() + static_cast<std::size_t>(index[i]) * row;
    const float* src = x.data() + i * row;
    for (std::size_t j = 0; j < row; ++j) dst[j] += src[j];
  }
  return out;
}

Tensor minibatch_stddev(const Tensor& feats, float eps) {
  if (feats.rank() != 2) throw ShapeError("minibatch_stddev expects (batch, features)");
  const int B = feats.dim(0), F = feats.dim(1);
  if (B < 2) throw ShapeError("minibatch_stddev needs batch size >= 2");
  Tensor out({F});
#pragma omp parallel for if (static_cast<long>(B) * F > 65536)
  for (int j = 0; j < F; ++j) {
    double mean = 0.0;
    for (int i = 0; i < B; ++i) mean += feats[static_cast<std::size_t>(i) * F + j];
    mean /= B;
    double var = 0.0;
    for (int i = 0; i < B; ++i) {
      const double d = feats[static_cast<std::size_t>(i) * F + j] - mean;
      var += d * d;
    }
    out[static_cast<std::size_t>(j)] = static_cast<float>(std::sqrt(var / B + eps));
  }
  return out;
}

void mean_covariance(std::span<const double> rows, int n, int d, std::span<double> mean, std::span<double> cov) {
  if (n < 2) throw ShapeError("covariance needs at least two rows");
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const Mat> X(rows.data(), n, d);
  Eigen::Map<Eigen::RowVectorXd> mu(mean.data(), d);
  mu = X.colwise().mean();
  const Mat centered = X.rowwise() - mu;
  Eigen::Map<Mat> C(cov.data(), d, d);
  C.noalias() = centered.transpose() * centered;
  C /= static_cast<double>(n - 1);
}

}  // namespace gnr::kernels
