#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "gnr/autograd.hpp"
#include "gnr/rng.hpp"
#include "gnr/tensor.hpp"

namespace gnr::testing {

inline Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(scale * rng.normal());
  return t;
}

inline Tensor random_image(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(static_cast<double>(a[i]) - b[i]));
  return m;
}

inline double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// ||a - b|| / max(||a||, ||b||, floor)
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-12) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return norm(d) / std::max({norm(a), norm(b), floor});
}

struct GradCheck {
  std::vector<double> analytic;
  std::vector<double> numeric;
  double rel_error() const { return relative_error(analytic, numeric); }
};

/// Central finite differences of a scalar function over (a slice of) the
/// entries of `params`, compared against reverse-mode gradients.
inline GradCheck grad_check(const std::function<ag::Var()>& f, std::vector<ag::Var> params, double step,
                            std::size_t max_entries_per_param = 16) {
  GradCheck out;
  const ag::Var y = f();
  const std::vector<ag::Var> g = ag::grad(y, params);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& value = params[p].mutable_value();
    const std::size_t n = value.numel();
    const std::size_t stride = std::max<std::size_t>(1, n / max_entries_per_param);
    for (std::size_t i = 0; i < n; i += stride) {
      const float orig = value[i];
      value[i] = static_cast<float>(orig + step);
      const double fp = f().item();
      value[i] = static_cast<float>(orig - step);
      const double fm = f().item();
      value[i] = orig;
      out.numeric.push_back((fp - fm) / (2.0 * step));
      out.analytic.push_back(g[p].value()[i]);
    }
  }
  return out;
}

}  // namespace gnr::testing
