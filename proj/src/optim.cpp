#include "gnr/optim.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace gnr::optim {

Adam::Adam(nets::NamedParams params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& [name, v] : params_) {
    m_.emplace_back(v.shape());
    v_.emplace_back(v.shape());
  }
}

std::vector<ag::Var> Adam::vars() const {
  std::vector<ag::Var> out;
  out.reserve(params_.size());
  for (const auto& [name, v] : params_) out.push_back(v);
  return out;
}

void Adam::step(const std::vector<ag::Var>& grads) {
  if (grads.size() != params_.size()) throw std::invalid_argument("Adam::step: gradient count mismatch");
  ++steps_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const float lr = static_cast<float>(cfg_.learning_rate * std::sqrt(c2) / c1);
  const float eps = static_cast<float>(cfg_.eps * std::sqrt(c2));
  const float fb1 = static_cast<float>(b1), fb2 = static_cast<float>(b2);
  for (std::size_t p = 0; p < params_.size(); ++p) {
    Tensor& w = params_[p].second.mutable_value();
    const Tensor& g = grads[p].value();
    if (g.shape() != w.shape()) throw ShapeError("Adam::step: gradient shape mismatch for " + params_[p].first);
    float* m = m_[p].data();
    float* v = v_[p].data();
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(w.numel());
#pragma omp parallel for simd if (n > 65536)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      m[i] = fb1 * m[i] + (1.0f - fb1) * g[i];
      v[i] = fb2 * v[i] + (1.0f - fb2) * g[i] * g[i];
      w[i] -= lr * m[i] / (std::sqrt(v[i]) + eps);
    }
  }
}

std::vector<std::pair<std::string, Tensor>> Adam::state(const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t p = 0; p < params_.size(); ++p) {
    out.emplace_back(prefix + "m." + params_[p].first, m_[p]);
    out.emplace_back(prefix + "v." + params_[p].first, v_[p]);
  }
  return out;
}

void Adam::load_state(const std::string& prefix, const std::vector<std::pair<std::string, Tensor>>& entries,
                      std::int64_t steps) {
  std::map<std::string, const Tensor*> index;
  for (const auto& [name, t] : entries) index[name] = &t;
  auto fetch = [&](const std::string& key, const Shape& shape) {
    const auto it = index.find(key);
    if (it == index.end()) throw std::runtime_error("optimizer state is missing " + key);
    if (it->second->shape() != shape) throw std::runtime_error("optimizer state has wrong shape for " + key);
    return *it->second;
  };
  for (std::size_t p = 0; p < params_.size(); ++p) {
    m_[p] = fetch(prefix + "m." + params_[p].first, params_[p].second.shape());
    v_[p] = fetch(prefix + "v." + params_[p].first, params_[p].second.shape());
  }
  steps_ = steps;
}

}  // namespace gnr::optim
