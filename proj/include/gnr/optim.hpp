#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gnr/autograd.hpp"
#include "gnr/nets.hpp"

namespace gnr::optim {

struct AdamConfig {
  double learning_rate = 0.002;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double eps = 1e-8;
};

/// Adam over a fixed list of named parameters, updated in place.
class Adam {
 public:
  Adam() = default;
  Adam(nets::NamedParams params, AdamConfig cfg);

  /// One update; `grads[i]` belongs to params()[i].
  void step(const std::vector<ag::Var>& grads);

  const nets::NamedParams& params() const { return params_; }
  std::vector<ag::Var> vars() const;
  std::int64_t steps() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }

  /// Moment estimates keyed "<prefix>m.<param>" / "<prefix>v.<param>".
  std::vector<std::pair<std::string, Tensor>> state(const std::string& prefix) const;
  /// Inverse of state(); throws if a moment is missing or mis-shaped.
  void load_state(const std::string& prefix, const std::vector<std::pair<std::string, Tensor>>& entries,
                  std::int64_t steps);

 private:
  nets::NamedParams params_;
  std::vector<Tensor> m_, v_;
  AdamConfig cfg_;
  std::int64_t steps_ = 0;
};

}  // namespace gnr::optim
