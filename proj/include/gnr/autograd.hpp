#pragma once

// Tape-free reverse-mode differentiation over Tensor values.
//
// Every differentiable op records its inputs and a backward closure written
// in terms of other differentiable ops, so gradients can themselves be
// differentiated (needed for the R1 penalty). Recording only happens while
// grad mode is enabled and at least one input requires a gradient.

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "gnr/tensor.hpp"

namespace gnr::ag {

struct Node;

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  /// Leaf that participates in differentiation.
  static Var parameter(Tensor value) { return Var(std::move(value), true); }

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const;
  /// In-place access for optimizers and checkpoint loading.
  Tensor& mutable_value();
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  float item() const { return value()[0]; }
  Node* node() const { return node_.get(); }

 private:
  friend Var make_op(Tensor, std::vector<Var>, std::function<std::vector<Var>(const Var&, const std::vector<bool>&)>,
                     const char*);
  std::shared_ptr<Node> node_;
};

using BackwardFn = std::function<std::vector<Var>(const Var& grad, const std::vector<bool>& needed)>;

struct Node {
  Tensor value;
  bool requires_grad = false;
  std::vector<Var> inputs;
  BackwardFn backward;
  const char* op = "leaf";
};

/// Create the result of an op; records the graph only if needed.
Var make_op(Tensor value, std::vector<Var> inputs, BackwardFn backward, const char* op);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled);
  ~GradModeGuard();
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

/// Gradients of a scalar `output` with respect to `wrt`. With `create_graph`
/// the returned gradients are themselves differentiable. Inputs unreachable
/// from `output` receive zero gradients.
std::vector<Var> grad(const Var& output, std::span<const Var> wrt, bool create_graph = false);

Var constant(Tensor value);
Var detach(const Var& x);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& x);
Var scale(const Var& x, float s);
Var add_scalar(const Var& x, float s);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator-(const Var& x) { return neg(x); }
inline Var operator*(const Var& x, float s) { return scale(x, s); }
inline Var operator*(float s, const Var& x) { return scale(x, s); }

Var sum(const Var& x);
Var mean(const Var& x);
Var sum_to(const Var& x, const Shape& target);
Var broadcast_to(const Var& x, const Shape& target);

/// op(a) * op(b) for rank-2 operands.
Var matmul(const Var& a, const Var& b, bool trans_a = false, bool trans_b = false);

Var conv2d(const Var& x, const Var& w, int pad);
Var conv2d_input_grad(const Var& gy, const Var& w, int pad, const Shape& x_shape);
Var conv2d_weight_grad(const Var& x, const Var& gy, int pad, const Shape& w_shape);

Var avg_pool2(const Var& x);
Var upsample2(const Var& x);

Var leaky_relu(const Var& x, float slope);
Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var softplus(const Var& x);
Var pow(const Var& x, float p);
Var sqrt(const Var& x);
Var square(const Var& x);
Var abs(const Var& x);

Var reshape(const Var& x, const Shape& shape);
Var gather_rows(const Var& x, std::vector<int> index);
Var scatter_rows(const Var& x, std::vector<int> index, int rows);

}  // namespace gnr::ag
