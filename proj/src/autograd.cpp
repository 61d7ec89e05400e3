#include "gnr/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "gnr/kernels.hpp"

namespace gnr::ag {
namespace {

thread_local bool g_grad_enabled = true;

using kernels::BinaryOp;

bool any_requires_grad(const std::vector<Var>& inputs) {
  return std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v.defined() && v.requires_grad(); });
}

float stable_softplus(float v) { return std::max(v, 0.0f) + std::log1p(std::exp(-std::fabs(v))); }

float stable_sigmoid(float v) {
  if (v >= 0.0f) return 1.0f / (1.0f + std::exp(-v));
  const float e = std::exp(v);
  return e / (1.0f + e);
}

}  // namespace

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

const Tensor& Var::value() const {
  if (!node_) throw std::logic_error("access to undefined Var");
  return node_->value;
}

Tensor& Var::mutable_value() {
  if (!node_) throw std::logic_error("access to undefined Var");
  return node_->value;
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

Var make_op(Tensor value, std::vector<Var> inputs, BackwardFn backward, const char* op) {
  Var out(std::move(value), false);
  if (g_grad_enabled && any_requires_grad(inputs)) {
    out.node_->requires_grad = true;
    out.node_->inputs = std::move(inputs);
    out.node_->backward = std::move(backward);
    out.node_->op = op;
  }
  return out;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

GradModeGuard::GradModeGuard(bool enabled) : previous_(g_grad_enabled) { g_grad_enabled = enabled; }
GradModeGuard::~GradModeGuard() { g_grad_enabled = previous_; }

std::vector<Var> grad(const Var& output, std::span<const Var> wrt, bool create_graph) {
  if (!output.defined()) throw std::invalid_argument("grad of undefined output");
  if (output.value().numel() != 1) throw std::invalid_argument("grad requires a scalar output");

  // Topological order (inputs before consumers) over nodes that require grad.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  if (output.requires_grad()) {
    std::vector<std::pair<Node*, std::size_t>> stack{{output.node(), 0}};
    visited.insert(output.node());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        Node* child = node->inputs[next++].node();
        if (child && child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }

  std::unordered_set<Node*> targets;
  for (const Var& v : wrt)
    if (v.defined()) targets.insert(v.node());

  // A node is relevant if some target is reachable through its inputs.
  std::unordered_set<Node*> relevant;
  for (Node* n : order) {
    bool r = targets.count(n) > 0;
    for (const Var& in : n->inputs) r = r || (in.defined() && relevant.count(in.node()));
    if (r) relevant.insert(n);
  }

  GradModeGuard mode(create_graph);
  std::unordered_map<Node*, Var> grads;
  grads[output.node()] = Var(Tensor(output.shape(), 1.0f));

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    auto g_it = grads.find(n);
    if (g_it == grads.end() || !relevant.count(n) || !n->backward) continue;
    const Var g = g_it->second;
    if (!targets.count(n)) grads.erase(g_it);

    std::vector<bool> needed(n->inputs.size());
    bool any = false;
    for (std::size_t i = 0; i < n->inputs.size(); ++i) {
      const Var& in = n->inputs[i];
      needed[i] = in.defined() && in.requires_grad() && relevant.count(in.node());
      any = any || needed[i];
    }
    if (!any) continue;
    std::vector<Var> in_grads = n->backward(g, needed);
    for (std::size_t i = 0; i < n->inputs.size(); ++i) {
      if (!needed[i] || !in_grads[i].defined()) continue;
      Node* target = n->inputs[i].node();
      auto [slot, inserted] = grads.try_emplace(target, in_grads[i]);
      if (!inserted) slot->second = add(slot->second, in_grads[i]);
    }
  }

  std::vector<Var> result;
  result.reserve(wrt.size());
  for (const Var& v : wrt) {
    auto f = v.defined() ? grads.find(v.node()) : grads.end();
    result.push_back(f != grads.end() ? f->second : Var(Tensor(v.shape())));
  }
  return result;
}

Var constant(Tensor value) { return Var(std::move(value), false); }

Var detach(const Var& x) { return Var(x.value(), false); }

Var add(const Var& a, const Var& b) {
  Tensor v = kernels::broadcast_binary(BinaryOp::Add, a.value(), b.value());
  const Shape sa = a.shape(), sb = b.shape();
  return make_op(std::move(v), {a, b},
                 [sa, sb](const Var& g, const std::vector<bool>& need) {
                   return std::vector<Var>{need[0] ? sum_to(g, sa) : Var(), need[1] ? sum_to(g, sb) : Var()};
                 },
                 "add");
}

Var sub(const Var& a, const Var& b) {
  Tensor v = kernels::broadcast_binary(BinaryOp::Sub, a.value(), b.value());
  const Shape sa = a.shape(), sb = b.shape();
  return make_op(std::move(v), {a, b},
                 [sa, sb](const Var& g, const std::vector<bool>& need) {
                   return std::vector<Var>{need[0] ? sum_to(g, sa) : Var(), need[1] ? neg(sum_to(g, sb)) : Var()};
                 },
                 "sub");
}

Var mul(const Var& a, const Var& b) {
  Tensor v = kernels::broadcast_binary(BinaryOp::Mul, a.value(), b.value());
  return make_op(std::move(v), {a, b},
                 [a, b](const Var& g, const std::vector<bool>& need) {
                   return std::vector<Var>{need[0] ? sum_to(mul(g, b), a.shape()) : Var(),
                                           need[1] ? sum_to(mul(g, a), b.shape()) : Var()};
                 },
                 "mul");
}

Var neg(const Var& x) { return scale(x, -1.0f); }

Var scale(const Var& x, float s) {
  return make_op(kernels::scale(x.value(), s), {x},
                 [s](const Var& g, const std::vector<bool>&) { return std::vector<Var>{scale(g, s)}; }, "scale");
}

Var add_scalar(const Var& x, float s) {
  return make_op(kernels::map(x.value(), [s](float v) { return v + s; }), {x},
                 [](const Var& g, const std::vector<bool>&) { return std::vector<Var>{g}; }, "add_scalar");
}

Var sum(const Var& x) { return sum_to(x, Shape{1}); }

Var mean(const Var& x) { return scale(sum(x), 1.0f / static_cast<float>(x.value().numel())); }

Var sum_to(const Var& x, const Shape& target) {
  if (x.shape() == target) return x;
  Shape reduce_target = target;
  // A {1} target reduces every axis regardless of rank.
  if (target == Shape{1} && x.shape().size() > 1) reduce_target = Shape(x.shape().size(), 1);
  Tensor v = kernels::sum_to(x.value(), reduce_target).reshaped(target);
  const Shape xs = x.shape();
  return make_op(std::move(v), {x},
                 [xs, reduce_target](const Var& g, const std::vector<bool>&) {
                   return std::vector<Var>{broadcast_to(reshape(g, reduce_target), xs)};
                 },
                 "sum_to");
}

Var broadcast_to(const Var& x, const Shape& target) {
  if (x.shape() == target) return x;
  const Shape xs = x.shape();
  return make_op(kernels::broadcast_to(x.value(), target), {x},
                 [xs](const Var& g, const std::vector<bool>&) { return std::vector<Var>{sum_to(g, xs)}; },
                 "broadcast_to");
}

Var matmul(const Var& a, const Var& b, bool trans_a, bool trans_b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || B.rank() != 2) throw ShapeError("matmul expects rank-2 operands");
  const int m = trans_a ? A.dim(1) : A.dim(0);
  const int k = trans_a ? A.dim(0) : A.dim(1);
  const int kb = trans_b ? B.dim(1) : B.dim(0);
  const int n = trans_b ? B.dim(0) : B.dim(1);
  if (k != kb) throw ShapeError("matmul inner dimension mismatch: " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
  Tensor c({m, n});
  kernels::gemm(trans_a, trans_b, m, n, k, 1.0f, A.data(), B.data(), 0.0f, c.data());
  return make_op(std::move(c), {a, b},
                 [a, b, trans_a, trans_b](const Var& g, const std::vector<bool>& need) {
                   Var ga, gb;
                   if (need[0]) {
                     if (!trans_a) ga = trans_b ? matmul(g, b) : matmul(g, b, false, true);
                     else ga = trans_b ? matmul(b, g, true, true) : matmul(b, g, false, true);
                   }
                   if (need[1]) {
                     if (!trans_b) gb = trans_a ? matmul(a, g) : matmul(a, g, true, false);
                     else gb = trans_a ? matmul(g, a, true, true) : matmul(g, a, true, false);
                   }
                   return std::vector<Var>{ga, gb};
                 },
                 "matmul");
}

Var conv2d(const Var& x, const Var& w, int pad) {
  return make_op(kernels::conv2d(x.value(), w.value(), pad), {x, w},
                 [x, w, pad](const Var& g, const std::vector<bool>& need) {
                   return std::vector<Var>{need[0] ? conv2d_input_grad(g, w, pad, x.shape()) : Var(),
                                           need[1] ? conv2d_weight_grad(x, g, pad, w.shape()) : Var()};
                 },
                 "conv2d");
}

Var conv2d_input_grad(const Var& gy, const Var& w, int pad, const Shape& x_shape) {
  return make_op(kernels::conv2d_input_grad(gy.value(), w.value(), pad, x_shape), {gy, w},
                 [gy, w, pad](const Var& g, const std::vector<bool>& need) {
                   return std::vector<Var>{need[0] ? conv2d(g, w, pad) : Var(),
                                           need[1] ? conv2d_weight_grad(g, gy, pad, w.shape()) : Var()};
                 },
                 "conv2d_input_grad");
}

Var conv2d_weight_grad(const Var& x, const Var& gy, int pad, const Shape& w_shape) {
  return make_op(kernels::conv2d_weight_grad(x.value(), gy.value(), pad, w_shape), {x, gy},
                 [x, gy, pad](const Var& g, const std::vector<bool>& need) {
                   return std::vector<Var>{need[0] ? conv2d_input_grad(gy, g, pad, x.shape()) : Var(),
                                           need[1] ? conv2d(x, g, pad) : Var()};
                 },
                 "conv2d_weight_grad");
}

Var avg_pool2(const Var& x) {
  return make_op(kernels::avg_pool2(x.value()), {x},
                 [](const Var& g, const std::vector<bool>&) { return std::vector<Var>{scale(upsample2(g), 0.25f)}; },
                 "avg_pool2");
}

Var upsample2(const Var& x) {
  return make_op(kernels::upsample2(x.value()), {x},
                 [](const Var& g, const std::vector<bool>&) { return std::vector<Var>{scale(avg_pool2(g), 4.0f)}; },
                 "upsample2");
}

Var leaky_relu(const Var& x, float slope) {
  Tensor mask = kernels::map(x.value(), [slope](float v) { return v > 0.0f ? 1.0f : slope; });
  Tensor y = kernels::zip(x.value(), mask, [](float v, float m) { return v * m; });
  // The mask is piecewise constant, so it is a constant in every derivative order.
  return make_op(std::move(y), {x},
                 [m = constant(std::move(mask))](const Var& g, const std::vector<bool>&) {
                   return std::vector<Var>{mul(g, m)};
                 },
                 "leaky_relu");
}

Var tanh(const Var& x) {
  return make_op(kernels::map(x.value(), [](float v) { return std::tanh(v); }), {x},
                 [x](const Var& g, const std::vector<bool>&) {
                   const Var t = tanh(x);
                   return std::vector<Var>{mul(g, add_scalar(neg(square(t)), 1.0f))};
                 },
                 "tanh");
}

Var sigmoid(const Var& x) {
  return make_op(kernels::map(x.value(), stable_sigmoid), {x},
                 [x](const Var& g, const std::vector<bool>&) {
                   const Var s = sigmoid(x);
                   return std::vector<Var>{mul(g, mul(s, add_scalar(neg(s), 1.0f)))};
                 },
                 "sigmoid");
}

Var softplus(const Var& x) {
  return make_op(kernels::map(x.value(), stable_softplus), {x},
                 [x](const Var& g, const std::vector<bool>&) { return std::vector<Var>{mul(g, sigmoid(x))}; },
                 "softplus");
}

Var pow(const Var& x, float p) {
  return make_op(kernels::map(x.value(), [p](float v) { return std::pow(v, p); }), {x},
                 [x, p](const Var& g, const std::vector<bool>&) {
                   return std::vector<Var>{mul(g, scale(pow(x, p - 1.0f), p))};
                 },
                 "pow");
}

Var sqrt(const Var& x) { return pow(x, 0.5f); }

Var square(const Var& x) {
  return make_op(kernels::map(x.value(), [](float v) { return v * v; }), {x},
                 [x](const Var& g, const std::vector<bool>&) { return std::vector<Var>{mul(g, scale(x, 2.0f))}; },
                 "square");
}

Var abs(const Var& x) {
  Tensor sign = kernels::map(x.value(), [](float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); });
  return make_op(kernels::map(x.value(), [](float v) { return std::fabs(v); }), {x},
                 [s = constant(std::move(sign))](const Var& g, const std::vector<bool>&) {
                   return std::vector<Var>{mul(g, s)};
                 },
                 "abs");
}

Var reshape(const Var& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  const Shape xs = x.shape();
  return make_op(x.value().reshaped(shape), {x},
                 [xs](const Var& g, const std::vector<bool>&) { return std::vector<Var>{reshape(g, xs)}; },
                 "reshape");
}

Var gather_rows(const Var& x, std::vector<int> index) {
  const int rows = x.shape().at(0);
  Tensor v = kernels::gather_rows(x.value(), index);
  return make_op(std::move(v), {x},
                 [index = std::move(index), rows](const Var& g, const std::vector<bool>&) {
                   return std::vector<Var>{scatter_rows(g, index, rows)};
                 },
                 "gather_rows");
}

Var scatter_rows(const Var& x, std::vector<int> index, int rows) {
  Tensor v = kernels::scatter_rows(x.value(), index, rows);
  return make_op(std::move(v), {x},
                 [index = std::move(index)](const Var& g, const std::vector<bool>&) {
                   return std::vector<Var>{gather_rows(g, index)};
                 },
                 "scatter_rows");
}

}  // namespace gnr::ag
