/* Copyright 2026 The BridgeNet Kit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Dense float64 tensors that record a differentiation graph as they are
// computed. Every operation allocates a fresh node; nodes hold shared
// references to their inputs so the graph lives exactly as long as the
// tensors that reach it.

#ifndef BRIDGENET_TENSOR_HPP_
#define BRIDGENET_TENSOR_HPP_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "bridgenet/errors.hpp"

namespace bridgenet {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something is accumulated
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

inline std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed) + 1;
}

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false) {
    for (std::size_t extent : shape) {
      if (extent == 0) {
        throw DimensionError("tensor extents must be positive, got " +
                             shape_string(shape));
      }
    }
    if (shape.empty()) {
      throw DimensionError("tensor needs at least one dimension");
    }
    if (shape_numel(shape) != data.size()) {
      throw DimensionError("shape " + shape_string(shape) + " holds " +
                           std::to_string(shape_numel(shape)) +
                           " values but " + std::to_string(data.size()) +
                           " were given");
    }
    for (double v : data) {
      if (!std::isfinite(v)) throw NumericError("non-finite value in tensor data");
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    node->id = detail::next_node_id();
    return Tensor(std::move(node));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return from_data({1}, {value}, requires_grad);
  }

  /// Row vector [1 x n] or plain vector [n] from values.
  static Tensor vector(std::vector<double> values, bool requires_grad = false) {
    const std::size_t n = values.size();
    return from_data({n}, std::move(values), requires_grad);
  }

  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values, bool requires_grad = false) {
    return from_data({rows, cols}, std::move(values), requires_grad);
  }

  bool defined() const noexcept { return node_ != nullptr; }

  const Shape& shape() const { return checked().shape; }
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const { return checked().data.size(); }
  std::size_t rows() const {
    require_rank(2, "rows");
    return shape()[0];
  }
  std::size_t cols() const {
    require_rank(2, "cols");
    return shape()[1];
  }

  std::span<const double> data() const { return checked().data; }
  double operator[](std::size_t i) const { return checked().data.at(i); }
  double at(std::size_t r, std::size_t c) const {
    require_rank(2, "at");
    return checked().data.at(r * shape()[1] + c);
  }

  double item() const {
    if (numel() != 1) {
      throw ContractError("item() needs a single-element tensor, got " +
                          shape_string(shape()));
    }
    return checked().data[0];
  }

  /// Writable storage; only leaves may be mutated (optimizer, gradient checks).
  std::span<double> mutable_data() {
    if (!checked().inputs.empty()) {
      throw ContractError("cannot mutate the data of a recorded operation result");
    }
    return node_->data;
  }

  bool requires_grad() const { return checked().requires_grad; }
  void set_requires_grad(bool value) {
    if (!checked().inputs.empty()) {
      throw ContractError("requires_grad can only be changed on leaves");
    }
    node_->requires_grad = value;
  }

  bool has_grad() const { return !checked().grad.empty(); }
  /// Accumulated gradient, empty span if none has been populated.
  std::span<const double> grad() const { return checked().grad; }
  void zero_grad() {
    auto& g = checked().grad;
    std::fill(g.begin(), g.end(), 0.0);
  }
  void clear_grad() { checked().grad.clear(); }

  /// Same values, no history, no gradient.
  Tensor detach() const { return from_data(shape(), checked().data, false); }

  bool is_leaf() const { return checked().inputs.empty(); }
  std::uint64_t id() const { return checked().id; }
  std::string_view op_name() const { return checked().op; }

  bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

  // Internal access for op implementations.
  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  detail::Node& checked() const {
    if (!node_) throw ContractError("use of an undefined tensor");
    return *node_;
  }
  void require_rank(std::size_t r, const char* what) const {
    if (rank() != r) {
      throw DimensionError(std::string(what) + " needs a rank-" + std::to_string(r) +
                           " tensor, got " + shape_string(shape()));
    }
  }

  std::shared_ptr<detail::Node> node_;
};

namespace detail {

using BackwardFn = std::function<void(Node&)>;

// Builds an op result. The backward rule is only attached when recording is
// on and at least one input needs a gradient.
inline Tensor make_result(std::string_view op, Shape shape, std::vector<double> data,
                          std::initializer_list<const Tensor*> inputs, BackwardFn backward) {
  for (double v : data) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite value produced by " + std::string(op));
    }
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  node->id = next_node_id();
  bool needs = false;
  if (grad_mode()) {
    for (const Tensor* t : inputs) needs = needs || t->requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const Tensor* t : inputs) node->inputs.push_back(t->node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

inline Tensor make_result(std::string_view op, Shape shape, std::vector<double> data,
                          const std::vector<Tensor>& inputs, BackwardFn backward) {
  for (double v : data) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite value produced by " + std::string(op));
    }
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  node->id = next_node_id();
  bool needs = false;
  if (grad_mode()) {
    for (const Tensor& t : inputs) needs = needs || t.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const Tensor& t : inputs) node->inputs.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

// Gradient buffer of input k, or nullptr when that input takes no gradient.
inline std::vector<double>* input_grad(Node& self, std::size_t k) {
  Node& in = *self.inputs[k];
  return in.requires_grad ? &in.ensure_grad() : nullptr;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

inline void require_matrix(const Tensor& a, std::string_view op) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(op) + " needs a matrix, got " + shape_string(a.shape()));
  }
}

}  // namespace detail

/// Recorded operations reachable from a root, inputs before consumers.
class Tape {
 public:
  static Tape from(const Tensor& root) {
    Tape tape;
    if (!root.defined() || !root.requires_grad()) return tape;
    std::unordered_set<const detail::Node*> seen;
    // Iterative post-order DFS.
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        detail::Node* child = node->inputs[next++].get();
        if (child->requires_grad && seen.insert(child).second) {
          stack.emplace_back(child, 0);
        }
      } else {
        tape.order_.push_back(node);
        stack.pop_back();
      }
    }
    return tape;
  }

  std::size_t size() const noexcept { return order_.size(); }
  bool empty() const noexcept { return order_.empty(); }
  std::span<detail::Node* const> nodes() const noexcept { return order_; }

 private:
  std::vector<detail::Node*> order_;
};

struct BackwardResult {
  std::size_t nodes_visited = 0;
  std::size_t leaves_updated = 0;
  bool empty() const noexcept { return nodes_visited == 0; }
};

/// Accumulates d(loss)/d(t) into every reachable tensor that requires grad.
inline BackwardResult backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got " + shape_string(loss.shape()));
  }
  BackwardResult result;
  Tape tape = Tape::from(loss);
  if (tape.empty()) return result;
  // Intermediate buffers start fresh on every pass; leaves accumulate.
  for (detail::Node* node : tape.nodes()) {
    if (!node->inputs.empty()) node->grad.clear();
  }
  loss.node()->ensure_grad()[0] += 1.0;
  auto order = tape.nodes();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    ++result.nodes_visited;
    if (node->inputs.empty()) {
      ++result.leaves_updated;
      continue;
    }
    if (node->grad.empty() || !node->backward) continue;
    node->backward(*node);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return detail::make_result("add", a.shape(), std::move(out), {&a, &b}, [](detail::Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* g = detail::input_grad(self, k)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return detail::make_result("sub", a.shape(), std::move(out), {&a, &b}, [](detail::Node& self) {
    if (auto* g = detail::input_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = detail::input_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

/// Hadamard product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return detail::make_result("mul", a.shape(), std::move(out), {&a, &b}, [](detail::Node& self) {
    const auto& xa = self.inputs[0]->data;
    const auto& xb = self.inputs[1]->data;
    if (auto* g = detail::input_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * xb[i];
    }
    if (auto* g = detail::input_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * xa[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= factor;
  return detail::make_result("scale", a.shape(), std::move(out), {&a},
                             [factor](detail::Node& self) {
                               if (auto* g = detail::input_grad(self, 0)) {
                                 for (std::size_t i = 0; i < g->size(); ++i) {
                                   (*g)[i] += factor * self.grad[i];
                                 }
                               }
                             });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }

namespace detail {

// f computes the value, df the derivative given (input, output).
template <typename F, typename DF>
Tensor unary(std::string_view op, const Tensor& a, F f, DF df) {
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  return make_result(op, a.shape(), std::move(out), {&a}, [df](Node& self) {
    if (auto* g = input_grad(self, 0)) {
      const auto& xin = self.inputs[0]->data;
      for (std::size_t i = 0; i < g->size(); ++i) {
        (*g)[i] += self.grad[i] * df(xin[i], self.data[i]);
      }
    }
  });
}

inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary("sigmoid", a, detail::stable_sigmoid,
                       [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh(const Tensor& a) {
  return detail::unary("tanh", a, [](double x) { return std::tanh(x); },
                       [](double, double y) { return 1.0 - y * y; });
}

inline Tensor relu(const Tensor& a) {
  return detail::unary("relu", a, [](double x) { return x > 0 ? x : 0.0; },
                       [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

inline Tensor exp(const Tensor& a) {
  return detail::unary("exp", a, [](double x) { return std::exp(x); },
                       [](double, double y) { return y; });
}

inline Tensor log(const Tensor& a) {
  for (double v : a.data()) {
    if (v <= 0) throw DomainError("log of a non-positive value");
  }
  return detail::unary("log", a, [](double x) { return std::log(x); },
                       [](double x, double) { return 1.0 / x; });
}

inline Tensor square(const Tensor& a) {
  return detail::unary("square", a, [](double x) { return x * x; },
                       [](double x, double) { return 2.0 * x; });
}

// ---------------------------------------------------------------------------
// Reductions and reshaping

inline Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return detail::make_result("sum", {1}, {total}, {&a}, [](detail::Node& self) {
    if (auto* g = detail::input_grad(self, 0)) {
      for (double& v : *g) v += self.grad[0];
    }
  });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

/// Same values viewed under a new shape with equal element count.
inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("cannot reshape " + shape_string(a.shape()) + " to " +
                         shape_string(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return detail::make_result("reshape", std::move(shape), std::move(out), {&a},
                             [](detail::Node& self) {
                               if (auto* g = detail::input_grad(self, 0)) {
                                 for (std::size_t i = 0; i < g->size(); ++i) {
                                   (*g)[i] += self.grad[i];
                                 }
                               }
                             });
}

/// Columns [begin, end) of a matrix.
inline Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  detail::require_matrix(a, "slice_cols");
  const std::size_t rows = a.rows(), cols = a.cols();
  if (begin >= end || end > cols) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") invalid for " + shape_string(a.shape()));
  }
  const std::size_t width = end - begin;
  std::vector<double> out(rows * width);
  auto x = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.begin() + r * cols + begin, width, out.begin() + r * width);
  }
  return detail::make_result("slice_cols", {rows, width}, std::move(out), {&a},
                             [rows, cols, begin, width](detail::Node& self) {
                               if (auto* g = detail::input_grad(self, 0)) {
                                 for (std::size_t r = 0; r < rows; ++r) {
                                   for (std::size_t c = 0; c < width; ++c) {
                                     (*g)[r * cols + begin + c] += self.grad[r * width + c];
                                   }
                                 }
                               }
                             });
}

/// Row-wise concatenation of matrices with equal column counts.
inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const Tensor& p : parts) {
    detail::require_matrix(p, "concat_rows");
    if (p.cols() != cols) {
      throw DimensionError("concat_rows: column mismatch " + shape_string(parts.front().shape()) +
                           " vs " + shape_string(p.shape()));
    }
    rows += p.rows();
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return detail::make_result("concat_rows", {rows, cols}, std::move(out), parts,
                             [](detail::Node& self) {
                               std::size_t offset = 0;
                               for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                                 const std::size_t n = self.inputs[k]->data.size();
                                 if (auto* g = detail::input_grad(self, k)) {
                                   for (std::size_t i = 0; i < n; ++i) {
                                     (*g)[i] += self.grad[offset + i];
                                   }
                                 }
                                 offset += n;
                               }
                             });
}

/// Column-wise concatenation of matrices with equal row counts.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Tensor& p : parts) {
    detail::require_matrix(p, "concat_cols");
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + shape_string(parts.front().shape()) +
                           " vs " + shape_string(p.shape()));
    }
    cols += p.cols();
  }
  std::vector<double> out(rows * cols);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t w = p.cols();
    auto x = p.data();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(x.begin() + r * w, w, out.begin() + r * cols + offset);
    }
    offset += w;
  }
  return detail::make_result("concat_cols", {rows, cols}, std::move(out), parts,
                             [rows, cols](detail::Node& self) {
                               std::size_t offset = 0;
                               for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                                 const std::size_t w = self.inputs[k]->shape[1];
                                 if (auto* g = detail::input_grad(self, k)) {
                                   for (std::size_t r = 0; r < rows; ++r) {
                                     for (std::size_t c = 0; c < w; ++c) {
                                       (*g)[r * w + c] += self.grad[r * cols + offset + c];
                                     }
                                   }
                                 }
                                 offset += w;
                               }
                             });
}

/// Entry (i, labels[i]) of each row, as a vector of length rows.
inline Tensor pick(const Tensor& a, std::span<const std::uint32_t> labels) {
  detail::require_matrix(a, "pick");
  const std::size_t rows = a.rows(), cols = a.cols();
  if (labels.size() != rows) {
    throw DimensionError("pick: " + std::to_string(labels.size()) + " labels for " +
                         shape_string(a.shape()));
  }
  std::vector<std::uint32_t> idx(labels.begin(), labels.end());
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (idx[r] >= cols) {
      throw DimensionError("pick: label " + std::to_string(idx[r]) + " out of range for " +
                           std::to_string(cols) + " columns");
    }
    out[r] = a.data()[r * cols + idx[r]];
  }
  return detail::make_result("pick", {rows}, std::move(out), {&a},
                             [idx = std::move(idx), cols](detail::Node& self) {
                               if (auto* g = detail::input_grad(self, 0)) {
                                 for (std::size_t r = 0; r < idx.size(); ++r) {
                                   (*g)[r * cols + idx[r]] += self.grad[r];
                                 }
                               }
                             });
}

// ---------------------------------------------------------------------------
// Linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  const double* x = a.data().data();
  const double* y = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x[i * k + p];
      const double* yrow = y + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += xv * yrow[j];
    }
  }
  return detail::make_result("matmul", {m, n}, std::move(out), {&a, &b},
                             [m, k, n](detail::Node& self) {
                               const double* x = self.inputs[0]->data.data();
                               const double* y = self.inputs[1]->data.data();
                               const double* dz = self.grad.data();
                               if (auto* g = detail::input_grad(self, 0)) {
                                 for (std::size_t i = 0; i < m; ++i) {
                                   for (std::size_t p = 0; p < k; ++p) {
                                     double acc = 0.0;
                                     const double* yrow = y + p * n;
                                     const double* drow = dz + i * n;
                                     for (std::size_t j = 0; j < n; ++j) acc += drow[j] * yrow[j];
                                     (*g)[i * k + p] += acc;
                                   }
                                 }
                               }
                               if (auto* g = detail::input_grad(self, 1)) {
                                 double* gy = g->data();
                                 for (std::size_t i = 0; i < m; ++i) {
                                   const double* drow = dz + i * n;
                                   for (std::size_t p = 0; p < k; ++p) {
                                     const double xv = x[i * k + p];
                                     double* grow = gy + p * n;
                                     for (std::size_t j = 0; j < n; ++j) grow[j] += xv * drow[j];
                                   }
                                 }
                               }
                             });
}

/// a [m x n] plus bias [n] broadcast over rows.
inline Tensor add_bias(const Tensor& a, const Tensor& bias) {
  detail::require_matrix(a, "add_bias");
  const std::size_t rows = a.rows(), cols = a.cols();
  if (bias.numel() != cols) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not fit " +
                         shape_string(a.shape()));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  auto b = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += b[c];
  }
  return detail::make_result("add_bias", a.shape(), std::move(out), {&a, &bias},
                             [rows, cols](detail::Node& self) {
                               if (auto* g = detail::input_grad(self, 0)) {
                                 for (std::size_t i = 0; i < g->size(); ++i) {
                                   (*g)[i] += self.grad[i];
                                 }
                               }
                               if (auto* g = detail::input_grad(self, 1)) {
                                 for (std::size_t r = 0; r < rows; ++r) {
                                   for (std::size_t c = 0; c < cols; ++c) {
                                     (*g)[c] += self.grad[r * cols + c];
                                   }
                                 }
                               }
                             });
}

// ---------------------------------------------------------------------------
// Convolution

struct Conv2dOptions {
  std::size_t stride = 1;
  // Pads (k - 1) / 2 on each side, which keeps the extent for odd kernels.
  bool same_padding = false;
};

/// Cross-correlation (no kernel flip) of x [C x H x W] or a batch
/// [B x C x H x W] with kernels [O x C x kh x kw].
inline Tensor conv2d(const Tensor& x, const Tensor& kernels, Conv2dOptions options = {}) {
  const bool batched = x.rank() == 4;
  if (x.rank() != 3 && !batched) {
    throw DimensionError("conv2d: input must be [C x H x W] or [B x C x H x W], got " +
                         shape_string(x.shape()));
  }
  if (kernels.rank() != 4) {
    throw DimensionError("conv2d: kernels must be [O x C x kh x kw], got " +
                         shape_string(kernels.shape()));
  }
  if (options.stride == 0) throw DimensionError("conv2d: stride must be positive");
  const std::size_t batch = batched ? x.shape()[0] : 1;
  const std::size_t off = batched ? 1 : 0;
  const std::size_t cin = x.shape()[off], h = x.shape()[off + 1], w = x.shape()[off + 2];
  const std::size_t cout = kernels.shape()[0], kh = kernels.shape()[2], kw = kernels.shape()[3];
  if (kernels.shape()[1] != cin) {
    throw DimensionError("conv2d: kernel channels " + shape_string(kernels.shape()) +
                         " do not match input " + shape_string(x.shape()));
  }
  const std::size_t ph = options.same_padding ? (kh - 1) / 2 : 0;
  const std::size_t pw = options.same_padding ? (kw - 1) / 2 : 0;
  if (kh > h + 2 * ph || kw > w + 2 * pw) {
    throw DimensionError("conv2d: kernel " + shape_string(kernels.shape()) +
                         " larger than padded input " + shape_string(x.shape()));
  }
  const std::size_t oh = (h + 2 * ph - kh) / options.stride + 1;
  const std::size_t ow = (w + 2 * pw - kw) / options.stride + 1;
  const std::size_t stride = options.stride;

  // Visits every (output, input, kernel) triple that lies inside the input.
  auto for_each_tap = [=](auto&& visit) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t o = 0; o < cout; ++o) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::size_t out_idx = ((b * cout + o) * oh + oy) * ow + ox;
            for (std::size_t c = 0; c < cin; ++c) {
              for (std::size_t ky = 0; ky < kh; ++ky) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                          static_cast<std::ptrdiff_t>(ph);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t kx = 0; kx < kw; ++kx) {
                  const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                            static_cast<std::ptrdiff_t>(pw);
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                  const std::size_t in_idx =
                      ((b * cin + c) * h + static_cast<std::size_t>(iy)) * w +
                      static_cast<std::size_t>(ix);
                  const std::size_t k_idx = ((o * cin + c) * kh + ky) * kw + kx;
                  visit(out_idx, in_idx, k_idx);
                }
              }
            }
          }
        }
      }
    }
  };

  std::vector<double> out(batch * cout * oh * ow, 0.0);
  auto xs = x.data();
  auto ks = kernels.data();
  for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t ki) { out[oi] += xs[ii] * ks[ki]; });

  Shape out_shape = batched ? Shape{batch, cout, oh, ow} : Shape{cout, oh, ow};
  return detail::make_result("conv2d", std::move(out_shape), std::move(out), {&x, &kernels},
                             [for_each_tap](detail::Node& self) {
                               const auto& xs = self.inputs[0]->data;
                               const auto& ks = self.inputs[1]->data;
                               auto* gx = detail::input_grad(self, 0);
                               auto* gk = detail::input_grad(self, 1);
                               for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t ki) {
                                 const double d = self.grad[oi];
                                 if (gx) (*gx)[ii] += d * ks[ki];
                                 if (gk) (*gk)[ki] += d * xs[ii];
                               });
                             });
}

/// Adds bias [O] to every spatial position of channel o in [B x O x H x W] or [O x H x W].
inline Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  const bool batched = x.rank() == 4;
  if (x.rank() != 3 && !batched) {
    throw DimensionError("add_channel_bias: bad input " + shape_string(x.shape()));
  }
  const std::size_t off = batched ? 1 : 0;
  const std::size_t batch = batched ? x.shape()[0] : 1;
  const std::size_t channels = x.shape()[off];
  const std::size_t plane = x.shape()[off + 1] * x.shape()[off + 2];
  if (bias.numel() != channels) {
    throw DimensionError("add_channel_bias: bias " + shape_string(bias.shape()) +
                         " does not fit " + shape_string(x.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  auto b = bias.data();
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      double* p = out.data() + (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] += b[c];
    }
  }
  return detail::make_result("add_channel_bias", x.shape(), std::move(out), {&x, &bias},
                             [batch, channels, plane](detail::Node& self) {
                               if (auto* g = detail::input_grad(self, 0)) {
                                 for (std::size_t i = 0; i < g->size(); ++i) {
                                   (*g)[i] += self.grad[i];
                                 }
                               }
                               if (auto* g = detail::input_grad(self, 1)) {
                                 for (std::size_t n = 0; n < batch; ++n) {
                                   for (std::size_t c = 0; c < channels; ++c) {
                                     const double* d = self.grad.data() + (n * channels + c) * plane;
                                     for (std::size_t i = 0; i < plane; ++i) (*g)[c] += d[i];
                                   }
                                 }
                               }
                             });
}

// ---------------------------------------------------------------------------
// Softmax family, applied along the last axis

namespace detail {

inline void require_temperature(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw DomainError("temperature must be positive and finite, got " + std::to_string(tau));
  }
}

inline std::size_t last_extent(const Tensor& t) { return t.shape().back(); }

}  // namespace detail

/// softmax(logits / tau) per row, max-subtracted.
inline Tensor softmax_with_temperature(const Tensor& logits, double tau) {
  detail::require_temperature(tau);
  const std::size_t k = detail::last_extent(logits);
  const std::size_t rows = logits.numel() / k;
  std::vector<double> out(logits.numel());
  auto x = logits.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data() + r * k;
    double* p = out.data() + r * k;
    const double mx = *std::max_element(in, in + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      p[j] = std::exp((in[j] - mx) / tau);
      z += p[j];
    }
    for (std::size_t j = 0; j < k; ++j) p[j] /= z;
  }
  return detail::make_result("softmax", logits.shape(), std::move(out), {&logits},
                             [rows, k, tau](detail::Node& self) {
                               if (auto* g = detail::input_grad(self, 0)) {
                                 for (std::size_t r = 0; r < rows; ++r) {
                                   const double* p = self.data.data() + r * k;
                                   const double* d = self.grad.data() + r * k;
                                   double dot = 0.0;
                                   for (std::size_t j = 0; j < k; ++j) dot += d[j] * p[j];
                                   for (std::size_t j = 0; j < k; ++j) {
                                     (*g)[r * k + j] += p[j] * (d[j] - dot) / tau;
                                   }
                                 }
                               }
                             });
}

inline Tensor softmax(const Tensor& logits) { return softmax_with_temperature(logits, 1.0); }

/// log(softmax(logits / tau)) per row, computed without forming the softmax first.
inline Tensor log_softmax_with_temperature(const Tensor& logits, double tau) {
  detail::require_temperature(tau);
  const std::size_t k = detail::last_extent(logits);
  const std::size_t rows = logits.numel() / k;
  std::vector<double> out(logits.numel());
  auto x = logits.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data() + r * k;
    double* o = out.data() + r * k;
    const double mx = *std::max_element(in, in + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp((in[j] - mx) / tau);
    const double lz = std::log(z);
    for (std::size_t j = 0; j < k; ++j) o[j] = (in[j] - mx) / tau - lz;
  }
  return detail::make_result("log_softmax", logits.shape(), std::move(out), {&logits},
                             [rows, k, tau](detail::Node& self) {
                               if (auto* g = detail::input_grad(self, 0)) {
                                 for (std::size_t r = 0; r < rows; ++r) {
                                   const double* lp = self.data.data() + r * k;
                                   const double* d = self.grad.data() + r * k;
                                   double total = 0.0;
                                   for (std::size_t j = 0; j < k; ++j) total += d[j];
                                   for (std::size_t j = 0; j < k; ++j) {
                                     (*g)[r * k + j] += (d[j] - std::exp(lp[j]) * total) / tau;
                                   }
                                 }
                               }
                             });
}

/// Index of the largest entry of each row (first on ties).
inline std::vector<std::size_t> argmax_rows(const Tensor& t) {
  const std::size_t k = detail::last_extent(t);
  const std::size_t rows = t.numel() / k;
  std::vector<std::size_t> out(rows);
  auto x = t.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data() + r * k;
    out[r] = static_cast<std::size_t>(std::max_element(in, in + k) - in);
  }
  return out;
}

}  // namespace bridgenet

#endif  // BRIDGENET_TENSOR_HPP_
