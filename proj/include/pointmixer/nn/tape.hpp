#pragma once

#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "pointmixer/nn/params.hpp"
#include "pointmixer/types.hpp"

namespace pmx {

template <typename Scalar>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  Index id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const MatrixX<Scalar>& value() const { return tape->value(*this); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
};

namespace detail {
inline std::string& injected_fault() {
  thread_local std::string op;
  return op;
}
}  // namespace detail

/// Test hook: the backward pass of every op with this name has its incoming
/// gradient negated. Empty disables it.
inline void inject_backward_fault(std::string op) { detail::injected_fault() = std::move(op); }

/// Reverse-mode tape over dense matrices. Values are recorded in evaluation
/// order; backward() replays the recorded closures in reverse.
template <typename Scalar>
class Tape {
 public:
  using Matrix = MatrixX<Scalar>;
  using BackwardFn = std::function<void(Tape&, const Matrix& grad)>;

  Tape() = default;
  explicit Tape(const ParamStore<Scalar>& params)
      : params_(&params), param_nodes_(static_cast<std::size_t>(params.size()), -1) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Matrix v) { return push("constant", std::move(v), false, nullptr); }

  /// Leaf whose gradient is tracked but which belongs to no ParamStore.
  Var<Scalar> variable(Matrix v) { return push("variable", std::move(v), true, nullptr); }

  /// Leaf bound to a stored parameter; repeated calls return the same node.
  Var<Scalar> param(ParamRef r) {
    if (params_ == nullptr) throw ShapeError("tape has no parameter store");
    Index& node = param_nodes_.at(static_cast<std::size_t>(r.id));
    if (node < 0) {
      node = push("param", (*params_)[r].value, true, nullptr).id;
      nodes_[node].param = r.id;
    }
    return Var<Scalar>{this, node};
  }

  Var<Scalar> record(std::string op, Matrix value, std::initializer_list<Var<Scalar>> inputs,
                     BackwardFn fn) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || (in.valid() && requires_grad(in));
    return push(std::move(op), std::move(value), needs, needs ? std::move(fn) : nullptr);
  }

  const Matrix& value(Var<Scalar> v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
  bool requires_grad(Var<Scalar> v) const { return nodes_.at(static_cast<std::size_t>(v.id)).needs_grad; }
  const std::string& op(Var<Scalar> v) const { return nodes_.at(static_cast<std::size_t>(v.id)).op; }

  /// Gradient buffer of v, allocated as zeros on first use.
  Matrix& grad(Var<Scalar> v) {
    Node& n = nodes_.at(static_cast<std::size_t>(v.id));
    if (n.grad.size() == 0 && n.value.size() != 0) {
      n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
      track(n.grad.size());
    }
    return n.grad;
  }

  void backward(Var<Scalar> out, const Matrix& seed) {
    if (seed.rows() != out.rows() || seed.cols() != out.cols())
      throw ShapeError("backward seed shape does not match output");
    if (!requires_grad(out)) return;
    grad(out) += seed;
    const std::string& fault = detail::injected_fault();
    for (Index i = out.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.backward || n.grad.size() == 0) continue;
      if (!fault.empty() && n.op == fault) {
        const Matrix flipped = -n.grad;
        n.backward(*this, flipped);
      } else {
        n.backward(*this, n.grad);
      }
    }
  }

  /// Adds the gradients reaching parameter leaves into store.grad.
  void accumulate_into(ParamStore<Scalar>& store) const {
    for (const Node& n : nodes_) {
      if (n.param >= 0 && n.grad.size() != 0) store[ParamRef{n.param}].grad += n.grad;
    }
  }

  std::size_t node_count() const { return nodes_.size(); }
  /// High-water mark of value and gradient bytes held by this tape.
  std::size_t peak_bytes() const { return peak_bytes_; }

 private:
  struct Node {
    std::string op;
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    bool needs_grad = false;
    Index param = -1;
  };

  Var<Scalar> push(std::string op, Matrix value, bool needs, BackwardFn fn) {
    track(value.size());
    nodes_.push_back(Node{std::move(op), std::move(value), Matrix(), std::move(fn), needs, -1});
    return Var<Scalar>{this, static_cast<Index>(nodes_.size()) - 1};
  }

  void track(Index elements) {
    bytes_ += static_cast<std::size_t>(elements) * sizeof(Scalar);
    peak_bytes_ = std::max(peak_bytes_, bytes_);
  }

  const ParamStore<Scalar>* params_ = nullptr;
  std::vector<Index> param_nodes_;
  std::deque<Node> nodes_;
  std::size_t bytes_ = 0;
  std::size_t peak_bytes_ = 0;
};

}  // namespace pmx
