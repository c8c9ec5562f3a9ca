#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "sequst/tensor.hpp"

namespace sequst {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
/// lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  double item() const;
  bool requires_grad() const;
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode computation record for one logical step. Nodes are appended in
/// evaluation order, so reverse id order is a valid topological order.
///
/// A tape created with `record_gradients = false` evaluates the same forward
/// arithmetic but keeps no backward closures; inference and training share one
/// code path this way.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool record_gradients = true) : recording_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Tensor value);
  /// Non-differentiable leaf that reads `value` in place.
  Var reference(const Tensor& value);
  /// Leaf bound to an external parameter. Backward accumulates into
  /// `param.grad()`; the tensor must outlive the tape.
  Var parameter(Tensor& param);

  const Tensor& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Seeds d(root)/d(root) = 1 and replays the chain rule. Root must hold one
  /// element.
  void backward(Var root);

  // Op authoring surface.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward fn);
  std::span<const double> grad(std::size_t id) const { return nodes_[id].grad; }
  /// Gradient buffer of `v`, allocated on first use. Only valid for nodes with
  /// requires_grad.
  std::span<double> accumulator(Var v);

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor* param = nullptr;
    bool requires_grad = false;
    std::vector<double> grad;
    Backward backward;
  };

  bool recording_;
  std::vector<Node> nodes_;
};

/// Differentiable operations. Shapes follow the matrix view of Tensor.
namespace ag {

Var matmul(Var a, Var b);
Var matmul_transposed(Var a, Var b);  // a · bᵀ
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var add_row(Var a, Var row);  // broadcast a (1×n) row over every row of a
Var mul(Var a, Var b);
Var mul_const(Var a, const Tensor& factor);
Var add_const(Var a, const Tensor& offset);
Var scale(Var a, double factor);
Var relu(Var a);
Var softplus(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log_softmax_rows(Var a);
Var concat_cols(Var a, Var b);
Var gather_rows(Var table, std::span<const std::size_t> ids);
/// Entries (rows[i], cols[i]) collected into an n×1 column.
Var pick(Var a, std::span<const std::size_t> rows, std::span<const std::size_t> cols);
Var sum(Var a);
Var mean(Var a);
/// Σ_r Σ_c target(r,c) · (ln target(r,c) − logq(r,c)); target is constant.
Var kl_from_target(const Tensor& target, Var log_q);
/// Elementwise map with a supplied derivative.
Var map(Var a, const std::function<double(double)>& f, const std::function<double(double)>& df);

/// Single-direction LSTM over the rows of x (L×d). Gate order i, f, g, o in the
/// 4h columns of wx (d×4h), wh (h×4h), and bias (1×4h). Output L×h; with
/// `reverse` the recurrence runs from the last row to the first.
Var lstm(Var x, Var wx, Var wh, Var bias, bool reverse);

}  // namespace ag
}  // namespace sequst
