#pragma once

#include <functional>
#include <vector>

#include "tensor.hpp"

namespace dcwp {

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode differentiation record. Ops append nodes in evaluation
/// order, which is already topological: every operand precedes its
/// consumers. backward() visits nodes exactly once, in reverse.
///
/// Tapes are single-writer. One backward pass resets all gradients first,
/// so repeated calls on the same tape are independent of each other.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input (model weights, pruning logits, ...).
  Var leaf(Tensor value);
  /// Non-differentiable input (data, masks treated as constants, ...).
  Var constant(Tensor value);

  const Tensor& value(Var v) const;
  /// Gradient of the last backward() output w.r.t. v; zeros if untouched.
  const Tensor& grad(Var v);

  /// Accumulates dL/d(leaf) for every leaf reachable from `output`.
  /// `output` must be scalar (numel == 1).
  void backward(Var output);

  std::size_t size() const { return nodes_.size(); }

  // ---- primitive set ----
  Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
  Var add(Var a, Var b);            // same shape
  Var add_rowvec(Var mat, Var vec); // (n,d) + (d), broadcast over rows
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise, same shape
  Var scale(Var a, double s);
  Var relu(Var a);     // subgradient 0 at exactly 0
  Var sigmoid(Var a);
  Var exp(Var a);
  Var log(Var a);  // error on non-positive entries
  Var abs(Var a);  // subgradient 0 at exactly 0
  Var sum(Var a);   // -> scalar
  Var mean(Var a);  // -> scalar
  Var rowsum(Var a);  // (n,d) -> (n)
  Var dot(Var a, Var b);  // rank-1, same length -> scalar
  Var l2_normalize_rows(Var a);  // rows scaled to unit norm; error on zero rows
  /// Like l2_normalize_rows but all-zero rows pass through as zero vectors
  /// (subgradient 0), for representations that relu left completely dead.
  Var l2_normalize_rows_safe(Var a);
  Var log_softmax_rows(Var a);
  Var gather_rows(Var a, std::vector<int> rows);
  Var take_per_row(Var a, std::vector<int> col_per_row);  // (n,d) -> (n)

  /// Relaxed Bernoulli gate: relaxed = sigmoid((theta + noise)/tau), forward
  /// value is the hard threshold 1[relaxed > 1/2], gradient flows through the
  /// relaxed value (straight-through).
  Var binary_concrete(Var theta, const Tensor& logistic_noise, double tau);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::function<void(Tape&)> back;  // accumulates into parents' grads
  };

  Var push(Tensor value, bool requires_grad, std::function<void(Tape&)> back);
  Node& node(Var v);
  const Node& node(Var v) const;
  Tensor& grad_buffer(int id);  // materializes zeros on first touch
  bool wants_grad(Var v) const { return node(v).requires_grad; }

  std::vector<Node> nodes_;
};

/// Central-difference gradient oracle: (f(x+h e_i) - f(x-h e_i)) / (2h).
Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                              double h);

}  // namespace dcwp
