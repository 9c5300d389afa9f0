#pragma once

#include <functional>
#include <random>
#include <vector>

#include "nagg/tensor.hpp"

namespace nagg {

/// Handle to a value recorded on a Tape.
using ValueId = int;
inline constexpr ValueId kNoValue = -1;

struct GradReport {
  double max_rel_error = 0.0;
  int worst_coordinate = -1;
  double analytic = 0.0;  // analytic gradient at the worst coordinate
  double numeric = 0.0;   // central-difference estimate at the worst coordinate
};

/// Reverse-mode tape over dense 2-D tensors.
///
/// Values are recorded in topological (construction) order; backward() walks
/// the record in reverse, accumulating gradients into every input. A tape is
/// single-owner: build, run backward, read gradients, discard. Training loops
/// build a fresh tape per step.
class Tape {
 public:
  ValueId leaf(Tensor value, bool trainable = false);

  const Tensor& value(ValueId id) const;
  /// Gradient of the last backward() target w.r.t. `id`; zeros if untouched.
  const Tensor& grad(ValueId id);

  std::size_t num_nodes() const { return nodes_.size(); }

  // ----- arithmetic -----
  ValueId matmul(ValueId a, ValueId b);
  ValueId add(ValueId a, ValueId b);       // same shape, or one side 1x1
  ValueId sub(ValueId a, ValueId b);
  ValueId mul_elem(ValueId a, ValueId b);
  ValueId div_elem(ValueId a, ValueId b);
  ValueId scalar_mul(ValueId a, double c);
  ValueId add_scalar(ValueId a, double c);

  // ----- elementwise nonlinearities -----
  ValueId relu(ValueId a);
  ValueId leaky_relu(ValueId a, double slope);
  ValueId exp(ValueId a);
  ValueId log(ValueId a);                  // requires all entries > 0
  ValueId pow_elem(ValueId a, double exponent);
  ValueId softplus(ValueId a);

  // ----- structure ops -----
  /// out[e] = a[indices[e]]; backward scatter-adds per source row.
  ValueId gather_rows(ValueId a, std::vector<int> indices);
  /// Rowwise broadcast product: a is m x d, s is m x 1.
  ValueId mul_rows(ValueId a, ValueId s);
  ValueId concat_cols(const std::vector<ValueId>& parts);
  ValueId row_softmax(ValueId a);
  ValueId sum_all(ValueId a);              // 1x1
  /// Train-time inverted dropout; draws one uniform per entry from rng.
  ValueId dropout(ValueId a, double rate, std::mt19937_64& rng);

  // ----- segment reductions (rows of a partitioned by offsets) -----
  ValueId segment_sum(ValueId edge_values, std::vector<int> row_offsets);
  /// Per segment and column, max over rows; gradient routes to the first
  /// (lowest-index) argmax row. Empty segments are rejected.
  ValueId segment_max(ValueId edge_values, std::vector<int> row_offsets);
  /// Per segment and column: exp(g*x - g*max) / sum(exp(g*x - g*max)).
  ValueId segment_softmax(ValueId edge_values, std::vector<int> row_offsets, double gamma);

  /// Fused-op hook: record `out` produced from `inputs` with a custom
  /// backward. The rule receives the tape and the output id; it reads
  /// grad_of(out) and accumulates into grad_acc(input).
  ValueId record(Tensor out, std::vector<ValueId> inputs,
                 std::function<void(Tape&, ValueId)> backward_rule);

  /// Accumulation target for backward rules (allocates zeros on first use).
  Tensor& grad_acc(ValueId id);
  /// Read-only gradient seen by a node's backward rule.
  const Tensor& grad_of(ValueId id);
  bool requires_grad(ValueId id) const;

  /// Reverse sweep from a 1x1 loss. Gradients of earlier backward() calls
  /// are cleared first.
  void backward(ValueId loss);

 private:
  struct Node {
    Tensor value;
    std::vector<ValueId> inputs;
    std::function<void(Tape&, ValueId)> backward_rule;  // empty for leaves
    bool requires_grad = false;
  };

  ValueId push(Tensor value, std::vector<ValueId> inputs,
               std::function<void(Tape&, ValueId)> rule);
  void check_id(ValueId id) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;  // parallel to nodes_; empty = untouched
};

/// Central-difference check of d(loss)/dx. `build` must construct the loss
/// from a fresh tape and the leaf holding x; it is invoked repeatedly.
/// Relative error per coordinate: |a - n| / max(1, |a|, |n|).
GradReport grad_check(const std::function<ValueId(Tape&, ValueId)>& build, const Tensor& x,
                      double step = 1e-5);

}  // namespace nagg
