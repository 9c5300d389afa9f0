#pragma once

#include <string>

#include "nagg/graph.hpp"
#include "nagg/tape.hpp"

namespace nagg {

enum class AggKind { Sum, Max, Lp, Poly, Softmax };

AggKind agg_kind_from_string(const std::string& name);
const char* to_string(AggKind k);

/// Aggregator selection plus its raw unconstrained parameter theta.
/// The effective parameter is kind-dependent:
///   Lp:      p     = 1 + softplus(theta)   in [1, inf)
///   Poly:    alpha = softplus(theta)       in [0, inf)
///   Softmax: gamma = softplus(theta)       in [0, inf)
/// theta is ignored for Sum and Max.
struct AggConfig {
  AggKind kind = AggKind::Sum;
  double theta = 0.0;
  bool learnable = false;
};

/// Global minimum entry of the layer input, subtracted before powering so
/// every powered quantity is nonnegative. Held constant in backward.
struct ShiftValue {
  double mu_m = 0.0;
};

bool agg_has_param(AggKind k);

double softplus_value(double x);
/// Inverse of softplus, clamped so that targets at (or numerically near) the
/// domain endpoint map to a finite theta with softplus(theta) == target.
double inverse_softplus(double y);
/// Raw theta -> effective parameter. Rejects Sum/Max (no parameter).
double reparam(const AggConfig& cfg);
/// theta for a desired effective parameter value (inverse of reparam).
double theta_for_effective(AggKind kind, double effective);
/// Tape version: theta (1x1) -> effective parameter (1x1), differentiable.
ValueId reparam(Tape& t, AggKind kind, ValueId theta);

ShiftValue global_min(const Tensor& h);

// Fused neighborhood aggregation kernels over CSR rows. `h` is n x d;
// outputs are n x d. `w_edges`, when valid, is an E x 1 tape value that
// overrides the graph's static weights (learned attention); gradients then
// flow into it. Parameters p/alpha/gamma are 1x1 tape values.
ValueId agg_sum(Tape& t, const Graph& g, ValueId h, ValueId w_edges = kNoValue);
ValueId agg_max(Tape& t, const Graph& g, ValueId h);
/// Shifted weighted p-norm, evaluated in log space:
/// out[v] = exp(LSE_u(ln w + p ln max(h_u - mu, eps)) / p) + mu, p >= 1.
ValueId agg_lp(Tape& t, const Graph& g, ValueId h, ValueId p, ShiftValue mu,
               ValueId w_edges = kNoValue);
/// Ratio of shifted power sums:
/// out[v] = sum_u w (h_u-mu)^(a+1) / sum_u w (h_u-mu)^a + mu, a >= 0, 0^0 = 1.
ValueId agg_poly(Tape& t, const Graph& g, ValueId h, ValueId alpha, ShiftValue mu,
                 ValueId w_edges = kNoValue);
/// Features reweighted by a temperature softmax over the neighborhood:
/// out[v] = sum_u w(v,u) h_u s_u with s = softmax_u(gamma h_u) per column.
/// The softmax normalizer is unweighted over N_v.
ValueId agg_softmax(Tape& t, const Graph& g, ValueId h, ValueId gamma, ValueId w_edges = kNoValue);

/// Convenience forward-only evaluation with an effective parameter value.
/// mu is recomputed from h for Lp/Poly.
Tensor agg_eval(const Graph& g, const Tensor& h, AggKind kind, double param = 0.0);

}  // namespace nagg
