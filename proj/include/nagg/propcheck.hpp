#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "nagg/aggregators.hpp"
#include "nagg/graph.hpp"
#include "nagg/tensor.hpp"

namespace nagg {

struct PropertyResult {
  std::string name;
  bool pass = false;
  double worst_error = 0.0;
  double tolerance = 0.0;
  int trials = 0;
  std::string note;  // unasserted observations
};

struct PropcheckOptions {
  std::uint64_t master_seed = 20240613;
  int trials = 100;       // monotonicity / bounds / equivariance trials
  int limit_graphs = 50;  // graphs for the specialization and limit suites
  double tol_exact = 1e-10;
  double tol_limit_lp = 0.05;       // fraction of the value range
  double tol_limit_poly = 0.05;
  double tol_limit_softmax = 0.01;
  double tol_monotone = 1e-9;
  double tol_bounds = 1e-10;
  double tol_translation = 1e-9;
  double tol_permutation = 1e-9;
};

/// Runs the aggregator property suite on randomized graphs (fixed master
/// seed): the p=1 / alpha=0 / gamma=0 specializations, the p,alpha,gamma ->
/// infinity max limits under the gap condition, monotonicity in the
/// interpolation parameter, output bounds, translation equivariance and
/// permutation equivariance. SymNorm behavior of the softmax limit is
/// reported as a note without being asserted.
std::vector<PropertyResult> run_propcheck(const PropcheckOptions& opts = {});

bool all_passed(const std::vector<PropertyResult>& results);

// Randomized inputs shared by the property and gradient suites.

/// Erdos-Renyi graph, symmetrized, self-loops added; 2..max_nodes nodes.
Graph random_graph(std::mt19937_64& rng, int max_nodes = 50, double edge_prob = -1.0);
/// Uniform features in [lo, hi].
Tensor random_features(std::mt19937_64& rng, int rows, int cols, double lo = -5.0,
                       double hi = 5.0);
/// Features whose values within each column are pairwise separated by at
/// least `gap` (so every neighborhood has a unique, separated maximum).
Tensor gapped_features(std::mt19937_64& rng, int rows, int cols, double gap = 0.1);

}  // namespace nagg
