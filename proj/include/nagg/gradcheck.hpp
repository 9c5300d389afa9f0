#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nagg {

struct GradTargetResult {
  std::string target;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct GradcheckOptions {
  std::uint64_t seed = 7;
  double step = 1e-5;
  double tol_ops = 1e-4;    // individual ops and aggregators
  double tol_model = 1e-3;  // full two-layer models
  int inputs_per_op = 10;
  bool inject_fault = false;  // adds a deliberately wrong backward; must fail
};

/// Central-difference verification of every registered op, every aggregator
/// (w.r.t. features, parameter and learned edge weights) and full two-layer
/// GCN/GAT models, at random inputs kept away from kinks and domain edges.
std::vector<GradTargetResult> run_gradcheck(const GradcheckOptions& opts = {});

bool all_passed(const std::vector<GradTargetResult>& results);

}  // namespace nagg
