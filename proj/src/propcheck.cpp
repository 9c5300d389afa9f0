#include "nagg/propcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace nagg {

namespace {

double value_range(const Tensor& h) {
  const auto [mn, mx] = std::minmax_element(h.data.begin(), h.data.end());
  return std::max(*mx - *mn, 1e-12);
}

// Dense reference for the weighted sum / mean specializations.
Tensor dense_weighted_sum_shifted(const Graph& g, const Tensor& h, double mu) {
  Tensor out(g.num_nodes(), h.cols);
  for (int v = 0; v < g.num_nodes(); ++v)
    for (int e = g.row_offsets()[v]; e < g.row_offsets()[v + 1]; ++e)
      for (int k = 0; k < h.cols; ++k)
        out.at(v, k) += g.edge_weights()[e] * (h.at(g.col_indices()[e], k) - mu);
  for (double& v : out.data) v += mu;
  return out;
}

Tensor dense_weighted_mean(const Graph& g, const Tensor& h) {
  Tensor out(g.num_nodes(), h.cols);
  for (int v = 0; v < g.num_nodes(); ++v) {
    double wsum = 0.0;
    for (int e = g.row_offsets()[v]; e < g.row_offsets()[v + 1]; ++e)
      wsum += g.edge_weights()[e];
    for (int e = g.row_offsets()[v]; e < g.row_offsets()[v + 1]; ++e)
      for (int k = 0; k < h.cols; ++k)
        out.at(v, k) += g.edge_weights()[e] * h.at(g.col_indices()[e], k) / wsum;
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
  return worst;
}

struct Trial {
  Graph binary;
  Tensor h;
};

Trial make_trial(std::mt19937_64& rng, bool gapped) {
  Trial t;
  t.binary = random_graph(rng);
  std::uniform_int_distribution<int> dim(1, 8);
  const int d = dim(rng);
  t.h = gapped ? gapped_features(rng, t.binary.num_nodes(), d)
               : random_features(rng, t.binary.num_nodes(), d);
  return t;
}

using Check = std::function<double(std::mt19937_64&)>;  // returns observed error

PropertyResult run_property(const std::string& name, std::uint64_t seed, int trials,
                            double tolerance, const Check& check) {
  PropertyResult result;
  result.name = name;
  result.tolerance = tolerance;
  result.trials = trials;
  std::mt19937_64 rng(seed);
  for (int i = 0; i < trials; ++i)
    result.worst_error = std::max(result.worst_error, check(rng));
  result.pass = result.worst_error <= tolerance;
  return result;
}

}  // namespace

Graph random_graph(std::mt19937_64& rng, int max_nodes, double edge_prob) {
  std::uniform_int_distribution<int> nodes(2, max_nodes);
  const int n = nodes(rng);
  double p = edge_prob;
  if (p < 0.0) {
    std::uniform_real_distribution<double> pd(0.05, 0.5);
    p = pd(rng);
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  EdgeList edges;
  edges.num_nodes = n;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (unif(rng) < p) edges.pairs.emplace_back(i, j);
  return build_graph(edges, /*add_self_loops=*/true, /*symmetrize=*/true);
}

Tensor random_features(std::mt19937_64& rng, int rows, int cols, double lo, double hi) {
  std::uniform_real_distribution<double> unif(lo, hi);
  Tensor t(rows, cols);
  for (double& v : t.data) v = unif(rng);
  return t;
}

Tensor gapped_features(std::mt19937_64& rng, int rows, int cols, double gap) {
  // Per column: a shuffled ladder with rungs 1.5*gap apart plus jitter of at
  // most 0.2*gap, so pairwise separations stay >= gap in any subset.
  Tensor t(rows, cols);
  std::vector<int> order(rows);
  std::uniform_real_distribution<double> jitter(-0.2 * gap, 0.2 * gap);
  std::uniform_real_distribution<double> base(-2.0, 2.0);
  for (int k = 0; k < cols; ++k) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const double b = base(rng);
    for (int r = 0; r < rows; ++r) t.at(order[r], k) = b + 1.5 * gap * r + jitter(rng);
  }
  return t;
}

std::vector<PropertyResult> run_propcheck(const PropcheckOptions& opts) {
  std::vector<PropertyResult> results;
  std::uint64_t salt = 0;
  auto seed = [&]() { return opts.master_seed + 1000003ULL * ++salt; };

  // --- Specializations: p=1 / alpha=0 / gamma=0 ---
  results.push_back(run_property(
      "lp(p=1) == shifted weighted sum [symnorm+binary]", seed(), opts.limit_graphs,
      opts.tol_exact, [&](std::mt19937_64& rng) {
        Trial t = make_trial(rng, false);
        const double mu = global_min(t.h).mu_m;
        Graph sym = t.binary.sym_normalize();
        double worst = 0.0;
        for (const Graph* gr : {&t.binary, &sym})
          worst = std::max(worst, max_abs_diff(agg_eval(*gr, t.h, AggKind::Lp, 1.0),
                                               dense_weighted_sum_shifted(*gr, t.h, mu)));
        return worst;
      }));

  results.push_back(run_property(
      "poly(alpha=0) == weighted mean [symnorm+binary]", seed(), opts.limit_graphs,
      opts.tol_exact, [&](std::mt19937_64& rng) {
        Trial t = make_trial(rng, false);
        Graph sym = t.binary.sym_normalize();
        double worst = 0.0;
        for (const Graph* gr : {&t.binary, &sym})
          worst = std::max(worst, max_abs_diff(agg_eval(*gr, t.h, AggKind::Poly, 0.0),
                                               dense_weighted_mean(*gr, t.h)));
        return worst;
      }));

  results.push_back(run_property(
      "softmax(gamma=0) == neighborhood mean [binary]", seed(), opts.limit_graphs,
      opts.tol_exact, [&](std::mt19937_64& rng) {
        Trial t = make_trial(rng, false);
        return max_abs_diff(agg_eval(t.binary, t.h, AggKind::Softmax, 0.0),
                            dense_weighted_mean(t.binary, t.h));
      }));

  // --- Limits: p, alpha, gamma -> infinity match max under the gap condition ---
  auto limit_check = [&](AggKind kind, double param, bool include_symnorm) {
    return [&, kind, param, include_symnorm](std::mt19937_64& rng) {
      Trial t = make_trial(rng, true);
      const double range = value_range(t.h);
      double worst = 0.0;
      Graph sym = t.binary.sym_normalize();
      std::vector<const Graph*> graphs{&t.binary};
      if (include_symnorm) graphs.push_back(&sym);
      for (const Graph* gr : graphs) {
        Tensor got = agg_eval(*gr, t.h, kind, param);
        Tensor want = agg_eval(*gr, t.h, AggKind::Max, 0.0);
        worst = std::max(worst, max_abs_diff(got, want) / range);
      }
      return worst;
    };
  };
  results.push_back(run_property("lp(p=128) ~= max within range fraction [symnorm+binary]", seed(),
                                 opts.limit_graphs, opts.tol_limit_lp,
                                 limit_check(AggKind::Lp, 128.0, true)));
  results.push_back(run_property("poly(alpha=128) ~= max within range fraction [symnorm+binary]",
                                 seed(), opts.limit_graphs, opts.tol_limit_poly,
                                 limit_check(AggKind::Poly, 128.0, true)));
  results.push_back(run_property("softmax(gamma=128) ~= max within range fraction [binary]",
                                 seed(), opts.limit_graphs, opts.tol_limit_softmax,
                                 limit_check(AggKind::Softmax, 128.0, false)));

  // --- Monotonicity in the interpolation parameter ---
  auto monotone_check = [&](AggKind kind, std::vector<double> grid, bool rownorm_weights) {
    return [&, kind, grid, rownorm_weights](std::mt19937_64& rng) {
      Trial t = make_trial(rng, false);
      Graph g = rownorm_weights ? t.binary.row_normalize() : t.binary;
      double worst = 0.0;
      Tensor prev = agg_eval(g, t.h, kind, grid.front());
      for (std::size_t i = 1; i < grid.size(); ++i) {
        Tensor next = agg_eval(g, t.h, kind, grid[i]);
        for (std::size_t j = 0; j < next.size(); ++j)
          worst = std::max(worst, prev.data[j] - next.data[j]);  // violation if positive
        prev = std::move(next);
      }
      return worst;
    };
  };
  results.push_back(run_property("lp nondecreasing in p [rownorm]", seed(), opts.trials,
                                 opts.tol_monotone,
                                 monotone_check(AggKind::Lp, {1, 2, 4, 8, 32}, true)));
  results.push_back(run_property("poly nondecreasing in alpha [binary]", seed(), opts.trials,
                                 opts.tol_monotone,
                                 monotone_check(AggKind::Poly, {0, 1, 4, 16, 64}, false)));
  results.push_back(run_property("softmax nondecreasing in gamma [binary]", seed(), opts.trials,
                                 opts.tol_monotone,
                                 monotone_check(AggKind::Softmax, {0, 1, 4, 16, 64}, false)));

  // --- Bounds: outputs below the per-neighborhood max (all three, stated
  // schemes); above the per-neighborhood min for poly and softmax ---
  results.push_back(run_property(
      "outputs within neighborhood bounds", seed(), opts.trials, opts.tol_bounds,
      [&](std::mt19937_64& rng) {
        Trial t = make_trial(rng, false);
        Graph rn = t.binary.row_normalize();
        std::uniform_real_distribution<double> pd(1.0, 16.0), ad(0.0, 16.0), gd(0.0, 16.0);
        Tensor nmax = agg_eval(t.binary, t.h, AggKind::Max, 0.0);
        Tensor negated = t.h;
        for (double& v : negated.data) v = -v;
        Tensor nmin = agg_eval(t.binary, negated, AggKind::Max, 0.0);  // -min per neighborhood
        double worst = 0.0;
        auto upper = [&](const Tensor& out) {
          for (std::size_t i = 0; i < out.size(); ++i)
            worst = std::max(worst, out.data[i] - nmax.data[i]);
        };
        auto lower = [&](const Tensor& out) {
          for (std::size_t i = 0; i < out.size(); ++i)
            worst = std::max(worst, (-nmin.data[i]) - out.data[i]);
        };
        Tensor lp = agg_eval(rn, t.h, AggKind::Lp, pd(rng));
        Tensor poly = agg_eval(rn, t.h, AggKind::Poly, ad(rng));
        Tensor smax = agg_eval(t.binary, t.h, AggKind::Softmax, gd(rng));
        upper(lp);
        upper(poly);
        upper(smax);
        lower(poly);
        lower(smax);
        return worst;
      }));

  // --- Translation equivariance: AGG(h + c) == AGG(h) + c ---
  results.push_back(run_property(
      "translation equivariance", seed(), opts.trials, opts.tol_translation,
      [&](std::mt19937_64& rng) {
        Trial t = make_trial(rng, false);
        Graph sym = t.binary.sym_normalize();
        std::uniform_real_distribution<double> cd(-100.0, 100.0);
        std::uniform_real_distribution<double> pd(1.0, 8.0), ad(0.0, 8.0), gd(0.0, 8.0);
        const double c = cd(rng);
        Tensor shifted = t.h;
        for (double& v : shifted.data) v += c;
        double worst = 0.0;
        auto check = [&](const Graph& g, AggKind kind, double param) {
          Tensor base = agg_eval(g, t.h, kind, param);
          for (double& v : base.data) v += c;
          worst = std::max(worst, max_abs_diff(agg_eval(g, shifted, kind, param), base));
        };
        check(sym, AggKind::Lp, pd(rng));
        check(sym, AggKind::Poly, ad(rng));
        check(t.binary, AggKind::Softmax, gd(rng));
        return worst;
      }));

  // --- Permutation equivariance ---
  results.push_back(run_property(
      "permutation equivariance", seed(), opts.trials, opts.tol_permutation,
      [&](std::mt19937_64& rng) {
        Trial t = make_trial(rng, false);
        const int n = t.binary.num_nodes();
        std::vector<int> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        EdgeList relabeled;
        relabeled.num_nodes = n;
        for (int v = 0; v < n; ++v)
          for (int e = t.binary.row_offsets()[v]; e < t.binary.row_offsets()[v + 1]; ++e) {
            const int u = t.binary.col_indices()[e];
            if (v <= u) relabeled.pairs.emplace_back(perm[v], perm[u]);
          }
        Graph gp = build_graph(relabeled, true, true);
        Tensor hp(n, t.h.cols);
        for (int v = 0; v < n; ++v)
          for (int k = 0; k < t.h.cols; ++k) hp.at(perm[v], k) = t.h.at(v, k);
        std::uniform_real_distribution<double> pd(1.0, 8.0);
        const double p = pd(rng);
        double worst = 0.0;
        for (AggKind kind : {AggKind::Sum, AggKind::Max, AggKind::Lp, AggKind::Poly,
                             AggKind::Softmax}) {
          const double param = kind == AggKind::Lp ? p : (kind == AggKind::Poly ? p - 1.0 : p);
          Tensor base = agg_eval(t.binary, t.h, kind, param);
          Tensor moved = agg_eval(gp, hp, kind, param);
          for (int v = 0; v < n; ++v)
            for (int k = 0; k < t.h.cols; ++k)
              worst = std::max(worst, std::abs(moved.at(perm[v], k) - base.at(v, k)));
        }
        return worst;
      }));

  // --- Unasserted observation: softmax limit under symnorm weights ---
  {
    PropertyResult obs;
    obs.name = "softmax(gamma=128) vs max under symnorm (observed, not asserted)";
    obs.tolerance = 0.0;
    obs.trials = opts.limit_graphs;
    std::mt19937_64 rng(seed());
    for (int i = 0; i < opts.limit_graphs; ++i) {
      Trial t = make_trial(rng, true);
      Graph sym = t.binary.sym_normalize();
      Tensor got = agg_eval(sym, t.h, AggKind::Softmax, 128.0);
      Tensor want = agg_eval(sym, t.h, AggKind::Max, 0.0);
      obs.worst_error = std::max(obs.worst_error, max_abs_diff(got, want) / value_range(t.h));
    }
    obs.pass = true;
    obs.note = "limit is A_vu* h_u*, not the max; deviation reported for reference";
    results.push_back(obs);
  }

  return results;
}

bool all_passed(const std::vector<PropertyResult>& results) {
  for (const auto& r : results)
    if (!r.pass) return false;
  return true;
}

}  // namespace nagg
