#include "nagg/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "nagg/aggregators.hpp"
#include "nagg/models.hpp"
#include "nagg/propcheck.hpp"
#include "nagg/tape.hpp"
#include "nagg/trainer.hpp"

namespace nagg {

namespace {

// Random direction tensor so the probe loss sum(out . R) exercises the whole
// Jacobian (a plain sum has zero gradient through softmax-style outputs).
Tensor direction(std::mt19937_64& rng, int rows, int cols) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Tensor r(rows, cols);
  for (double& v : r.data) v = unif(rng);
  return r;
}

ValueId probe_loss(Tape& t, ValueId out, const Tensor& r) {
  return t.sum_all(t.mul_elem(out, t.leaf(r)));
}

// Keeps entries at least `margin` away from zero (relu/leaky kinks).
Tensor away_from_zero(Tensor t, double margin = 1e-2) {
  for (double& v : t.data)
    if (std::abs(v) < margin) v = v < 0.0 ? v - margin : v + margin;
  return t;
}

using TrialFn = std::function<GradReport(std::mt19937_64&)>;

GradTargetResult run_target(const std::string& name, std::uint64_t seed, int trials,
                            double tolerance, const TrialFn& trial) {
  GradTargetResult result;
  result.target = name;
  result.tolerance = tolerance;
  std::mt19937_64 rng(seed);
  for (int i = 0; i < trials; ++i) {
    GradReport rep = trial(rng);
    result.max_rel_error = std::max(result.max_rel_error, rep.max_rel_error);
  }
  result.pass = result.max_rel_error <= tolerance;
  return result;
}

ValueId faulty_softplus(Tape& t, ValueId a) {
  const Tensor& A = t.value(a);
  Tensor out(A.rows, A.cols);
  for (std::size_t i = 0; i < A.size(); ++i) out.data[i] = std::log1p(std::exp(A.data[i]));
  return t.record(std::move(out), {a}, [a](Tape& tt, ValueId out_id) {
    const Tensor& g = tt.grad_of(out_id);
    const Tensor& A = tt.value(a);
    Tensor& ga = tt.grad_acc(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      ga.data[i] += 1.1 / (1.0 + std::exp(-A.data[i])) * g.data[i];  // 10% too steep
  });
}

std::vector<LayerSpec> two_layer_specs(AggKind kind, bool attention, int in_dim, int hidden,
                                       int classes) {
  LayerSpec l1;
  l1.in_dim = in_dim;
  l1.out_dim = hidden;
  l1.agg = AggConfig{kind, 0.3, true};
  l1.activation = Activation::Relu;
  LayerSpec l2 = l1;
  l2.activation = Activation::None;
  if (attention) {
    l1.weighting = WeightScheme::External;
    l1.attention = AttentionSpec{2, 0.2, true};
    l2.weighting = WeightScheme::External;
    l2.attention = AttentionSpec{1, 0.2, false};
    l2.in_dim = 2 * hidden;
  } else {
    l1.weighting = WeightScheme::SymNorm;
    l2.weighting = WeightScheme::SymNorm;
    l2.in_dim = hidden;
  }
  l2.out_dim = classes;
  return {l1, l2};
}

// Builds the full model loss as a function of one chosen parameter tensor.
// `slot` picks which leaf the checked tensor replaces:
//   {layer, kind: 0=w[head], 1=a[idx], 2=theta, 3=features}
struct ParamSlot {
  int layer = 0;
  int kind = 0;
  int index = 0;
};

GradReport model_grad_check(const std::vector<LayerSpec>& specs, const Graph& binary,
                            const Tensor& features, const std::vector<int>& labels,
                            const ParamSlot& slot, std::uint64_t seed, double step) {
  PreparedGraphs gs = prepare_graphs(binary);
  ModelParams params = init_params(specs, seed);
  std::vector<int> mask(features.rows);
  for (int i = 0; i < features.rows; ++i) mask[i] = i;

  Tensor x;
  if (slot.kind == 0) x = params.layers[slot.layer].w[slot.index];
  else if (slot.kind == 1) x = params.layers[slot.layer].a[slot.index];
  else if (slot.kind == 2) x = Tensor::scalar(params.layers[slot.layer].theta);
  else x = features;

  auto build = [&](Tape& t, ValueId xid) {
    ValueId h = slot.kind == 3 ? xid : t.leaf(features);
    ValueId x_cur = h;
    for (std::size_t l = 0; l < specs.size(); ++l) {
      const LayerParams& lp = params.layers[l];
      LayerHandles lh;
      for (std::size_t i = 0; i < lp.w.size(); ++i)
        lh.w.push_back(slot.kind == 0 && slot.layer == static_cast<int>(l) &&
                               slot.index == static_cast<int>(i)
                           ? xid
                           : t.leaf(lp.w[i]));
      for (std::size_t i = 0; i < lp.a.size(); ++i)
        lh.a.push_back(slot.kind == 1 && slot.layer == static_cast<int>(l) &&
                               slot.index == static_cast<int>(i)
                           ? xid
                           : t.leaf(lp.a[i]));
      if (agg_has_param(specs[l].agg.kind))
        lh.theta = slot.kind == 2 && slot.layer == static_cast<int>(l)
                       ? xid
                       : t.leaf(Tensor::scalar(lp.theta));
      x_cur = gcn_layer_forward(t, gs, x_cur, specs[l], lh, false, nullptr);
    }
    return masked_cross_entropy(t, x_cur, labels, mask);
  };
  return grad_check(build, x, step);
}

}  // namespace

std::vector<GradTargetResult> run_gradcheck(const GradcheckOptions& opts) {
  std::vector<GradTargetResult> results;
  std::uint64_t salt = 0;
  auto seed = [&]() { return opts.seed + 7919ULL * ++salt; };
  auto add = [&](const std::string& name, double tol, const TrialFn& fn, int trials = -1) {
    results.push_back(run_target(name, seed(), trials < 0 ? opts.inputs_per_op : trials, tol, fn));
  };

  // --- elementwise and dense ops ---
  add("matmul/left", opts.tol_ops, [&](std::mt19937_64& rng) {
    Tensor a = random_features(rng, 3, 4), b = random_features(rng, 4, 2);
    Tensor r = direction(rng, 3, 2);
    return grad_check(
        [&](Tape& t, ValueId x) { return probe_loss(t, t.matmul(x, t.leaf(b)), r); }, a,
        opts.step);
  });
  add("matmul/right", opts.tol_ops, [&](std::mt19937_64& rng) {
    Tensor a = random_features(rng, 3, 4), b = random_features(rng, 4, 2);
    Tensor r = direction(rng, 3, 2);
    return grad_check(
        [&](Tape& t, ValueId x) { return probe_loss(t, t.matmul(t.leaf(a), x), r); }, b,
        opts.step);
  });
  add("add", opts.tol_ops, [&](std::mt19937_64& rng) {
    Tensor a = random_features(rng, 3, 3), b = random_features(rng, 3, 3);
    Tensor r = direction(rng, 3, 3);
    return grad_check(
        [&](Tape& t, ValueId x) { return probe_loss(t, t.add(x, t.leaf(b)), r); }, a, opts.step);
  });
  add("add/scalar-broadcast", opts.tol_ops, [&](std::mt19937_64& rng) {
    Tensor a = random_features(rng, 1, 1), b = random_features(rng, 3, 3);
    Tensor r = direction(rng, 3, 3);
    return grad_check(
        [&](Tape& t, ValueId x) { return probe_loss(t, t.add(x, t.leaf(b)), r); }, a, opts.step);
  });
  add("sub/right", opts.tol_ops, [&](std::mt19937_64& rng) {
    Tensor a = random_features(rng, 3, 3), b = random_features(rng, 3, 3);
    Tensor r = direction(rng, 3, 3);
    return grad_check(
        [&](Tape& t, ValueId x) { return probe_loss(t, t.sub(t.leaf(a), x), r); }, b, opts.step);
  });
  add("mul_elem", opts.tol_ops, [&](std::mt19937_64& rng) {
    Tensor a = random_features(rng, 3, 3), b = random_features(rng, 3, 3);
    Tensor r = direction(rng, 3, 3);
    return grad_check(
        [&](Tape& t, ValueId x) { return probe_loss(t, t.mul_elem(x, t.leaf(b)), r); }, a,
        opts.step);
  });
  add("div_elem/numerator", opts.tol_ops, [&](std::mt19937_64& rng) {
    Tensor a = random_features(rng, 3, 3);
    Tensor b = random_features(rng, 3, 3, 0.5, 2.5);
    Tensor r = direction(rng, 3, 3);
    return grad_check(
        [&](Tape& t, ValueId x) { return probe_loss(t, t.div_elem(x, t.leaf(b)), r); }, a,
        opts.step);
  });
  add("div_elem/denominator", opts.tol_ops, [&](std::mt19937_64& rng) {
    Tensor a = random_features(rng, 3, 3);
    Tensor b = random_features(rng, 3, 3, 0.5, 2.5);
    Tensor r = direction(rng, 3, 3);
    return grad_check(
        [&](Tape& t, ValueId x) { return probe_loss(t, t.div_elem(t.leaf(a), x), r); }, b,
        opts.step);
  });
  add("scalar_mul", opts.tol_ops, [&](std::mt19937_64& rng) {
    Tensor a = random_features(rng, 3, 3);
    Tensor r = direction(rng, 3, 3);
    return grad_check(
        [&](Tape& t, ValueId x) { return probe_loss(t, t.scalar_mul(x, -1.7), r); }, a,
        opts.step);
  });
  add("add_scalar", opts.tol_ops, [&](std::mt19937_64& rng) {
    Tensor a = random_features(rng, 3, 3);
    Tensor r = direction(rng, 3, 3);
    return grad_check(
        [&](Tape& t, ValueId x) { return probe_loss(t, t.add_scalar(x, 0.9), r); }, a, opts.step);
  });
  add("relu", opts.tol_ops, [&](std::mt19937_64& rng) {
    Tensor a = away_from_zero(random_features(rng, 4, 4));
    Tensor r = direction(rng, 4, 4);
    return grad_check([&](Tape& t, ValueId x) { return probe_loss(t, t.relu(x), r); }, a,
                      opts.step);
  });
  add("leaky_relu", opts.tol_ops, [&](std::mt19937_64& rng) {
    Tensor a = away_from_zero(random_features(rng, 4, 4));
    Tensor r = direction(rng, 4, 4);
    return grad_check(
        [&](Tape& t, ValueId x) { return probe_loss(t, t.leaky_relu(x, 0.2), r); }, a, opts.step);
  });
  add("exp", opts.tol_ops, [&](std::mt19937_64& rng) {
    Tensor a = random_features(rng, 3, 3, -2.0, 2.0);
    Tensor r = direction(rng, 3, 3);
    return grad_check([&](Tape& t, ValueId x) { return probe_loss(t, t.exp(x), r); }, a,
                      opts.step);
  });
  add("log", opts.tol_ops, [&](std::mt19937_64& rng) {
    Tensor a = random_features(rng, 3, 3, 0.2, 4.0);
    Tensor r = direction(rng, 3, 3);
    return grad_check([&](Tape& t, ValueId x) { return probe_loss(t, t.log(x), r); }, a,
                      opts.step);
  });
  add("pow_elem/fractional", opts.tol_ops, [&](std::mt19937_64& rng) {
    Tensor a = random_features(rng, 3, 3, 0.2, 3.0);
    Tensor r = direction(rng, 3, 3);
    return grad_check(
        [&](Tape& t, ValueId x) { return probe_loss(t, t.pow_elem(x, 2.7), r); }, a, opts.step);
  });
  add("pow_elem/integer", opts.tol_ops, [&](std::mt19937_64& rng) {
    Tensor a = away_from_zero(random_features(rng, 3, 3));
    Tensor r = direction(rng, 3, 3);
    return grad_check(
        [&](Tape& t, ValueId x) { return probe_loss(t, t.pow_elem(x, 3.0), r); }, a, opts.step);
  });
  add("softplus", opts.tol_ops, [&](std::mt19937_64& rng) {
    Tensor a = random_features(rng, 3, 3);
    Tensor r = direction(rng, 3, 3);
    return grad_check([&](Tape& t, ValueId x) { return probe_loss(t, t.softplus(x), r); }, a,
                      opts.step);
  });

  // --- structure and segment ops (edges from a random graph) ---
  auto graph_setup = [&](std::mt19937_64& rng) {
    Graph g = random_graph(rng, 10);
    return g;
  };
  add("gather_rows", opts.tol_ops, [&](std::mt19937_64& rng) {
    Graph g = graph_setup(rng);
    Tensor h = random_features(rng, g.num_nodes(), 3);
    Tensor r = direction(rng, g.num_edges(), 3);
    return grad_check(
        [&](Tape& t, ValueId x) { return probe_loss(t, t.gather_rows(x, g.col_indices()), r); },
        h, opts.step);
  });
  add("mul_rows/values", opts.tol_ops, [&](std::mt19937_64& rng) {
    Tensor a = random_features(rng, 6, 3);
    Tensor s = random_features(rng, 6, 1, 0.2, 2.0);
    Tensor r = direction(rng, 6, 3);
    return grad_check(
        [&](Tape& t, ValueId x) { return probe_loss(t, t.mul_rows(x, t.leaf(s)), r); }, a,
        opts.step);
  });
  add("mul_rows/scales", opts.tol_ops, [&](std::mt19937_64& rng) {
    Tensor a = random_features(rng, 6, 3);
    Tensor s = random_features(rng, 6, 1, 0.2, 2.0);
    Tensor r = direction(rng, 6, 3);
    return grad_check(
        [&](Tape& t, ValueId x) { return probe_loss(t, t.mul_rows(t.leaf(a), x), r); }, s,
        opts.step);
  });
  add("concat_cols", opts.tol_ops, [&](std::mt19937_64& rng) {
    Tensor a = random_features(rng, 4, 2), b = random_features(rng, 4, 3);
    Tensor r = direction(rng, 4, 5);
    return grad_check(
        [&](Tape& t, ValueId x) { return probe_loss(t, t.concat_cols({x, t.leaf(b)}), r); }, a,
        opts.step);
  });
  add("row_softmax", opts.tol_ops, [&](std::mt19937_64& rng) {
    Tensor a = random_features(rng, 4, 5);
    Tensor r = direction(rng, 4, 5);
    return grad_check([&](Tape& t, ValueId x) { return probe_loss(t, t.row_softmax(x), r); }, a,
                      opts.step);
  });
  add("segment_sum", opts.tol_ops, [&](std::mt19937_64& rng) {
    Graph g = graph_setup(rng);
    Tensor ev = random_features(rng, g.num_edges(), 3);
    Tensor r = direction(rng, g.num_nodes(), 3);
    return grad_check(
        [&](Tape& t, ValueId x) { return probe_loss(t, t.segment_sum(x, g.row_offsets()), r); },
        ev, opts.step);
  });
  add("segment_max", opts.tol_ops, [&](std::mt19937_64& rng) {
    Graph g = graph_setup(rng);
    Tensor ev = gapped_features(rng, g.num_edges(), 3);
    Tensor r = direction(rng, g.num_nodes(), 3);
    return grad_check(
        [&](Tape& t, ValueId x) { return probe_loss(t, t.segment_max(x, g.row_offsets()), r); },
        ev, opts.step);
  });
  add("segment_softmax", opts.tol_ops, [&](std::mt19937_64& rng) {
    Graph g = graph_setup(rng);
    Tensor ev = random_features(rng, g.num_edges(), 2, -2.0, 2.0);
    Tensor r = direction(rng, g.num_edges(), 2);
    return grad_check(
        [&](Tape& t, ValueId x) {
          return probe_loss(t, t.segment_softmax(x, g.row_offsets(), 1.7), r);
        },
        ev, opts.step);
  });
  add("masked_cross_entropy", opts.tol_ops, [&](std::mt19937_64& rng) {
    Tensor logits = random_features(rng, 6, 4, -2.0, 2.0);
    std::uniform_int_distribution<int> cls(0, 3);
    std::vector<int> labels(6);
    for (int& l : labels) l = cls(rng);
    std::vector<int> mask{0, 2, 3, 5};
    return grad_check(
        [&](Tape& t, ValueId x) { return masked_cross_entropy(t, x, labels, mask); }, logits,
        opts.step);
  });

  // --- aggregators w.r.t. features, parameter, learned edge weights ---
  // mu sits slightly below the feature minimum so no shifted value is within
  // 1e-3 of the clamp and finite-difference probes stay on one branch.
  auto agg_trial = [&](AggKind kind, int wrt /*0=h,1=param,2=w*/, double param0) {
    return [&, kind, wrt, param0](std::mt19937_64& rng) {
      Graph g = random_graph(rng, 10);
      Graph sym = g.sym_normalize();
      Tensor h = gapped_features(rng, g.num_nodes(), 3);
      ShiftValue mu{global_min(h).mu_m - 0.01};
      Tensor w(g.num_edges(), 1);
      std::uniform_real_distribution<double> wd(0.2, 1.5);
      for (double& v : w.data) v = wd(rng);
      Tensor r = direction(rng, g.num_nodes(), 3);
      auto apply = [&, kind](Tape& t, ValueId hid, ValueId pid, ValueId wid) {
        switch (kind) {
          case AggKind::Sum: return agg_sum(t, sym, hid, wid);
          case AggKind::Max: return agg_max(t, sym, hid);
          case AggKind::Lp: return agg_lp(t, sym, hid, pid, mu, wid);
          case AggKind::Poly: return agg_poly(t, sym, hid, pid, mu, wid);
          case AggKind::Softmax: return agg_softmax(t, sym, hid, pid, wid);
        }
        throw std::invalid_argument("bad kind");
      };
      if (wrt == 0)
        return grad_check(
            [&](Tape& t, ValueId x) {
              ValueId pid = t.leaf(Tensor::scalar(param0));
              return probe_loss(t, apply(t, x, pid, kNoValue), r);
            },
            h, opts.step);
      if (wrt == 1)
        return grad_check(
            [&](Tape& t, ValueId x) {
              ValueId hid = t.leaf(h);
              return probe_loss(t, apply(t, hid, x, kNoValue), r);
            },
            Tensor::scalar(param0), opts.step);
      return grad_check(
          [&](Tape& t, ValueId x) {
            ValueId hid = t.leaf(h);
            ValueId pid = t.leaf(Tensor::scalar(param0));
            return probe_loss(t, apply(t, hid, pid, x), r);
          },
          w, opts.step);
    };
  };
  add("agg_sum/h", opts.tol_ops, agg_trial(AggKind::Sum, 0, 0.0));
  add("agg_sum/w", opts.tol_ops, agg_trial(AggKind::Sum, 2, 0.0));
  add("agg_max/h", opts.tol_ops, agg_trial(AggKind::Max, 0, 0.0));
  add("agg_lp/h", opts.tol_ops, agg_trial(AggKind::Lp, 0, 2.3));
  add("agg_lp/p", opts.tol_ops, agg_trial(AggKind::Lp, 1, 2.3));
  add("agg_lp/w", opts.tol_ops, agg_trial(AggKind::Lp, 2, 2.3));
  add("agg_poly/h", opts.tol_ops, agg_trial(AggKind::Poly, 0, 1.7));
  add("agg_poly/alpha", opts.tol_ops, agg_trial(AggKind::Poly, 1, 1.7));
  add("agg_poly/w", opts.tol_ops, agg_trial(AggKind::Poly, 2, 1.7));
  add("agg_softmax/h", opts.tol_ops, agg_trial(AggKind::Softmax, 0, 1.3));
  add("agg_softmax/gamma", opts.tol_ops, agg_trial(AggKind::Softmax, 1, 1.3));
  add("agg_softmax/w", opts.tol_ops, agg_trial(AggKind::Softmax, 2, 1.3));

  // --- full two-layer models ---
  auto model_trial = [&](AggKind kind, bool attention, ParamSlot slot) {
    return [&, kind, attention, slot](std::mt19937_64& rng) {
      Graph g = random_graph(rng, 10, 0.4);
      Tensor features = random_features(rng, g.num_nodes(), 5, -1.0, 1.0);
      std::uniform_int_distribution<int> cls(0, 2);
      std::vector<int> labels(g.num_nodes());
      for (int& l : labels) l = cls(rng);
      std::vector<LayerSpec> specs = two_layer_specs(kind, attention, 5, 4, 3);
      return model_grad_check(specs, g, features, labels, slot, rng(), opts.step);
    };
  };
  const int model_trials = 3;
  for (AggKind kind :
       {AggKind::Sum, AggKind::Max, AggKind::Lp, AggKind::Poly, AggKind::Softmax}) {
    const std::string base = std::string("model/gcn-") + to_string(kind);
    add(base + "/W1", opts.tol_model, model_trial(kind, false, ParamSlot{0, 0, 0}), model_trials);
    add(base + "/W2", opts.tol_model, model_trial(kind, false, ParamSlot{1, 0, 0}), model_trials);
    if (agg_has_param(kind))
      add(base + "/theta1", opts.tol_model, model_trial(kind, false, ParamSlot{0, 2, 0}),
          model_trials);
  }
  add("model/gcn-lp/features", opts.tol_model, model_trial(AggKind::Lp, false, ParamSlot{0, 3, 0}),
      model_trials);
  add("model/gat-sum/W1", opts.tol_model, model_trial(AggKind::Sum, true, ParamSlot{0, 0, 0}),
      model_trials);
  add("model/gat-sum/a1", opts.tol_model, model_trial(AggKind::Sum, true, ParamSlot{0, 1, 0}),
      model_trials);
  add("model/gat-softmax/W1", opts.tol_model,
      model_trial(AggKind::Softmax, true, ParamSlot{0, 0, 0}), model_trials);
  add("model/gat-softmax/a2", opts.tol_model,
      model_trial(AggKind::Softmax, true, ParamSlot{0, 1, 1}), model_trials);
  add("model/gat-softmax/theta1", opts.tol_model,
      model_trial(AggKind::Softmax, true, ParamSlot{0, 2, 0}), model_trials);

  if (opts.inject_fault) {
    add("softplus[injected-fault]", opts.tol_ops, [&](std::mt19937_64& rng) {
      Tensor a = random_features(rng, 3, 3);
      Tensor r = direction(rng, 3, 3);
      return grad_check(
          [&](Tape& t, ValueId x) { return probe_loss(t, faulty_softplus(t, x), r); }, a,
          opts.step);
    });
  }
  return results;
}

bool all_passed(const std::vector<GradTargetResult>& results) {
  for (const auto& r : results)
    if (!r.pass) return false;
  return true;
}

}  // namespace nagg
