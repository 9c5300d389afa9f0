#include "nagg/aggregators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace nagg {

namespace {

constexpr double kShiftFloor = 1e-12;  // floor on shifted values before powering

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

void check_h(const Graph& g, const Tensor& h, const char* op) {
  if (h.rows != g.num_nodes()) {
    std::ostringstream os;
    os << op << ": feature matrix " << h.shape_str() << " for graph with " << g.num_nodes()
       << " nodes";
    fail(os.str());
  }
}

// Resolves static vs learned edge weights; validates the learned shape.
const std::vector<double>& edge_weight_values(Tape& t, const Graph& g, ValueId w_edges,
                                              const char* op) {
  if (w_edges == kNoValue) return g.edge_weights();
  const Tensor& w = t.value(w_edges);
  if (w.cols != 1 || w.rows != g.num_edges()) {
    std::ostringstream os;
    os << op << ": edge weights " << w.shape_str() << " for " << g.num_edges() << " edges";
    fail(os.str());
  }
  for (double v : w.data)
    if (!(v > 0.0)) fail(std::string(op) + ": non-positive learned edge weight");
  return w.data;
}

double scalar_param(Tape& t, ValueId id, const char* op) {
  const Tensor& v = t.value(id);
  if (!v.is_scalar()) fail(std::string(op) + ": parameter has shape " + v.shape_str());
  return v.data[0];
}

}  // namespace

AggKind agg_kind_from_string(const std::string& name) {
  if (name == "sum") return AggKind::Sum;
  if (name == "max") return AggKind::Max;
  if (name == "lp") return AggKind::Lp;
  if (name == "poly") return AggKind::Poly;
  if (name == "softmax") return AggKind::Softmax;
  fail("unknown aggregator '" + name + "' (expected sum|max|lp|poly|softmax)");
}

const char* to_string(AggKind k) {
  switch (k) {
    case AggKind::Sum: return "sum";
    case AggKind::Max: return "max";
    case AggKind::Lp: return "lp";
    case AggKind::Poly: return "poly";
    case AggKind::Softmax: return "softmax";
  }
  return "?";
}

bool agg_has_param(AggKind k) {
  return k == AggKind::Lp || k == AggKind::Poly || k == AggKind::Softmax;
}

double softplus_value(double x) {
  return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double inverse_softplus(double y) {
  if (y < 0.0) fail("inverse_softplus: negative target");
  // softplus(-745) underflows to 0 exactly; use it for y at the endpoint.
  if (y < 1e-300) return -745.0;
  return y > 30.0 ? y : std::log(std::expm1(y));
}

double reparam(const AggConfig& cfg) {
  switch (cfg.kind) {
    case AggKind::Lp: return 1.0 + softplus_value(cfg.theta);
    case AggKind::Poly:
    case AggKind::Softmax: return softplus_value(cfg.theta);
    default: fail("reparam: aggregator has no parameter");
  }
}

double theta_for_effective(AggKind kind, double effective) {
  switch (kind) {
    case AggKind::Lp:
      if (effective < 1.0) fail("theta_for_effective: p < 1");
      return inverse_softplus(effective - 1.0);
    case AggKind::Poly:
    case AggKind::Softmax:
      return inverse_softplus(effective);
    default: fail("theta_for_effective: aggregator has no parameter");
  }
}

ValueId reparam(Tape& t, AggKind kind, ValueId theta) {
  switch (kind) {
    case AggKind::Lp: return t.add_scalar(t.softplus(theta), 1.0);
    case AggKind::Poly:
    case AggKind::Softmax: return t.softplus(theta);
    default: fail("reparam: aggregator has no parameter");
  }
}

ShiftValue global_min(const Tensor& h) {
  if (h.size() == 0) fail("global_min: empty tensor");
  return ShiftValue{*std::min_element(h.data.begin(), h.data.end())};
}

// ---------------------------------------------------------------------------

ValueId agg_sum(Tape& t, const Graph& g, ValueId h, ValueId w_edges) {
  const Tensor& H = t.value(h);
  check_h(g, H, "agg_sum");
  const std::vector<double>& w = edge_weight_values(t, g, w_edges, "agg_sum");
  const auto& off = g.row_offsets();
  const auto& col = g.col_indices();
  const int n = g.num_nodes(), d = H.cols;
  Tensor out(n, d);
  for (int v = 0; v < n; ++v)
    for (int e = off[v]; e < off[v + 1]; ++e) {
      const double we = w[e];
      const int u = col[e];
      for (int k = 0; k < d; ++k) out.at(v, k) += we * H.at(u, k);
    }
  std::vector<ValueId> inputs = {h};
  if (w_edges != kNoValue) inputs.push_back(w_edges);
  return t.record(std::move(out), std::move(inputs),
                  [h, w_edges, gp = &g](Tape& tt, ValueId out_id) {
                    const Tensor& gout = tt.grad_of(out_id);
                    const Tensor& H = tt.value(h);
                    const std::vector<double>& w =
                        edge_weight_values(tt, *gp, w_edges, "agg_sum");
                    const auto& off = gp->row_offsets();
                    const auto& col = gp->col_indices();
                    const int n = gp->num_nodes(), d = H.cols;
                    if (tt.requires_grad(h)) {
                      Tensor& gh = tt.grad_acc(h);
                      for (int v = 0; v < n; ++v)
                        for (int e = off[v]; e < off[v + 1]; ++e)
                          for (int k = 0; k < d; ++k)
                            gh.at(col[e], k) += w[e] * gout.at(v, k);
                    }
                    if (w_edges != kNoValue && tt.requires_grad(w_edges)) {
                      Tensor& gw = tt.grad_acc(w_edges);
                      for (int v = 0; v < n; ++v)
                        for (int e = off[v]; e < off[v + 1]; ++e) {
                          double acc = 0.0;
                          for (int k = 0; k < d; ++k) acc += H.at(col[e], k) * gout.at(v, k);
                          gw.at(e, 0) += acc;
                        }
                    }
                  });
}

ValueId agg_max(Tape& t, const Graph& g, ValueId h) {
  const Tensor& H = t.value(h);
  check_h(g, H, "agg_max");
  const auto& off = g.row_offsets();
  const auto& col = g.col_indices();
  const int n = g.num_nodes(), d = H.cols;
  Tensor out(n, d);
  std::vector<int> argmax(static_cast<std::size_t>(n) * d);
  for (int v = 0; v < n; ++v) {
    if (off[v] == off[v + 1])
      fail("agg_max: node " + std::to_string(v) + " has an empty neighborhood");
    for (int k = 0; k < d; ++k) {
      int best = col[off[v]];
      double bv = H.at(best, k);
      for (int e = off[v] + 1; e < off[v + 1]; ++e)
        if (H.at(col[e], k) > bv) {  // ties keep the lowest edge index
          bv = H.at(col[e], k);
          best = col[e];
        }
      out.at(v, k) = bv;
      argmax[static_cast<std::size_t>(v) * d + k] = best;
    }
  }
  return t.record(std::move(out), {h}, [h, am = std::move(argmax)](Tape& tt, ValueId out_id) {
    const Tensor& gout = tt.grad_of(out_id);
    Tensor& gh = tt.grad_acc(h);
    for (int v = 0; v < gout.rows; ++v)
      for (int k = 0; k < gout.cols; ++k)
        gh.at(am[static_cast<std::size_t>(v) * gout.cols + k], k) += gout.at(v, k);
  });
}

ValueId agg_lp(Tape& t, const Graph& g, ValueId h, ValueId p, ShiftValue mu, ValueId w_edges) {
  const Tensor& H = t.value(h);
  check_h(g, H, "agg_lp");
  const double pv = scalar_param(t, p, "agg_lp");
  if (pv < 1.0) fail("agg_lp: p = " + std::to_string(pv) + " < 1");
  const std::vector<double>& w = edge_weight_values(t, g, w_edges, "agg_lp");
  const auto& off = g.row_offsets();
  const auto& col = g.col_indices();
  const int n = g.num_nodes(), d = H.cols;
  const double mu_m = mu.mu_m;

  // Per (node, column): lnS = LSE_e(ln w_e + p ln y_e), out = exp(lnS/p) + mu.
  Tensor out(n, d);
  Tensor ln_s(n, d);
  for (int v = 0; v < n; ++v) {
    const int lo = off[v], hi = off[v + 1];
    for (int k = 0; k < d; ++k) {
      if (lo == hi) {
        ln_s.at(v, k) = -std::numeric_limits<double>::infinity();
        out.at(v, k) = mu_m;
        continue;
      }
      double m = -std::numeric_limits<double>::infinity();
      for (int e = lo; e < hi; ++e) {
        const double y = std::max(H.at(col[e], k) - mu_m, kShiftFloor);
        m = std::max(m, std::log(w[e]) + pv * std::log(y));
      }
      double z = 0.0;
      for (int e = lo; e < hi; ++e) {
        const double y = std::max(H.at(col[e], k) - mu_m, kShiftFloor);
        z += std::exp(std::log(w[e]) + pv * std::log(y) - m);
      }
      const double lns = m + std::log(z);
      ln_s.at(v, k) = lns;
      out.at(v, k) = std::exp(lns / pv) + mu_m;
    }
  }
  std::vector<ValueId> inputs = {h, p};
  if (w_edges != kNoValue) inputs.push_back(w_edges);
  return t.record(
      std::move(out), std::move(inputs),
      [h, p, w_edges, mu_m, pv, gp = &g, lns = std::move(ln_s)](Tape& tt, ValueId out_id) {
        const Tensor& gout = tt.grad_of(out_id);
        const Tensor& H = tt.value(h);
        const std::vector<double>& w = edge_weight_values(tt, *gp, w_edges, "agg_lp");
        const auto& off = gp->row_offsets();
        const auto& col = gp->col_indices();
        const int n = gp->num_nodes(), d = H.cols;
        const bool need_h = tt.requires_grad(h);
        const bool need_p = tt.requires_grad(p);
        const bool need_w = w_edges != kNoValue && tt.requires_grad(w_edges);
        if (!need_h && !need_p && !need_w) return;
        Tensor* gh = need_h ? &tt.grad_acc(h) : nullptr;
        Tensor* gw = need_w ? &tt.grad_acc(w_edges) : nullptr;
        double dp_acc = 0.0;
        const double ln_p = std::log(pv);
        for (int v = 0; v < n; ++v) {
          const int lo = off[v], hi = off[v + 1];
          for (int k = 0; k < d; ++k) {
            const double go = gout.at(v, k);
            if (go == 0.0 || lo == hi) continue;
            const double s = lns.at(v, k);
            double r_dot_lny = 0.0;
            for (int e = lo; e < hi; ++e) {
              const double shifted = H.at(col[e], k) - mu_m;
              const double y = std::max(shifted, kShiftFloor);
              const double ln_y = std::log(y);
              const double ln_w = std::log(w[e]);
              if (need_h && shifted > kShiftFloor)
                // d out / d h = exp( (1-p)/p lnS + ln w + (p-1) ln y )
                gh->at(col[e], k) +=
                    go * std::exp((1.0 - pv) / pv * s + ln_w + (pv - 1.0) * ln_y);
              if (need_w)
                // d out / d w = exp( (1-p)/p lnS + p ln y - ln p )
                gw->at(e, 0) += go * std::exp((1.0 - pv) / pv * s + pv * ln_y - ln_p);
              if (need_p) r_dot_lny += std::exp(ln_w + pv * ln_y - s) * ln_y;
            }
            if (need_p) {
              const double a = std::exp(s / pv);
              dp_acc += go * a * (r_dot_lny - s / pv) / pv;
            }
          }
        }
        if (need_p) tt.grad_acc(p).data[0] += dp_acc;
      });
}

ValueId agg_poly(Tape& t, const Graph& g, ValueId h, ValueId alpha, ShiftValue mu,
                 ValueId w_edges) {
  const Tensor& H = t.value(h);
  check_h(g, H, "agg_poly");
  const double av = scalar_param(t, alpha, "agg_poly");
  if (av < 0.0) fail("agg_poly: alpha = " + std::to_string(av) + " < 0");
  const std::vector<double>& w = edge_weight_values(t, g, w_edges, "agg_poly");
  const auto& off = g.row_offsets();
  const auto& col = g.col_indices();
  const int n = g.num_nodes(), d = H.cols;
  const double mu_m = mu.mu_m;

  // lnD = LSE(ln w + a ln y); lnN = LSE(ln w + (a+1) ln y); out = exp(lnN-lnD) + mu.
  // With a == 0 the ln y term vanishes from lnD exactly, realizing 0^0 = 1.
  Tensor out(n, d);
  Tensor ln_den(n, d);
  for (int v = 0; v < n; ++v) {
    const int lo = off[v], hi = off[v + 1];
    for (int k = 0; k < d; ++k) {
      if (lo == hi) {
        ln_den.at(v, k) = -std::numeric_limits<double>::infinity();
        out.at(v, k) = mu_m;
        continue;
      }
      double mn = -std::numeric_limits<double>::infinity();
      double md = mn;
      for (int e = lo; e < hi; ++e) {
        const double y = std::max(H.at(col[e], k) - mu_m, kShiftFloor);
        const double base = std::log(w[e]) + av * std::log(y);
        md = std::max(md, base);
        mn = std::max(mn, base + std::log(y));
      }
      double zn = 0.0, zd = 0.0;
      for (int e = lo; e < hi; ++e) {
        const double y = std::max(H.at(col[e], k) - mu_m, kShiftFloor);
        const double base = std::log(w[e]) + av * std::log(y);
        zd += std::exp(base - md);
        zn += std::exp(base + std::log(y) - mn);
      }
      const double lnd = md + std::log(zd);
      const double lnn = mn + std::log(zn);
      ln_den.at(v, k) = lnd;
      out.at(v, k) = std::exp(lnn - lnd) + mu_m;
    }
  }
  Tensor out_copy = out;  // backward needs the weighted power mean m = out - mu
  std::vector<ValueId> inputs = {h, alpha};
  if (w_edges != kNoValue) inputs.push_back(w_edges);
  return t.record(
      std::move(out), std::move(inputs),
      [h, alpha, w_edges, mu_m, av, gp = &g, lnd_t = std::move(ln_den),
       outs = std::move(out_copy)](Tape& tt, ValueId out_id) {
        const Tensor& gout = tt.grad_of(out_id);
        const Tensor& H = tt.value(h);
        const std::vector<double>& w = edge_weight_values(tt, *gp, w_edges, "agg_poly");
        const auto& off = gp->row_offsets();
        const auto& col = gp->col_indices();
        const int n = gp->num_nodes(), d = H.cols;
        const bool need_h = tt.requires_grad(h);
        const bool need_a = tt.requires_grad(alpha);
        const bool need_w = w_edges != kNoValue && tt.requires_grad(w_edges);
        if (!need_h && !need_a && !need_w) return;
        Tensor* gh = need_h ? &tt.grad_acc(h) : nullptr;
        Tensor* gw = need_w ? &tt.grad_acc(w_edges) : nullptr;
        double da_acc = 0.0;
        for (int v = 0; v < n; ++v) {
          const int lo = off[v], hi = off[v + 1];
          for (int k = 0; k < d; ++k) {
            const double go = gout.at(v, k);
            if (go == 0.0 || lo == hi) continue;
            const double lnd = lnd_t.at(v, k);
            const double m = outs.at(v, k) - mu_m;
            double r_y_lny = 0.0, r_lny = 0.0;
            for (int e = lo; e < hi; ++e) {
              const double shifted = H.at(col[e], k) - mu_m;
              const double y = std::max(shifted, kShiftFloor);
              const double ln_y = std::log(y);
              const double r = std::exp(std::log(w[e]) + av * ln_y - lnd);
              if (need_h && shifted > kShiftFloor)
                gh->at(col[e], k) += go * r * ((av + 1.0) - av * m / y);
              if (need_w) gw->at(e, 0) += go * (y - m) * r / w[e];
              if (need_a) {
                r_y_lny += r * y * ln_y;
                r_lny += r * ln_y;
              }
            }
            if (need_a) da_acc += go * (r_y_lny - m * r_lny);
          }
        }
        if (need_a) tt.grad_acc(alpha).data[0] += da_acc;
      });
}

ValueId agg_softmax(Tape& t, const Graph& g, ValueId h, ValueId gamma, ValueId w_edges) {
  const Tensor& H = t.value(h);
  check_h(g, H, "agg_softmax");
  const double gv = scalar_param(t, gamma, "agg_softmax");
  if (gv < 0.0) fail("agg_softmax: gamma = " + std::to_string(gv) + " < 0");
  const std::vector<double>& w = edge_weight_values(t, g, w_edges, "agg_softmax");
  const auto& off = g.row_offsets();
  const auto& col = g.col_indices();
  const int n = g.num_nodes(), d = H.cols;

  // out[v,k] = sum_e w_e h_e s_e, s = softmax_e(gamma h_e) per column; the
  // normalizer is unweighted over the neighborhood.
  Tensor out(n, d);
  for (int v = 0; v < n; ++v) {
    const int lo = off[v], hi = off[v + 1];
    for (int k = 0; k < d; ++k) {
      if (lo == hi) continue;
      double m = -std::numeric_limits<double>::infinity();
      for (int e = lo; e < hi; ++e) m = std::max(m, H.at(col[e], k));
      double z = 0.0;
      for (int e = lo; e < hi; ++e) z += std::exp(gv * (H.at(col[e], k) - m));
      double acc = 0.0;
      for (int e = lo; e < hi; ++e) {
        const double he = H.at(col[e], k);
        acc += w[e] * he * std::exp(gv * (he - m)) / z;
      }
      out.at(v, k) = acc;
    }
  }
  Tensor out_copy = out;
  std::vector<ValueId> inputs = {h, gamma};
  if (w_edges != kNoValue) inputs.push_back(w_edges);
  return t.record(
      std::move(out), std::move(inputs),
      [h, gamma, w_edges, gv, gp = &g, outs = std::move(out_copy)](Tape& tt, ValueId out_id) {
        const Tensor& gout = tt.grad_of(out_id);
        const Tensor& H = tt.value(h);
        const std::vector<double>& w = edge_weight_values(tt, *gp, w_edges, "agg_softmax");
        const auto& off = gp->row_offsets();
        const auto& col = gp->col_indices();
        const int n = gp->num_nodes(), d = H.cols;
        const bool need_h = tt.requires_grad(h);
        const bool need_g = tt.requires_grad(gamma);
        const bool need_w = w_edges != kNoValue && tt.requires_grad(w_edges);
        if (!need_h && !need_g && !need_w) return;
        Tensor* gh = need_h ? &tt.grad_acc(h) : nullptr;
        Tensor* gw = need_w ? &tt.grad_acc(w_edges) : nullptr;
        double dg_acc = 0.0;
        for (int v = 0; v < n; ++v) {
          const int lo = off[v], hi = off[v + 1];
          for (int k = 0; k < d; ++k) {
            const double go = gout.at(v, k);
            if (go == 0.0 || lo == hi) continue;
            double m = -std::numeric_limits<double>::infinity();
            for (int e = lo; e < hi; ++e) m = std::max(m, H.at(col[e], k));
            double z = 0.0;
            for (int e = lo; e < hi; ++e) z += std::exp(gv * (H.at(col[e], k) - m));
            const double ovk = outs.at(v, k);
            double s_h = 0.0, qsh = 0.0;  // sum s*h and sum w*h^2*s
            for (int e = lo; e < hi; ++e) {
              const double he = H.at(col[e], k);
              const double s = std::exp(gv * (he - m)) / z;
              if (need_h) gh->at(col[e], k) += go * s * (w[e] + gv * (w[e] * he - ovk));
              if (need_w) gw->at(e, 0) += go * he * s;
              if (need_g) {
                s_h += s * he;
                qsh += w[e] * he * he * s;
              }
            }
            if (need_g) dg_acc += go * (qsh - ovk * s_h);
          }
        }
        if (need_g) tt.grad_acc(gamma).data[0] += dg_acc;
      });
}

Tensor agg_eval(const Graph& g, const Tensor& h, AggKind kind, double param) {
  Tape t;
  ValueId hid = t.leaf(h);
  switch (kind) {
    case AggKind::Sum: return t.value(agg_sum(t, g, hid));
    case AggKind::Max: return t.value(agg_max(t, g, hid));
    case AggKind::Lp:
      return t.value(agg_lp(t, g, hid, t.leaf(Tensor::scalar(param)), global_min(h)));
    case AggKind::Poly:
      return t.value(agg_poly(t, g, hid, t.leaf(Tensor::scalar(param)), global_min(h)));
    case AggKind::Softmax:
      return t.value(agg_softmax(t, g, hid, t.leaf(Tensor::scalar(param))));
  }
  fail("agg_eval: bad kind");
}

}  // namespace nagg
