#pragma once

// Independent reference implementations used to check the CSR kernels:
// dense matrix normalization, per-node brute-force aggregation with naive
// powers (no log-space), and a dense attention softmax. Deliberately slow
// and simple; they must not share code with the library paths they verify.

#include <algorithm>
#include <cmath>
#include <vector>

#include "nagg/graph.hpp"
#include "nagg/tensor.hpp"

namespace oracle {

using nagg::Graph;
using nagg::Tensor;

inline std::vector<std::vector<double>> to_dense(const Graph& g) {
  std::vector<std::vector<double>> a(g.num_nodes(), std::vector<double>(g.num_nodes(), 0.0));
  for (int v = 0; v < g.num_nodes(); ++v)
    for (int e = g.row_offsets()[v]; e < g.row_offsets()[v + 1]; ++e)
      a[v][g.col_indices()[e]] = g.edge_weights()[e];
  return a;
}

// D^{-1/2} A D^{-1/2} on the dense adjacency (degrees = row sums).
inline std::vector<std::vector<double>> dense_sym_normalize(
    const std::vector<std::vector<double>>& a) {
  const int n = static_cast<int>(a.size());
  std::vector<double> deg(n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) deg[i] += a[i][j];
  std::vector<std::vector<double>> out(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (a[i][j] != 0.0) out[i][j] = a[i][j] / std::sqrt(deg[i] * deg[j]);
  return out;
}

inline Tensor agg_sum(const Graph& g, const Tensor& h) {
  const auto a = to_dense(g);
  Tensor out(g.num_nodes(), h.cols);
  for (int v = 0; v < g.num_nodes(); ++v)
    for (int u = 0; u < g.num_nodes(); ++u)
      for (int k = 0; k < h.cols; ++k) out.at(v, k) += a[v][u] * h.at(u, k);
  return out;
}

inline Tensor agg_max(const Graph& g, const Tensor& h) {
  const auto a = to_dense(g);
  Tensor out(g.num_nodes(), h.cols);
  for (int v = 0; v < g.num_nodes(); ++v)
    for (int k = 0; k < h.cols; ++k) {
      double best = -1e300;
      for (int u = 0; u < g.num_nodes(); ++u)
        if (a[v][u] != 0.0) best = std::max(best, h.at(u, k));
      out.at(v, k) = best;
    }
  return out;
}

// Naive shifted p-norm: (sum w (h-mu)^p)^(1/p) + mu via std::pow directly.
inline Tensor agg_lp(const Graph& g, const Tensor& h, double p) {
  const auto a = to_dense(g);
  const double mu = *std::min_element(h.data.begin(), h.data.end());
  Tensor out(g.num_nodes(), h.cols);
  for (int v = 0; v < g.num_nodes(); ++v)
    for (int k = 0; k < h.cols; ++k) {
      double s = 0.0;
      for (int u = 0; u < g.num_nodes(); ++u)
        if (a[v][u] != 0.0) s += a[v][u] * std::pow(h.at(u, k) - mu, p);
      out.at(v, k) = std::pow(s, 1.0 / p) + mu;
    }
  return out;
}

// Naive power ratio with the 0^0 = 1 convention.
inline Tensor agg_poly(const Graph& g, const Tensor& h, double alpha) {
  const auto a = to_dense(g);
  const double mu = *std::min_element(h.data.begin(), h.data.end());
  auto powz = [](double base, double e) { return e == 0.0 ? 1.0 : std::pow(base, e); };
  Tensor out(g.num_nodes(), h.cols);
  for (int v = 0; v < g.num_nodes(); ++v)
    for (int k = 0; k < h.cols; ++k) {
      double num = 0.0, den = 0.0;
      for (int u = 0; u < g.num_nodes(); ++u)
        if (a[v][u] != 0.0) {
          const double y = h.at(u, k) - mu;
          num += a[v][u] * powz(y, alpha + 1.0);
          den += a[v][u] * powz(y, alpha);
        }
      out.at(v, k) = num / den + mu;
    }
  return out;
}

// sum_u w(v,u) h_u softmax_u(gamma h_u); normalizer unweighted over N_v.
inline Tensor agg_softmax(const Graph& g, const Tensor& h, double gamma) {
  const auto a = to_dense(g);
  Tensor out(g.num_nodes(), h.cols);
  for (int v = 0; v < g.num_nodes(); ++v)
    for (int k = 0; k < h.cols; ++k) {
      double m = -1e300;
      for (int u = 0; u < g.num_nodes(); ++u)
        if (a[v][u] != 0.0) m = std::max(m, h.at(u, k));
      double z = 0.0;
      for (int u = 0; u < g.num_nodes(); ++u)
        if (a[v][u] != 0.0) z += std::exp(gamma * (h.at(u, k) - m));
      double acc = 0.0;
      for (int u = 0; u < g.num_nodes(); ++u)
        if (a[v][u] != 0.0)
          acc += a[v][u] * h.at(u, k) * std::exp(gamma * (h.at(u, k) - m)) / z;
      out.at(v, k) = acc;
    }
  return out;
}

// Dense GAT attention: leaky_relu(a_dst.(hW)_v + a_src.(hW)_u), softmax over
// each row's structural neighborhood.
inline std::vector<std::vector<double>> dense_attention(const Graph& g, const Tensor& hw,
                                                        const Tensor& a_dst, const Tensor& a_src,
                                                        double slope) {
  const auto adj = to_dense(g);
  const int n = g.num_nodes();
  std::vector<double> sd(n, 0.0), ss(n, 0.0);
  for (int v = 0; v < n; ++v)
    for (int k = 0; k < hw.cols; ++k) {
      sd[v] += hw.at(v, k) * a_dst.at(k, 0);
      ss[v] += hw.at(v, k) * a_src.at(k, 0);
    }
  std::vector<std::vector<double>> alpha(n, std::vector<double>(n, 0.0));
  for (int v = 0; v < n; ++v) {
    double m = -1e300;
    for (int u = 0; u < n; ++u)
      if (adj[v][u] != 0.0) {
        double e = sd[v] + ss[u];
        if (e < 0.0) e *= slope;
        alpha[v][u] = e;
        m = std::max(m, e);
      }
    double z = 0.0;
    for (int u = 0; u < n; ++u)
      if (adj[v][u] != 0.0) z += std::exp(alpha[v][u] - m);
    for (int u = 0; u < n; ++u)
      if (adj[v][u] != 0.0) alpha[v][u] = std::exp(alpha[v][u] - m) / z;
  }
  return alpha;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
  return worst;
}

}  // namespace oracle
