#include "nagg/models.hpp"

#include <cmath>
#include <stdexcept>

namespace nagg {

namespace {

Tensor glorot(int rows, int cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / (rows + cols));
  std::uniform_real_distribution<double> unif(-bound, bound);
  Tensor t(rows, cols);
  for (double& v : t.data) v = unif(rng);
  return t;
}

ValueId apply_activation(Tape& t, ValueId x, Activation act) {
  switch (act) {
    case Activation::None: return x;
    case Activation::Relu: return t.relu(x);
    case Activation::RowSoftmax: return t.row_softmax(x);
  }
  throw std::invalid_argument("unknown activation");
}

// Aggregation for one head; w_edges overrides graph weights when attention
// is in play. mu is recomputed from the live layer input.
ValueId dispatch_agg(Tape& t, const Graph& g, ValueId h, const LayerSpec& spec, ValueId theta,
                     ValueId w_edges) {
  switch (spec.agg.kind) {
    case AggKind::Sum: return agg_sum(t, g, h, w_edges);
    case AggKind::Max: return agg_max(t, g, h);
    case AggKind::Lp:
      return agg_lp(t, g, h, reparam(t, AggKind::Lp, theta), global_min(t.value(h)), w_edges);
    case AggKind::Poly:
      return agg_poly(t, g, h, reparam(t, AggKind::Poly, theta), global_min(t.value(h)), w_edges);
    case AggKind::Softmax:
      return agg_softmax(t, g, h, reparam(t, AggKind::Softmax, theta), w_edges);
  }
  throw std::invalid_argument("unknown aggregator kind");
}

std::vector<int> edge_destinations(const Graph& g) {
  std::vector<int> dst(g.num_edges());
  for (int v = 0; v < g.num_nodes(); ++v)
    for (int e = g.row_offsets()[v]; e < g.row_offsets()[v + 1]; ++e) dst[e] = v;
  return dst;
}

}  // namespace

PreparedGraphs prepare_graphs(const Graph& binary_with_loops) {
  return PreparedGraphs{binary_with_loops, binary_with_loops.sym_normalize(),
                        binary_with_loops.row_normalize()};
}

const Graph& graph_for(const PreparedGraphs& gs, WeightScheme scheme) {
  switch (scheme) {
    case WeightScheme::Binary: return gs.binary;
    case WeightScheme::SymNorm: return gs.symnorm;
    case WeightScheme::RowNorm: return gs.rownorm;
    case WeightScheme::External: return gs.binary;  // topology only; weights are learned
  }
  throw std::invalid_argument("unknown weighting scheme");
}

ModelParams init_params(const std::vector<LayerSpec>& specs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelParams params;
  params.seed = seed;
  for (const LayerSpec& spec : specs) {
    if (spec.in_dim <= 0 || spec.out_dim <= 0)
      throw std::invalid_argument("init_params: non-positive layer dimension");
    LayerParams lp;
    const int heads = spec.attention ? spec.attention->heads : 1;
    for (int head = 0; head < heads; ++head) lp.w.push_back(glorot(spec.in_dim, spec.out_dim, rng));
    if (spec.attention) {
      // Bound matches the concatenated 2*out_dim scoring vector.
      const double bound = std::sqrt(6.0 / (2 * spec.out_dim + 1));
      std::uniform_real_distribution<double> unif(-bound, bound);
      for (int head = 0; head < 2 * heads; ++head) {
        Tensor a(spec.out_dim, 1);
        for (double& v : a.data) v = unif(rng);
        lp.a.push_back(std::move(a));
      }
    }
    lp.theta = spec.agg.theta;
    params.layers.push_back(std::move(lp));
  }
  return params;
}

ValueId gat_attention_weights(Tape& t, const Graph& g, ValueId hw, ValueId a_dst, ValueId a_src,
                              double leaky_slope) {
  ValueId sd = t.matmul(hw, a_dst);  // n x 1 destination scores
  ValueId ss = t.matmul(hw, a_src);  // n x 1 source scores
  ValueId per_edge = t.add(t.gather_rows(sd, edge_destinations(g)),
                           t.gather_rows(ss, g.col_indices()));
  ValueId scored = t.leaky_relu(per_edge, leaky_slope);
  return t.segment_softmax(scored, g.row_offsets(), 1.0);
}

ValueId gcn_layer_forward(Tape& t, const PreparedGraphs& gs, ValueId h, const LayerSpec& spec,
                          const LayerHandles& handles, bool train_mode, std::mt19937_64* rng) {
  const Graph& g = graph_for(gs, spec.weighting);
  ValueId hd = h;
  if (train_mode && spec.dropout_rate > 0.0) {
    if (!rng) throw std::invalid_argument("gcn_layer_forward: dropout needs an rng");
    hd = t.dropout(h, spec.dropout_rate, *rng);
  }
  const int heads = spec.attention ? spec.attention->heads : 1;
  std::vector<ValueId> head_outputs;
  head_outputs.reserve(heads);
  for (int head = 0; head < heads; ++head) {
    ValueId w = handles.w[head];
    if (spec.agg.kind == AggKind::Max) {
      // Transform-then-max: max over N_v of activation(h_u W).
      ValueId z = apply_activation(t, t.matmul(hd, w), spec.activation);
      head_outputs.push_back(agg_max(t, g, z));
      continue;
    }
    ValueId w_edges = kNoValue;
    if (spec.weighting == WeightScheme::External) {
      if (!spec.attention) throw std::invalid_argument("external weighting requires attention");
      ValueId hw = t.matmul(hd, w);
      w_edges = gat_attention_weights(t, g, hw, handles.a[2 * head], handles.a[2 * head + 1],
                                      spec.attention->leaky_slope);
    }
    ValueId agg = dispatch_agg(t, g, hd, spec, handles.theta, w_edges);
    head_outputs.push_back(apply_activation(t, t.matmul(agg, w), spec.activation));
  }
  if (heads == 1) return head_outputs.front();
  if (spec.attention && !spec.attention->concat) {
    ValueId acc = head_outputs.front();
    for (int head = 1; head < heads; ++head) acc = t.add(acc, head_outputs[head]);
    return t.scalar_mul(acc, 1.0 / heads);
  }
  return t.concat_cols(head_outputs);
}

ModelHandles model_forward(Tape& t, const PreparedGraphs& gs, ValueId h,
                           const std::vector<LayerSpec>& specs, const ModelParams& params,
                           bool train_mode, std::mt19937_64* rng, bool share_agg_theta) {
  if (specs.size() != params.layers.size())
    throw std::invalid_argument("model_forward: " + std::to_string(specs.size()) + " specs for " +
                                std::to_string(params.layers.size()) + " parameter layers");
  ModelHandles handles;
  ValueId shared_theta = kNoValue;
  ValueId x = h;
  for (std::size_t l = 0; l < specs.size(); ++l) {
    const LayerSpec& spec = specs[l];
    const LayerParams& lp = params.layers[l];
    LayerHandles lh;
    for (const Tensor& w : lp.w) lh.w.push_back(t.leaf(w, true));
    for (const Tensor& a : lp.a) lh.a.push_back(t.leaf(a, true));
    if (agg_has_param(spec.agg.kind)) {
      if (share_agg_theta && shared_theta != kNoValue) {
        lh.theta = shared_theta;
      } else {
        lh.theta = t.leaf(Tensor::scalar(lp.theta), spec.agg.learnable);
        if (shared_theta == kNoValue) shared_theta = lh.theta;
      }
    }
    x = gcn_layer_forward(t, gs, x, spec, lh, train_mode, rng);
    handles.layers.push_back(std::move(lh));
  }
  handles.logits = x;
  return handles;
}

}  // namespace nagg
