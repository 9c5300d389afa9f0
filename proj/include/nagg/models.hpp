#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "nagg/aggregators.hpp"
#include "nagg/graph.hpp"
#include "nagg/tape.hpp"

namespace nagg {

/// Default raw theta, ln(e-1): starts the aggregators mid-interpolation
/// (p = 2, alpha = gamma = 1).
inline constexpr double kDefaultAggTheta = 0.5413248546129181;

enum class Activation { None, Relu, RowSoftmax };

struct AttentionSpec {
  int heads = 1;
  double leaky_slope = 0.2;
  bool concat = true;  // concatenate head outputs; false = average
};

struct LayerSpec {
  int in_dim = 0;
  int out_dim = 0;
  AggConfig agg;
  WeightScheme weighting = WeightScheme::SymNorm;
  Activation activation = Activation::None;
  double dropout_rate = 0.0;
  std::optional<AttentionSpec> attention;  // present iff weighting == External
};

/// Trainable state of one layer. For H attention heads, `w` holds one weight
/// matrix per head and `a` holds two vectors per head (destination score
/// vector at 2*head, source score vector at 2*head+1, each out_dim x 1).
struct LayerParams {
  std::vector<Tensor> w;
  std::vector<Tensor> a;
  double theta = kDefaultAggTheta;
};

struct ModelParams {
  std::vector<LayerParams> layers;
  std::uint64_t seed = 0;
};

/// The three static weightings derived once from a Binary self-looped graph.
/// Attention models reuse the binary topology with learned edge weights.
struct PreparedGraphs {
  Graph binary;
  Graph symnorm;
  Graph rownorm;
};

PreparedGraphs prepare_graphs(const Graph& binary_with_loops);
const Graph& graph_for(const PreparedGraphs& gs, WeightScheme scheme);

/// Glorot-uniform weights and attention vectors, theta from each spec's
/// AggConfig. Deterministic in `seed`.
ModelParams init_params(const std::vector<LayerSpec>& specs, std::uint64_t seed);

/// Tape handles to the per-layer leaves created by model_forward, so the
/// trainer can read gradients back.
struct LayerHandles {
  std::vector<ValueId> w;
  std::vector<ValueId> a;
  ValueId theta = kNoValue;
};

struct ModelHandles {
  ValueId logits = kNoValue;
  std::vector<LayerHandles> layers;
};

/// Single-head attention coefficients for edges into each node:
/// softmax over N_v of leaky_relu(a_dst . (hW)_v + a_src . (hW)_u).
/// Returns an E x 1 value whose per-destination rows sum to 1.
ValueId gat_attention_weights(Tape& t, const Graph& g, ValueId hw, ValueId a_dst, ValueId a_src,
                              double leaky_slope);

/// One propagation layer: dropout on the input, neighborhood aggregation
/// dispatched on spec.agg.kind, dense transform, activation. Max aggregation
/// uses the transform-then-max form (max over N_v of activation(h_u W)).
ValueId gcn_layer_forward(Tape& t, const PreparedGraphs& gs, ValueId h, const LayerSpec& spec,
                          const LayerHandles& handles, bool train_mode, std::mt19937_64* rng);

/// Builds the whole classifier on the tape, creating trainable leaves for all
/// parameters. `rng` supplies dropout masks and may be null when
/// train_mode = false. With share_agg_theta, layers after the first reuse the
/// first parameterized layer's theta leaf.
ModelHandles model_forward(Tape& t, const PreparedGraphs& gs, ValueId h,
                           const std::vector<LayerSpec>& specs, const ModelParams& params,
                           bool train_mode, std::mt19937_64* rng, bool share_agg_theta = false);

}  // namespace nagg
