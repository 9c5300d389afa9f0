#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nagg/graph.hpp"
#include "nagg/tensor.hpp"

namespace nagg {

struct DatasetBundle {
  Graph graph;  // Binary, symmetrized, self-loops added
  Tensor features;
  std::vector<int> labels;
  int num_classes = 0;
  std::string name;
  int raw_edge_count = 0;  // directed pairs as ingested, before symmetrization
};

/// Stochastic-block-model benchmark description. Features are per-class
/// orthogonal mean shifts plus Gaussian noise.
struct SbmSpec {
  int blocks = 4;
  int nodes_per_block = 100;
  double p_in = 0.05;
  double p_out = 0.005;
  int feature_dim = 16;
  double feature_shift = 1.0;
  double noise_sigma = 1.0;
};

struct SplitMask {
  std::vector<int> train_idx;
  std::vector<int> val_idx;
  std::vector<int> test_idx;

  void validate(int num_nodes) const;  // disjoint, in range, train nonempty
};

/// Reads edges.tsv / features.csv / labels.tsv from `dir`. Labels must be a
/// contiguous 0-based class range; every node needs exactly one label.
DatasetBundle load_dataset(const std::string& dir);

DatasetBundle generate_sbm(const SbmSpec& spec, std::uint64_t seed);

/// per_class training nodes sampled uniformly per class; val/test sampled
/// uniformly from the remainder, disjoint. Deterministic in seed.
SplitMask make_splits(const std::vector<int>& labels, int per_class, int val_size, int test_size,
                      std::uint64_t seed);

/// Writes edges.tsv (one undirected pair per line, self-loops omitted),
/// features.csv and labels.tsv; load_dataset inverts it.
void export_dataset(const DatasetBundle& bundle, const std::string& dir);

void export_embeddings(const Tensor& h, const std::string& path);

void write_splits_json(const SplitMask& mask, const std::string& path);
SplitMask read_splits_json(const std::string& path);
bool splits_json_exists(const std::string& dir);

}  // namespace nagg
