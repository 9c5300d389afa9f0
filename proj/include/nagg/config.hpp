#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nagg/data_io.hpp"
#include "nagg/gradcheck.hpp"
#include "nagg/models.hpp"
#include "nagg/propcheck.hpp"
#include "nagg/trainer.hpp"

namespace nagg {

/// Rejected configuration (unknown key, bad value, cross-field violation).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Fully resolved run configuration: schema-validated defaults + config file
/// + command-line overrides (override wins).
struct RunConfig {
  std::string dataset = "sbm-std";  // preset name or dataset directory
  std::string model = "gcn";        // gcn | gat
  int hidden = 0;                   // 0 = model default (16 gcn, 8 gat per head)
  int heads = 8;
  double dropout = 0.5;
  std::string weighting;            // empty = model default
  std::string aggregator = "sum";
  double agg_theta_init = kDefaultAggTheta;
  bool agg_learnable = true;
  bool agg_share = false;

  double lr = 0.01;
  double weight_decay = 5e-4;
  int max_epochs = 500;
  int patience = 100;
  std::string optimizer = "adam";  // adam | sgd_momentum
  int eval_every = 1;

  std::vector<std::uint64_t> seeds = {0};
  std::string out_dir = "runs";
  std::string run_name;  // empty = "<dataset>-<model>-<aggregator>"
  bool export_embeddings = false;

  std::uint64_t sbm_seed = 1;
  SbmSpec sbm;
  int split_per_class = 20;
  int split_val = 100;
  int split_test = 200;

  std::map<std::string, std::string> resolved;  // every key at its final value

  std::string effective_run_name() const;
  int effective_hidden() const;
  std::string effective_weighting() const;
  TrainConfig train_config(std::uint64_t seed) const;
};

/// Parses and validates; `overrides` are "key=value" entries from --set.
/// Throws ConfigError naming the offending key/value, with a nearest-key
/// suggestion for unknown keys.
RunConfig parse_run_config(const std::optional<std::string>& config_path,
                           const std::vector<std::string>& overrides);

/// Layer stack for the configured model acting on a dataset of the given
/// dimensions (two layers, aggregator shared by config).
std::vector<LayerSpec> build_layer_specs(const RunConfig& cfg, int in_dim, int num_classes);

// Subcommand entry points. Exit codes: 0 success, 1 check failures,
// 2 invalid configuration, 3 divergence, 4 I/O failure.
int run_train(const RunConfig& cfg, std::ostream& out);
int run_sweep(const RunConfig& cfg, const std::vector<double>& values, std::ostream& out);
int run_synth(const RunConfig& cfg, const std::string& out_dir, std::ostream& out);
int run_propcheck_cmd(const PropcheckOptions& opts, std::ostream& out);
int run_gradcheck_cmd(const GradcheckOptions& opts, std::ostream& out);

}  // namespace nagg
