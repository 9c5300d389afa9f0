#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nagg/config.hpp"

namespace {

// Shared --config/--out/--seeds/--seed-list/--set plumbing.
struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  long seeds = 0;
  std::string seed_list;
  std::vector<std::string> sets;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key = value configuration file");
    cmd->add_option("--out", out_dir, "output directory (default: runs)");
    cmd->add_option("--seeds", seeds, "run seeds 0..N-1");
    cmd->add_option("--seed-list", seed_list, "comma-separated explicit seeds");
    cmd->add_option("--set", sets, "override, e.g. --set aggregator=lp")->take_all();
  }

  std::vector<std::string> overrides() const {
    std::vector<std::string> ov = sets;
    if (!out_dir.empty()) ov.push_back("out=" + out_dir);
    if (seeds > 0) ov.push_back("seeds=" + std::to_string(seeds));
    if (!seed_list.empty()) ov.push_back("seed_list=" + seed_list);
    return ov;
  }

  nagg::RunConfig parse() const {
    std::optional<std::string> path;
    if (!config_path.empty()) path = config_path;
    return nagg::parse_run_config(path, overrides());
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nagg: graph neural networks with nonlinear neighborhood aggregators"};
  app.require_subcommand(1);

  CommonArgs train_args, sweep_args, synth_args;
  std::vector<double> sweep_values;
  std::string synth_out = "data/sbm-std";

  CLI::App* train_cmd = app.add_subcommand("train", "train a model over one or more seeds");
  train_args.attach(train_cmd);

  CLI::App* sweep_cmd =
      app.add_subcommand("sweep", "train at fixed aggregator parameter values");
  sweep_args.attach(sweep_cmd);
  sweep_cmd->add_option("--values", sweep_values, "effective parameter grid, e.g. 1 2 4 8")
      ->required()
      ->expected(-1);

  CLI::App* synth_cmd = app.add_subcommand("synth", "materialize an SBM dataset directory");
  synth_args.attach(synth_cmd);
  synth_cmd->add_option("--dir", synth_out, "destination directory");

  nagg::PropcheckOptions prop_opts;
  CLI::App* prop_cmd =
      app.add_subcommand("propcheck", "run the aggregator property suite (limits, monotonicity, "
                                      "equivariance, bounds)");
  prop_cmd->add_option("--seed", prop_opts.master_seed, "master seed");
  prop_cmd->add_option("--trials", prop_opts.trials, "trials per property");
  prop_cmd->add_option("--limit-graphs", prop_opts.limit_graphs, "graphs per limit suite");
  prop_cmd->add_option("--tol-exact", prop_opts.tol_exact, "specialization tolerance");
  prop_cmd->add_option("--tol-limit-lp", prop_opts.tol_limit_lp, "lp limit tolerance");
  prop_cmd->add_option("--tol-limit-poly", prop_opts.tol_limit_poly, "poly limit tolerance");
  prop_cmd->add_option("--tol-limit-softmax", prop_opts.tol_limit_softmax,
                       "softmax limit tolerance");
  prop_cmd->add_option("--tol-translation", prop_opts.tol_translation, "translation tolerance");

  nagg::GradcheckOptions grad_opts;
  CLI::App* grad_cmd = app.add_subcommand(
      "gradcheck", "verify analytic gradients against central finite differences");
  grad_cmd->add_option("--seed", grad_opts.seed, "master seed");
  grad_cmd->add_option("--step", grad_opts.step, "finite-difference step");
  grad_cmd->add_option("--tol-ops", grad_opts.tol_ops, "per-op tolerance");
  grad_cmd->add_option("--tol-model", grad_opts.tol_model, "full-model tolerance");
  grad_cmd->add_flag("--inject-fault", grad_opts.inject_fault,
                     "add a deliberately wrong backward rule (must be reported as FAIL)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return nagg::run_train(train_args.parse(), std::cout);
    if (sweep_cmd->parsed()) return nagg::run_sweep(sweep_args.parse(), sweep_values, std::cout);
    if (synth_cmd->parsed()) return nagg::run_synth(synth_args.parse(), synth_out, std::cout);
    if (prop_cmd->parsed()) return nagg::run_propcheck_cmd(prop_opts, std::cout);
    if (grad_cmd->parsed()) return nagg::run_gradcheck_cmd(grad_opts, std::cout);
  } catch (const nagg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
