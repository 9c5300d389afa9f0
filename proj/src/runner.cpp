#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "nagg/config.hpp"

namespace fs = std::filesystem;

namespace nagg {

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int worker_threads(std::size_t jobs) {
  const char* env = std::getenv("NAGG_THREADS");
  long cap = 1;
  if (env) {
    try {
      cap = std::max(1L, std::stol(env));
    } catch (const std::exception&) {
      cap = 1;
    }
  }
  return static_cast<int>(std::min<long>(cap, static_cast<long>(jobs)));
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  TrainMetrics metrics;
  std::vector<EpochLog> logs;
  ModelParams best_params;
  std::exception_ptr error;
};

DatasetBundle resolve_dataset(const RunConfig& cfg) {
  if (cfg.dataset == "sbm-std" || cfg.dataset == "sbm") return generate_sbm(cfg.sbm, cfg.sbm_seed);
  return load_dataset(cfg.dataset);
}

// Trains every seed (optionally in parallel, capped by NAGG_THREADS) and
// returns outcomes in seed order. Splits come from the dataset's splits.json
// when present, otherwise sampled per seed.
std::vector<SeedOutcome> train_all_seeds(const RunConfig& cfg, const DatasetBundle& bundle,
                                         const std::vector<LayerSpec>& specs) {
  std::vector<SeedOutcome> outcomes(cfg.seeds.size());
  const bool fixed_split =
      cfg.dataset != "sbm-std" && cfg.dataset != "sbm" && splits_json_exists(cfg.dataset);
  SplitMask fixed;
  if (fixed_split) fixed = read_splits_json((fs::path(cfg.dataset) / "splits.json").string());

  auto run_one = [&](std::size_t i) {
    SeedOutcome& so = outcomes[i];
    so.seed = cfg.seeds[i];
    try {
      SplitMask split = fixed_split
                            ? fixed
                            : make_splits(bundle.labels, cfg.split_per_class, cfg.split_val,
                                          cfg.split_test, so.seed);
      TrainResult res = train(bundle, split, specs, cfg.train_config(so.seed));
      so.metrics = res.metrics;
      so.logs = std::move(res.logs);
      so.best_params = std::move(res.params);
    } catch (...) {
      so.error = std::current_exception();
    }
  };

  const int threads = worker_threads(cfg.seeds.size());
  if (threads <= 1) {
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) run_one(i);
  } else {
    for (std::size_t base = 0; base < cfg.seeds.size(); base += threads) {
      std::vector<std::thread> pool;
      for (std::size_t i = base; i < std::min(cfg.seeds.size(), base + threads); ++i)
        pool.emplace_back(run_one, i);
      for (auto& th : pool) th.join();
    }
  }
  for (const SeedOutcome& so : outcomes)
    if (so.error) std::rethrow_exception(so.error);
  return outcomes;
}

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (0 for a single seed)
  double total_wall_s = 0.0;
};

Summary summarize(const std::vector<SeedOutcome>& outcomes) {
  Summary s;
  for (const SeedOutcome& so : outcomes) {
    s.mean += so.metrics.test_acc;
    s.total_wall_s += so.metrics.wall_time_s;
  }
  s.mean /= static_cast<double>(outcomes.size());
  if (outcomes.size() > 1) {
    double acc = 0.0;
    for (const SeedOutcome& so : outcomes) {
      const double d = so.metrics.test_acc - s.mean;
      acc += d * d;
    }
    s.stddev = std::sqrt(acc / static_cast<double>(outcomes.size() - 1));
  }
  return s;
}

void write_resolved_config(const RunConfig& cfg, const fs::path& run_dir) {
  std::ofstream out(run_dir / "config.resolved");
  if (!out) throw std::runtime_error("cannot write " + (run_dir / "config.resolved").string());
  for (const auto& [k, v] : cfg.resolved) out << k << " = " << v << '\n';
}

Tensor eval_logits(const DatasetBundle& bundle, const std::vector<LayerSpec>& specs,
                   const ModelParams& params, bool share_theta) {
  PreparedGraphs gs = prepare_graphs(bundle.graph);
  Tape t;
  ValueId h = t.leaf(bundle.features);
  ModelHandles mh = model_forward(t, gs, h, specs, params, false, nullptr, share_theta);
  return t.value(mh.logits);
}

void write_seed_artifacts(const RunConfig& cfg, const DatasetBundle& bundle,
                          const std::vector<LayerSpec>& specs, const SeedOutcome& so,
                          const fs::path& run_dir) {
  const fs::path seed_dir = run_dir / std::to_string(so.seed);
  fs::create_directories(seed_dir);
  write_metrics_json(so.metrics, so.seed, (seed_dir / "metrics.json").string());
  write_loss_csv(so.logs, (seed_dir / "loss.csv").string());
  if (cfg.export_embeddings)
    export_embeddings(eval_logits(bundle, specs, so.best_params, cfg.agg_share),
                      (seed_dir / "embeddings.csv").string());
}

void write_summary_files(const std::vector<SeedOutcome>& outcomes, const Summary& s,
                         const fs::path& run_dir) {
  std::ofstream csv(run_dir / "summary.csv");
  csv << "seed,test_acc,best_epoch,wall_time_s\n";
  for (const SeedOutcome& so : outcomes)
    csv << so.seed << ',' << fmt_double(so.metrics.test_acc) << ',' << so.metrics.best_epoch
        << ',' << fmt_double(so.metrics.wall_time_s) << '\n';
  std::ofstream js(run_dir / "summary.json");
  js << "{\n  \"mean_test_acc\": " << fmt_double(s.mean)
     << ",\n  \"std_test_acc\": " << fmt_double(s.stddev) << ",\n  \"seeds\": " << outcomes.size()
     << "\n}\n";
}

std::string format_summary_line(const std::string& run_name,
                                const std::vector<SeedOutcome>& outcomes, const Summary& s) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s: test_acc %.2f%% +/- %.2f over %zu seed(s)  [%.1fs]",
                run_name.c_str(), 100.0 * s.mean, 100.0 * s.stddev, outcomes.size(),
                s.total_wall_s);
  return buf;
}

}  // namespace

int run_train(const RunConfig& cfg, std::ostream& out) {
  DatasetBundle bundle;
  try {
    bundle = resolve_dataset(cfg);
  } catch (const std::exception& e) {
    out << "error: " << e.what() << "\n";
    return 4;
  }
  const std::vector<LayerSpec> specs = build_layer_specs(cfg, bundle.features.cols,
                                                         bundle.num_classes);
  const fs::path run_dir = fs::path(cfg.out_dir) / cfg.effective_run_name();
  try {
    fs::create_directories(run_dir);
    write_resolved_config(cfg, run_dir);
    std::vector<SeedOutcome> outcomes = train_all_seeds(cfg, bundle, specs);
    for (const SeedOutcome& so : outcomes) write_seed_artifacts(cfg, bundle, specs, so, run_dir);
    const Summary s = summarize(outcomes);
    write_summary_files(outcomes, s, run_dir);
    out << format_summary_line(cfg.effective_run_name(), outcomes, s) << "\n";
  } catch (const TrainingDiverged& e) {
    out << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    out << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}

int run_sweep(const RunConfig& cfg, const std::vector<double>& values, std::ostream& out) {
  const AggKind kind = agg_kind_from_string(cfg.aggregator);
  if (!agg_has_param(kind)) {
    out << "error: aggregator '" << cfg.aggregator << "' has no parameter to sweep\n";
    return 2;
  }
  if (values.empty()) {
    out << "error: empty sweep grid\n";
    return 2;
  }
  DatasetBundle bundle;
  try {
    bundle = resolve_dataset(cfg);
  } catch (const std::exception& e) {
    out << "error: " << e.what() << "\n";
    return 4;
  }
  const fs::path sweep_dir = fs::path(cfg.out_dir) / (cfg.effective_run_name() + "-sweep");
  try {
    fs::create_directories(sweep_dir);
    std::ofstream csv(sweep_dir / "sweep.csv");
    csv << "param_value,mean_acc,std_acc\n";
    for (double value : values) {
      RunConfig point = cfg;
      point.agg_learnable = false;
      point.agg_theta_init = theta_for_effective(kind, value);
      point.run_name = cfg.effective_run_name() + "-sweep-" + fmt_double(value);
      const std::vector<LayerSpec> specs =
          build_layer_specs(point, bundle.features.cols, bundle.num_classes);
      const fs::path run_dir = fs::path(point.out_dir) / point.run_name;
      fs::create_directories(run_dir);
      std::vector<SeedOutcome> outcomes = train_all_seeds(point, bundle, specs);
      for (const SeedOutcome& so : outcomes)
        write_seed_artifacts(point, bundle, specs, so, run_dir);
      const Summary s = summarize(outcomes);
      write_summary_files(outcomes, s, run_dir);
      csv << fmt_double(value) << ',' << fmt_double(s.mean) << ',' << fmt_double(s.stddev)
          << '\n';
      out << format_summary_line(point.run_name, outcomes, s) << "\n";
    }
  } catch (const TrainingDiverged& e) {
    out << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    out << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}

int run_synth(const RunConfig& cfg, const std::string& out_dir, std::ostream& out) {
  try {
    DatasetBundle bundle = generate_sbm(cfg.sbm, cfg.sbm_seed);
    export_dataset(bundle, out_dir);
    SplitMask mask = make_splits(bundle.labels, cfg.split_per_class, cfg.split_val,
                                 cfg.split_test, cfg.sbm_seed);
    write_splits_json(mask, (fs::path(out_dir) / "splits.json").string());
    out << "wrote " << bundle.graph.num_nodes() << " nodes, " << bundle.raw_edge_count
        << " edges, " << bundle.features.cols << " features to " << out_dir << "\n";
  } catch (const std::exception& e) {
    out << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}

int run_propcheck_cmd(const PropcheckOptions& opts, std::ostream& out) {
  const std::vector<PropertyResult> results = run_propcheck(opts);
  bool ok = true;
  for (const PropertyResult& r : results) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-68s %s  worst %.3e (tol %.0e, %d trials)",
                  r.name.c_str(), r.pass ? "PASS" : "FAIL", r.worst_error, r.tolerance,
                  r.trials);
    out << buf << "\n";
    if (!r.note.empty()) out << "    note: " << r.note << "\n";
    ok = ok && r.pass;
  }
  out << (ok ? "all properties passed" : "property failures detected") << "\n";
  return ok ? 0 : 1;
}

int run_gradcheck_cmd(const GradcheckOptions& opts, std::ostream& out) {
  const std::vector<GradTargetResult> results = run_gradcheck(opts);
  bool ok = true;
  for (const GradTargetResult& r : results) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-40s %s  worst rel err %.3e (tol %.0e)", r.target.c_str(),
                  r.pass ? "PASS" : "FAIL", r.max_rel_error, r.tolerance);
    out << buf << "\n";
    ok = ok && r.pass;
  }
  out << (ok ? "all gradients verified" : "gradient failures detected") << "\n";
  return ok ? 0 : 1;
}

}  // namespace nagg
