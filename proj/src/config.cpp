#include "nagg/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace nagg {

namespace {

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "dataset",        "model",          "hidden",          "heads",
      "dropout",        "weighting",      "aggregator",      "agg_theta_init",
      "agg_learnable",  "agg_share",      "lr",              "weight_decay",
      "max_epochs",     "patience",       "optimizer",       "eval_every",
      "seeds",          "seed_list",      "out",             "run_name",
      "export_embeddings", "sbm_seed",    "sbm_blocks",      "sbm_nodes_per_block",
      "sbm_p_in",       "sbm_p_out",      "sbm_feature_dim", "sbm_feature_shift",
      "sbm_noise_sigma", "split_per_class", "split_val",     "split_test",
  };
  return keys;
}

int edit_distance(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1])});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string suggest_key(const std::string& key) {
  int best = 1 << 30;
  std::string pick;
  for (const std::string& k : known_keys()) {
    const int d = edit_distance(key, k);
    if (d < best) {
      best = d;
      pick = k;
    }
  }
  return best <= 3 ? pick : "";
}

[[noreturn]] void bad(const std::string& msg) { throw ConfigError(msg); }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    bad("key '" + key + "': '" + v + "' is not a number");
  }
}

long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long x = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    bad("key '" + key + "': '" + v + "' is not an integer");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad("key '" + key + "': '" + v + "' is not a boolean (true|false)");
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void apply_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "dataset") cfg.dataset = value;
  else if (key == "model") {
    if (value != "gcn" && value != "gat") bad("key 'model': expected gcn|gat, got '" + value + "'");
    cfg.model = value;
  } else if (key == "hidden") {
    const long v = parse_int(key, value);
    if (v <= 0) bad("key 'hidden': must be positive");
    cfg.hidden = static_cast<int>(v);
  } else if (key == "heads") {
    const long v = parse_int(key, value);
    if (v <= 0) bad("key 'heads': must be positive");
    cfg.heads = static_cast<int>(v);
  } else if (key == "dropout") {
    const double v = parse_real(key, value);
    if (v < 0.0 || v >= 1.0) bad("key 'dropout': must lie in [0,1)");
    cfg.dropout = v;
  } else if (key == "weighting") {
    if (value != "symnorm" && value != "rownorm" && value != "binary" && value != "attention")
      bad("key 'weighting': expected symnorm|rownorm|binary|attention, got '" + value + "'");
    cfg.weighting = value;
  } else if (key == "aggregator") {
    agg_kind_from_string(value);  // throws on bad name
    cfg.aggregator = value;
  } else if (key == "agg_theta_init") cfg.agg_theta_init = parse_real(key, value);
  else if (key == "agg_learnable") cfg.agg_learnable = parse_bool(key, value);
  else if (key == "agg_share") cfg.agg_share = parse_bool(key, value);
  else if (key == "lr") {
    const double v = parse_real(key, value);
    if (v < 0.0) bad("key 'lr': must be nonnegative");
    cfg.lr = v;
  } else if (key == "weight_decay") {
    const double v = parse_real(key, value);
    if (v < 0.0) bad("key 'weight_decay': must be nonnegative");
    cfg.weight_decay = v;
  } else if (key == "max_epochs") {
    const long v = parse_int(key, value);
    if (v <= 0) bad("key 'max_epochs': must be positive");
    cfg.max_epochs = static_cast<int>(v);
  } else if (key == "patience") {
    const long v = parse_int(key, value);
    if (v <= 0) bad("key 'patience': must be positive");
    cfg.patience = static_cast<int>(v);
  } else if (key == "optimizer") {
    if (value != "adam" && value != "sgd_momentum")
      bad("key 'optimizer': expected adam|sgd_momentum, got '" + value + "'");
    cfg.optimizer = value;
  } else if (key == "eval_every") {
    const long v = parse_int(key, value);
    if (v <= 0) bad("key 'eval_every': must be positive");
    cfg.eval_every = static_cast<int>(v);
  } else if (key == "seeds") {
    const long v = parse_int(key, value);
    if (v <= 0) bad("key 'seeds': must be a positive count");
    cfg.seeds.clear();
    for (long s = 0; s < v; ++s) cfg.seeds.push_back(static_cast<std::uint64_t>(s));
  } else if (key == "seed_list") {
    cfg.seeds.clear();
    std::istringstream ls(value);
    std::string cell;
    while (std::getline(ls, cell, ','))
      cfg.seeds.push_back(static_cast<std::uint64_t>(parse_int(key, trim(cell))));
    if (cfg.seeds.empty()) bad("key 'seed_list': empty");
  } else if (key == "out") cfg.out_dir = value;
  else if (key == "run_name") cfg.run_name = value;
  else if (key == "export_embeddings") cfg.export_embeddings = parse_bool(key, value);
  else if (key == "sbm_seed") cfg.sbm_seed = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "sbm_blocks") cfg.sbm.blocks = static_cast<int>(parse_int(key, value));
  else if (key == "sbm_nodes_per_block")
    cfg.sbm.nodes_per_block = static_cast<int>(parse_int(key, value));
  else if (key == "sbm_p_in") cfg.sbm.p_in = parse_real(key, value);
  else if (key == "sbm_p_out") cfg.sbm.p_out = parse_real(key, value);
  else if (key == "sbm_feature_dim") cfg.sbm.feature_dim = static_cast<int>(parse_int(key, value));
  else if (key == "sbm_feature_shift") cfg.sbm.feature_shift = parse_real(key, value);
  else if (key == "sbm_noise_sigma") cfg.sbm.noise_sigma = parse_real(key, value);
  else if (key == "split_per_class") cfg.split_per_class = static_cast<int>(parse_int(key, value));
  else if (key == "split_val") cfg.split_val = static_cast<int>(parse_int(key, value));
  else if (key == "split_test") cfg.split_test = static_cast<int>(parse_int(key, value));
  else {
    std::string msg = "unknown key '" + key + "'";
    const std::string hint = suggest_key(key);
    if (!hint.empty()) msg += " (did you mean '" + hint + "'?)";
    bad(msg);
  }
}

}  // namespace

std::string RunConfig::effective_run_name() const {
  if (!run_name.empty()) return run_name;
  std::string ds = dataset;
  // Use the directory basename for path datasets.
  while (!ds.empty() && ds.back() == '/') ds.pop_back();
  const auto slash = ds.find_last_of('/');
  if (slash != std::string::npos) ds = ds.substr(slash + 1);
  return ds + "-" + model + "-" + aggregator;
}

int RunConfig::effective_hidden() const {
  if (hidden > 0) return hidden;
  return model == "gat" ? 8 : 16;
}

std::string RunConfig::effective_weighting() const {
  if (!weighting.empty()) return weighting;
  return model == "gat" ? "attention" : "symnorm";
}

TrainConfig RunConfig::train_config(std::uint64_t seed) const {
  TrainConfig tc;
  tc.lr = lr;
  tc.weight_decay = weight_decay;
  tc.max_epochs = max_epochs;
  tc.patience = patience;
  tc.optimizer = optimizer == "adam" ? OptimizerKind::Adam : OptimizerKind::SgdMomentum;
  tc.seed = seed;
  tc.eval_every = eval_every;
  tc.share_agg_theta = agg_share;
  return tc;
}

RunConfig parse_run_config(const std::optional<std::string>& config_path,
                           const std::vector<std::string>& overrides) {
  RunConfig cfg;
  std::map<std::string, std::string> kv;
  if (config_path) {
    std::ifstream in(*config_path);
    if (!in) bad("cannot open config file: " + *config_path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string s = trim(line);
      if (s.empty() || s[0] == '#') continue;
      const auto eq = s.find('=');
      if (eq == std::string::npos)
        bad(*config_path + ":" + std::to_string(line_no) + ": expected 'key = value'");
      kv[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
    }
  }
  for (const std::string& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos) bad("override '" + ov + "': expected key=value");
    kv[trim(ov.substr(0, eq))] = trim(ov.substr(eq + 1));
  }
  for (const auto& [key, value] : kv) apply_key(cfg, key, value);

  // Cross-field checks.
  if (cfg.patience > cfg.max_epochs) bad("patience exceeds max_epochs");
  const std::string w = cfg.effective_weighting();
  if (cfg.model == "gat" && w != "attention") bad("model gat requires weighting = attention");
  if (cfg.model == "gcn" && w == "attention") bad("weighting attention requires model = gat");
  if (cfg.dataset == "sbm-std" || cfg.dataset == "sbm") {
    if (!(cfg.sbm.p_out >= 0.0 && cfg.sbm.p_out < cfg.sbm.p_in && cfg.sbm.p_in <= 1.0))
      bad("sbm probabilities: need 0 <= sbm_p_out < sbm_p_in <= 1");
    if (cfg.sbm.feature_dim < cfg.sbm.blocks) bad("sbm_feature_dim must be >= sbm_blocks");
    if (!(cfg.sbm.feature_shift > 0.0)) bad("sbm_feature_shift must be positive");
  }

  // Resolved snapshot for reproducibility.
  auto& r = cfg.resolved;
  r["dataset"] = cfg.dataset;
  r["model"] = cfg.model;
  r["hidden"] = std::to_string(cfg.effective_hidden());
  r["heads"] = std::to_string(cfg.heads);
  r["dropout"] = fmt_double(cfg.dropout);
  r["weighting"] = w;
  r["aggregator"] = cfg.aggregator;
  r["agg_theta_init"] = fmt_double(cfg.agg_theta_init);
  r["agg_learnable"] = cfg.agg_learnable ? "true" : "false";
  r["agg_share"] = cfg.agg_share ? "true" : "false";
  r["lr"] = fmt_double(cfg.lr);
  r["weight_decay"] = fmt_double(cfg.weight_decay);
  r["max_epochs"] = std::to_string(cfg.max_epochs);
  r["patience"] = std::to_string(cfg.patience);
  r["optimizer"] = cfg.optimizer;
  r["eval_every"] = std::to_string(cfg.eval_every);
  {
    std::string s;
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
      s += (i ? "," : "") + std::to_string(cfg.seeds[i]);
    r["seed_list"] = s;
  }
  r["out"] = cfg.out_dir;
  r["run_name"] = cfg.effective_run_name();
  r["export_embeddings"] = cfg.export_embeddings ? "true" : "false";
  r["sbm_seed"] = std::to_string(cfg.sbm_seed);
  r["sbm_blocks"] = std::to_string(cfg.sbm.blocks);
  r["sbm_nodes_per_block"] = std::to_string(cfg.sbm.nodes_per_block);
  r["sbm_p_in"] = fmt_double(cfg.sbm.p_in);
  r["sbm_p_out"] = fmt_double(cfg.sbm.p_out);
  r["sbm_feature_dim"] = std::to_string(cfg.sbm.feature_dim);
  r["sbm_feature_shift"] = fmt_double(cfg.sbm.feature_shift);
  r["sbm_noise_sigma"] = fmt_double(cfg.sbm.noise_sigma);
  r["split_per_class"] = std::to_string(cfg.split_per_class);
  r["split_val"] = std::to_string(cfg.split_val);
  r["split_test"] = std::to_string(cfg.split_test);
  return cfg;
}

std::vector<LayerSpec> build_layer_specs(const RunConfig& cfg, int in_dim, int num_classes) {
  AggConfig agg{agg_kind_from_string(cfg.aggregator), cfg.agg_theta_init, cfg.agg_learnable};
  const int hidden = cfg.effective_hidden();
  const std::string w = cfg.effective_weighting();

  LayerSpec l1, l2;
  l1.in_dim = in_dim;
  l1.out_dim = hidden;
  l1.agg = agg;
  l1.activation = Activation::Relu;
  l1.dropout_rate = cfg.dropout;
  l2 = l1;
  l2.activation = Activation::None;
  l2.out_dim = num_classes;

  if (w == "attention") {
    l1.weighting = WeightScheme::External;
    l1.attention = AttentionSpec{cfg.heads, 0.2, true};
    l2.weighting = WeightScheme::External;
    l2.attention = AttentionSpec{1, 0.2, false};
    l2.in_dim = cfg.heads * hidden;
  } else {
    const WeightScheme scheme = w == "symnorm"   ? WeightScheme::SymNorm
                                : w == "rownorm" ? WeightScheme::RowNorm
                                                 : WeightScheme::Binary;
    l1.weighting = scheme;
    l2.weighting = scheme;
    l2.in_dim = hidden;
  }
  return {l1, l2};
}

}  // namespace nagg
