#include "nagg/data_io.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;

namespace nagg {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Tensor read_features_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("missing file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        fail(path + ":" + std::to_string(line_no) + ": bad number '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      fail(path + ":" + std::to_string(line_no) + ": ragged row with " +
           std::to_string(row.size()) + " fields, expected " + std::to_string(rows.front().size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(path + ": no feature rows");
  return Tensor::from_rows(rows);
}

// node<TAB>class, one line per node; returns labels plus source line numbers.
void read_labels_tsv(const std::string& path, int num_nodes, std::vector<int>& labels,
                     std::vector<int>& label_lines) {
  std::ifstream in(path);
  if (!in) fail("missing file: " + path);
  labels.assign(num_nodes, -1);
  label_lines.assign(num_nodes, 0);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    long long node, cls;
    if (!(ls >> node >> cls))
      fail(path + ":" + std::to_string(line_no) + ": expected 'node<TAB>class'");
    if (node < 0 || node >= num_nodes)
      fail(path + ":" + std::to_string(line_no) + ": node " + std::to_string(node) +
           " out of [0," + std::to_string(num_nodes) + ")");
    if (labels[node] != -1)
      fail(path + ":" + std::to_string(line_no) + ": duplicate label for node " +
           std::to_string(node));
    if (cls < 0) fail(path + ":" + std::to_string(line_no) + ": negative class");
    labels[node] = static_cast<int>(cls);
    label_lines[node] = line_no;
  }
  for (int v = 0; v < num_nodes; ++v)
    if (labels[v] == -1) fail(path + ": node " + std::to_string(v) + " has no label");
}

}  // namespace

void SplitMask::validate(int num_nodes) const {
  if (train_idx.empty()) fail("split: empty training set");
  std::set<int> seen;
  auto check = [&](const std::vector<int>& idx, const char* name) {
    for (int i : idx) {
      if (i < 0 || i >= num_nodes)
        fail("split: " + std::string(name) + " index " + std::to_string(i) + " out of [0," +
             std::to_string(num_nodes) + ")");
      if (!seen.insert(i).second)
        fail("split: index " + std::to_string(i) + " appears in more than one set");
    }
  };
  check(train_idx, "train");
  check(val_idx, "val");
  check(test_idx, "test");
}

DatasetBundle load_dataset(const std::string& dir) {
  const std::string edges_path = (fs::path(dir) / "edges.tsv").string();
  const std::string feats_path = (fs::path(dir) / "features.csv").string();
  const std::string labels_path = (fs::path(dir) / "labels.tsv").string();
  if (!fs::exists(edges_path)) fail("missing file: " + edges_path);

  DatasetBundle bundle;
  bundle.features = read_features_csv(feats_path);
  const int n = bundle.features.rows;

  std::vector<int> label_lines;
  read_labels_tsv(labels_path, n, bundle.labels, label_lines);
  const int num_classes =
      static_cast<int>(std::set<int>(bundle.labels.begin(), bundle.labels.end()).size());
  for (int v = 0; v < n; ++v)
    if (bundle.labels[v] >= num_classes)
      fail(labels_path + ":" + std::to_string(label_lines[v]) + ": label " +
           std::to_string(bundle.labels[v]) + " outside contiguous range [0," +
           std::to_string(num_classes) + ")");
  bundle.num_classes = num_classes;

  EdgeList edges = read_edge_list_file(edges_path, n);
  bundle.raw_edge_count = static_cast<int>(edges.pairs.size());
  bundle.graph = build_graph(edges, /*add_self_loops=*/true, /*symmetrize=*/true);
  bundle.name = fs::path(dir).filename().string();
  return bundle;
}

DatasetBundle generate_sbm(const SbmSpec& spec, std::uint64_t seed) {
  if (spec.blocks <= 0 || spec.nodes_per_block <= 0) fail("sbm: non-positive size");
  if (!(spec.p_out >= 0.0 && spec.p_out < spec.p_in && spec.p_in <= 1.0))
    fail("sbm: need 0 <= p_out < p_in <= 1");
  if (!(spec.feature_shift > 0.0)) fail("sbm: feature_shift must be positive");
  if (spec.feature_dim < spec.blocks)
    fail("sbm: feature_dim " + std::to_string(spec.feature_dim) + " < blocks " +
         std::to_string(spec.blocks) + " (orthogonal class means need one axis per block)");

  const int n = spec.blocks * spec.nodes_per_block;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  EdgeList edges;
  edges.num_nodes = n;
  auto block_of = [&](int v) { return v / spec.nodes_per_block; };
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double p = block_of(i) == block_of(j) ? spec.p_in : spec.p_out;
      if (unif(rng) < p) edges.pairs.emplace_back(i, j);
    }

  DatasetBundle bundle;
  bundle.raw_edge_count = static_cast<int>(edges.pairs.size());
  bundle.graph = build_graph(edges, /*add_self_loops=*/true, /*symmetrize=*/true);
  bundle.labels.resize(n);
  for (int v = 0; v < n; ++v) bundle.labels[v] = block_of(v);
  bundle.num_classes = spec.blocks;

  std::normal_distribution<double> noise(0.0, 1.0);
  bundle.features = Tensor(n, spec.feature_dim);
  for (int v = 0; v < n; ++v)
    for (int k = 0; k < spec.feature_dim; ++k) {
      double mean = (k == bundle.labels[v]) ? spec.feature_shift : 0.0;
      double eps = spec.noise_sigma > 0.0 ? spec.noise_sigma * noise(rng) : 0.0;
      bundle.features.at(v, k) = mean + eps;
    }
  bundle.name = "sbm";
  return bundle;
}

SplitMask make_splits(const std::vector<int>& labels, int per_class, int val_size, int test_size,
                      std::uint64_t seed) {
  const int n = static_cast<int>(labels.size());
  const int num_classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  if (per_class <= 0) fail("make_splits: per_class must be positive");
  if (per_class * num_classes + val_size + test_size > n)
    fail("make_splits: requested " +
         std::to_string(per_class * num_classes + val_size + test_size) + " nodes of " +
         std::to_string(n));

  std::mt19937_64 rng(seed);
  SplitMask mask;
  std::vector<char> taken(n, 0);
  for (int c = 0; c < num_classes; ++c) {
    std::vector<int> members;
    for (int v = 0; v < n; ++v)
      if (labels[v] == c) members.push_back(v);
    if (static_cast<int>(members.size()) < per_class)
      fail("make_splits: class " + std::to_string(c) + " has " + std::to_string(members.size()) +
           " nodes, need " + std::to_string(per_class));
    std::shuffle(members.begin(), members.end(), rng);
    for (int i = 0; i < per_class; ++i) {
      mask.train_idx.push_back(members[i]);
      taken[members[i]] = 1;
    }
  }
  std::vector<int> pool;
  for (int v = 0; v < n; ++v)
    if (!taken[v]) pool.push_back(v);
  if (static_cast<int>(pool.size()) < val_size + test_size)
    fail("make_splits: only " + std::to_string(pool.size()) + " nodes left for val+test");
  std::shuffle(pool.begin(), pool.end(), rng);
  mask.val_idx.assign(pool.begin(), pool.begin() + val_size);
  mask.test_idx.assign(pool.begin() + val_size, pool.begin() + val_size + test_size);
  std::sort(mask.train_idx.begin(), mask.train_idx.end());
  std::sort(mask.val_idx.begin(), mask.val_idx.end());
  std::sort(mask.test_idx.begin(), mask.test_idx.end());
  mask.validate(n);
  return mask;
}

void export_dataset(const DatasetBundle& bundle, const std::string& dir) {
  fs::create_directories(dir);
  EdgeList edges;
  edges.num_nodes = bundle.graph.num_nodes();
  const auto& off = bundle.graph.row_offsets();
  const auto& col = bundle.graph.col_indices();
  for (int v = 0; v < bundle.graph.num_nodes(); ++v)
    for (int e = off[v]; e < off[v + 1]; ++e)
      if (v < col[e]) edges.pairs.emplace_back(v, col[e]);  // upper triangle, no self-loops
  write_edge_list_file(edges, (fs::path(dir) / "edges.tsv").string());

  std::ofstream feats((fs::path(dir) / "features.csv").string());
  if (!feats) throw std::runtime_error("cannot write features.csv under " + dir);
  for (int v = 0; v < bundle.features.rows; ++v) {
    for (int k = 0; k < bundle.features.cols; ++k) {
      if (k) feats << ',';
      feats << fmt_double(bundle.features.at(v, k));
    }
    feats << '\n';
  }

  std::ofstream labels((fs::path(dir) / "labels.tsv").string());
  if (!labels) throw std::runtime_error("cannot write labels.tsv under " + dir);
  for (std::size_t v = 0; v < bundle.labels.size(); ++v)
    labels << v << '\t' << bundle.labels[v] << '\n';
}

void export_embeddings(const Tensor& h, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write embeddings: " + path);
  for (int v = 0; v < h.rows; ++v) {
    for (int k = 0; k < h.cols; ++k) {
      if (k) out << ',';
      out << fmt_double(h.at(v, k));
    }
    out << '\n';
  }
}

void write_splits_json(const SplitMask& mask, const std::string& path) {
  nlohmann::json j;
  j["train"] = mask.train_idx;
  j["val"] = mask.val_idx;
  j["test"] = mask.test_idx;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write splits: " + path);
  out << j.dump(2) << '\n';
}

SplitMask read_splits_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("missing file: " + path);
  nlohmann::json j;
  in >> j;
  SplitMask mask;
  mask.train_idx = j.at("train").get<std::vector<int>>();
  mask.val_idx = j.at("val").get<std::vector<int>>();
  mask.test_idx = j.at("test").get<std::vector<int>>();
  return mask;
}

bool splits_json_exists(const std::string& dir) {
  return fs::exists(fs::path(dir) / "splits.json");
}

}  // namespace nagg
