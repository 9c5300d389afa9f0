#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "nagg/graph.hpp"
#include "nagg/propcheck.hpp"
#include "support/oracles.hpp"

using namespace nagg;

TEST_CASE("build_graph symmetrize and self-loops") {
  EdgeList edges{2, {{0, 1}}};
  Graph g = build_graph(edges, true, true);
  CHECK(g.num_nodes() == 2);
  CHECK(g.num_edges() == 4);
  CHECK(g.has_edge(0, 0));
  CHECK(g.has_edge(0, 1));
  CHECK(g.has_edge(1, 0));
  CHECK(g.has_edge(1, 1));
  for (double w : g.edge_weights()) CHECK(w == 1.0);
}

TEST_CASE("build_graph single node self-loop") {
  Graph g = build_graph(EdgeList{1, {}}, true, false);
  CHECK(g.num_edges() == 1);
  CHECK(g.weight(0, 0) == 1.0);
}

TEST_CASE("build_graph collapses duplicates") {
  EdgeList edges{2, {{0, 1}, {1, 0}, {0, 1}}};
  Graph g = build_graph(edges, false, false);
  CHECK(g.num_edges() == 2);
  CHECK(g.weight(1, 0) == 1.0);  // edge 0->1 lands in row of destination 1
  CHECK(g.weight(0, 1) == 1.0);
}

TEST_CASE("build_graph rejects out-of-range indices naming the pair") {
  EdgeList edges{2, {{0, 5}}};
  CHECK_THROWS_WITH_AS(build_graph(edges, false, false),
                       doctest::Contains("(0,5)"), std::invalid_argument);
}

TEST_CASE("sym_normalize two-node example") {
  Graph g = build_graph(EdgeList{2, {{0, 1}}}, true, true).sym_normalize();
  CHECK(g.scheme() == WeightScheme::SymNorm);
  for (double w : g.edge_weights()) CHECK(w == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("sym_normalize isolated self-loop") {
  Graph g = build_graph(EdgeList{1, {}}, true, false).sym_normalize();
  CHECK(g.weight(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("sym_normalize path graph matches dense oracle value") {
  Graph g = build_graph(EdgeList{3, {{0, 1}, {1, 2}}}, true, true).sym_normalize();
  // degrees with self-loops: 2, 3, 2
  CHECK(g.weight(0, 1) == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-12));
  CHECK(g.weight(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("sym_normalize rejects missing self-loop") {
  Graph g = build_graph(EdgeList{2, {{0, 1}}}, false, true);
  CHECK_THROWS_AS(g.sym_normalize(), std::invalid_argument);
}

TEST_CASE("row_normalize examples") {
  Graph g = build_graph(EdgeList{2, {{0, 1}}}, true, true).row_normalize();
  CHECK(g.weight(0, 0) == doctest::Approx(0.5));
  CHECK(g.weight(0, 1) == doctest::Approx(0.5));

  Graph single = build_graph(EdgeList{1, {}}, true, false).row_normalize();
  CHECK(single.weight(0, 0) == doctest::Approx(1.0));

  // row 0 carries weights (1,2,1) -> (0.25, 0.5, 0.25)
  Graph base = build_graph(EdgeList{3, {{0, 0}, {1, 0}, {2, 0}, {1, 1}, {2, 2}}}, false, false);
  Graph weighted = base.with_external_weights({1.0, 2.0, 1.0, 1.0, 1.0});
  Graph rn = weighted.row_normalize();
  CHECK(rn.weight(0, 0) == doctest::Approx(0.25));
  CHECK(rn.weight(0, 1) == doctest::Approx(0.5));
  CHECK(rn.weight(0, 2) == doctest::Approx(0.25));
}

TEST_CASE("row_normalize rejects empty rows") {
  Graph g = build_graph(EdgeList{2, {{0, 1}}}, false, false);  // node 0 has no incoming edges
  CHECK_THROWS_AS(g.row_normalize(), std::invalid_argument);
}

TEST_CASE("row_normalize is idempotent") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Graph g = random_graph(rng, 20).row_normalize();
    Graph g2 = g.row_normalize();
    for (int e = 0; e < g.num_edges(); ++e)
      CHECK(g.edge_weights()[e] == doctest::Approx(g2.edge_weights()[e]).epsilon(1e-12));
  }
}

TEST_CASE("with_external_weights keeps topology and validates length") {
  Graph g = build_graph(EdgeList{2, {{0, 1}}}, true, true);
  Graph w = g.with_external_weights({0.1, 0.2, 0.3, 0.4});
  CHECK(w.scheme() == WeightScheme::External);
  CHECK(w.col_indices() == g.col_indices());
  CHECK_THROWS_AS(g.with_external_weights({1.0}), std::invalid_argument);

  // uniform 1/deg per row equals row_normalize output
  Graph rn = g.row_normalize();
  Graph uniform = g.with_external_weights({0.5, 0.5, 0.5, 0.5});
  for (int e = 0; e < g.num_edges(); ++e)
    CHECK(uniform.edge_weights()[e] == doctest::Approx(rn.edge_weights()[e]));
}

TEST_CASE("sym_normalize equals dense computation on small graphs") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    Graph g = random_graph(rng, 8);
    Graph sym = g.sym_normalize();
    const auto dense = oracle::dense_sym_normalize(oracle::to_dense(g));
    for (int v = 0; v < g.num_nodes(); ++v)
      for (int u = 0; u < g.num_nodes(); ++u)
        CHECK(sym.weight(v, u) == doctest::Approx(dense[v][u]).epsilon(1e-12));
  }
}

TEST_CASE("sym_normalize output is symmetric") {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    Graph sym = random_graph(rng, 30).sym_normalize();
    for (int v = 0; v < sym.num_nodes(); ++v)
      for (int e = sym.row_offsets()[v]; e < sym.row_offsets()[v + 1]; ++e) {
        const int u = sym.col_indices()[e];
        CHECK(sym.weight(v, u) == doctest::Approx(sym.weight(u, v)).epsilon(1e-12));
      }
  }
}

TEST_CASE("relabeling nodes permutes weights consistently") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Graph g = random_graph(rng, 15);
    const int n = g.num_nodes();
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    EdgeList relabeled;
    relabeled.num_nodes = n;
    for (int v = 0; v < n; ++v)
      for (int e = g.row_offsets()[v]; e < g.row_offsets()[v + 1]; ++e)
        if (v <= g.col_indices()[e])
          relabeled.pairs.emplace_back(perm[v], perm[g.col_indices()[e]]);
    Graph gp = build_graph(relabeled, true, true).sym_normalize();
    Graph sym = g.sym_normalize();
    for (int v = 0; v < n; ++v)
      for (int e = g.row_offsets()[v]; e < g.row_offsets()[v + 1]; ++e) {
        const int u = g.col_indices()[e];
        CHECK(gp.weight(perm[v], perm[u]) == doctest::Approx(sym.weight(v, u)).epsilon(1e-12));
      }
  }
}

TEST_CASE("edge list text format parses and rejects") {
  std::istringstream ok("# comment\n0\t1\n2\t0\n");
  EdgeList edges = parse_edge_list(ok, "test.tsv");
  CHECK(edges.num_nodes == 3);
  CHECK(edges.pairs.size() == 2);

  std::istringstream bad("0\tx\n");
  CHECK_THROWS_WITH_AS(parse_edge_list(bad, "test.tsv"), doctest::Contains("test.tsv:1"),
                       std::invalid_argument);

  std::istringstream toobig("0\t9\n");
  CHECK_THROWS_AS(parse_edge_list(toobig, "test.tsv", 3), std::invalid_argument);
}

TEST_CASE("graph validate rejects unsorted and non-positive weights") {
  CHECK_THROWS_AS(Graph(2, {0, 2, 2}, {1, 0}, {1.0, 1.0}, WeightScheme::Binary),
                  std::invalid_argument);
  CHECK_THROWS_AS(Graph(2, {0, 1, 2}, {0, 1}, {1.0, -1.0}, WeightScheme::Binary),
                  std::invalid_argument);
  CHECK_THROWS_AS(Graph(2, {0, 1, 2}, {0, 1}, {1.0, 0.5}, WeightScheme::Binary),
                  std::invalid_argument);  // binary scheme needs unit weights
}
