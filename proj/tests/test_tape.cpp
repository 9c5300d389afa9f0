#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "nagg/propcheck.hpp"
#include "nagg/tape.hpp"

using namespace nagg;

TEST_CASE("matmul identity and shape errors") {
  Tape t;
  ValueId x = t.leaf(Tensor::from_rows({{1, 2}, {3, 4}}));
  ValueId out = t.matmul(t.leaf(Tensor::identity(2)), x);
  CHECK(t.value(out).at(0, 0) == 1.0);
  CHECK(t.value(out).at(1, 1) == 4.0);
  CHECK_THROWS_WITH_AS(t.matmul(x, t.leaf(Tensor(3, 2))), doctest::Contains("2x2"),
                       std::invalid_argument);
}

TEST_CASE("elementwise basics") {
  Tape t;
  ValueId x = t.leaf(Tensor::from_rows({{1, -2}}));
  CHECK(t.value(t.add(x, t.leaf(Tensor::zeros(1, 2)))).at(0, 1) == -2.0);
  CHECK(t.value(t.div_elem(t.leaf(Tensor::from_rows({{4}})), t.leaf(Tensor::from_rows({{2}}))))
            .at(0, 0) == 2.0);
  ValueId r = t.relu(x);
  CHECK(t.value(r).at(0, 0) == 1.0);
  CHECK(t.value(r).at(0, 1) == 0.0);
  CHECK(t.value(t.softplus(t.leaf(Tensor::scalar(0.0)))).at(0, 0) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(t.value(t.pow_elem(t.leaf(Tensor::scalar(2.0)), 3.0)).at(0, 0) == doctest::Approx(8.0));
}

TEST_CASE("relu gradient routes only through positive entries") {
  Tape t;
  ValueId x = t.leaf(Tensor::from_rows({{-1, 2}}), true);
  t.backward(t.sum_all(t.relu(x)));
  CHECK(t.grad(x).at(0, 0) == 0.0);
  CHECK(t.grad(x).at(0, 1) == 1.0);
}

TEST_CASE("pow_elem gradient 3 * 2^2") {
  Tape t;
  ValueId x = t.leaf(Tensor::scalar(2.0), true);
  t.backward(t.sum_all(t.pow_elem(x, 3.0)));
  CHECK(t.grad(x).at(0, 0) == doctest::Approx(12.0));
}

TEST_CASE("log and pow domain violations name the coordinate") {
  Tape t;
  CHECK_THROWS_WITH_AS(t.log(t.leaf(Tensor::from_rows({{1.0, -3.0}}))),
                       doctest::Contains("index 1"), std::domain_error);
  CHECK_THROWS_AS(t.pow_elem(t.leaf(Tensor::from_rows({{-1.0}})), 0.5), std::domain_error);
}

TEST_CASE("backward of sum is all-ones; loss must be scalar") {
  Tape t;
  ValueId x = t.leaf(Tensor::zeros(2, 2), true);
  t.backward(t.sum_all(x));
  for (double g : t.grad(x).data) CHECK(g == 1.0);
  CHECK_THROWS_AS(t.backward(x), std::invalid_argument);
}

TEST_CASE("loss sum(x*x) at x=3 has gradient 6") {
  Tape t;
  ValueId x = t.leaf(Tensor::scalar(3.0), true);
  t.backward(t.sum_all(t.mul_elem(x, x)));
  CHECK(t.grad(x).at(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("a leaf used k times accumulates k path gradients") {
  Tape t;
  ValueId x = t.leaf(Tensor::scalar(1.5), true);
  // f = x + x + x*x -> df/dx = 2 + 2x = 5
  ValueId loss = t.sum_all(t.add(t.add(x, x), t.mul_elem(x, x)));
  t.backward(loss);
  CHECK(t.grad(x).at(0, 0) == doctest::Approx(5.0));
}

TEST_CASE("untouched trainable leaves get zero gradient") {
  Tape t;
  ValueId used = t.leaf(Tensor::scalar(1.0), true);
  ValueId unused = t.leaf(Tensor::from_rows({{1, 2}}), true);
  t.backward(t.sum_all(used));
  CHECK(t.grad(unused).at(0, 0) == 0.0);
  CHECK(t.grad(unused).at(0, 1) == 0.0);
}

TEST_CASE("backward is deterministic across runs") {
  auto run = [] {
    std::mt19937_64 rng(5);
    Tape t;
    ValueId x = t.leaf(random_features(rng, 4, 3), true);
    ValueId w = t.leaf(random_features(rng, 3, 2), true);
    t.backward(t.sum_all(t.relu(t.matmul(x, w))));
    return std::make_pair(t.grad(x).data, t.grad(w).data);
  };
  auto [gx1, gw1] = run();
  auto [gx2, gw2] = run();
  CHECK(gx1 == gx2);  // bit-identical
  CHECK(gw1 == gw2);
}

TEST_CASE("segment_sum and segment_max examples") {
  Tape t;
  ValueId ev = t.leaf(Tensor::from_rows({{1}, {3}}));
  CHECK(t.value(t.segment_sum(ev, {0, 2})).at(0, 0) == 4.0);

  ValueId pairs = t.leaf(Tensor::from_rows({{2, 5}, {3, 1}}));
  ValueId mx = t.segment_max(pairs, {0, 2});
  CHECK(t.value(mx).at(0, 0) == 3.0);
  CHECK(t.value(mx).at(0, 1) == 5.0);

  CHECK_THROWS_WITH_AS(t.segment_max(pairs, {0, 0, 2}), doctest::Contains("empty"),
                       std::invalid_argument);
}

TEST_CASE("segment_max ties route gradient to the lowest edge index") {
  Tape t;
  ValueId ev = t.leaf(Tensor::from_rows({{2}, {2}, {1}}), true);
  t.backward(t.sum_all(t.segment_max(ev, {0, 3})));
  CHECK(t.grad(ev).at(0, 0) == 1.0);
  CHECK(t.grad(ev).at(1, 0) == 0.0);
  CHECK(t.grad(ev).at(2, 0) == 0.0);
}

TEST_CASE("segment_softmax example and row sums") {
  Tape t;
  ValueId ev = t.leaf(Tensor::from_rows({{2}, {3}}));
  ValueId s = t.segment_softmax(ev, {0, 2}, 1.0);
  CHECK(t.value(s).at(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(1.0))).epsilon(1e-12));
  CHECK(t.value(s).at(1, 0) == doctest::Approx(std::exp(1.0) / (1.0 + std::exp(1.0))).epsilon(1e-12));
}

TEST_CASE("segment_softmax normalizes per segment for any gamma and large inputs") {
  std::mt19937_64 rng(17);
  for (double gamma : {0.0, 1.0, 7.5, 64.0}) {
    Graph g = random_graph(rng, 20);
    Tensor ev = random_features(rng, g.num_edges(), 3, -1e4, 1e4);
    Tape t;
    ValueId s = t.segment_softmax(t.leaf(ev), g.row_offsets(), gamma);
    const Tensor& sv = t.value(s);
    for (int v = 0; v < g.num_nodes(); ++v)
      for (int k = 0; k < 3; ++k) {
        double sum = 0.0;
        for (int e = g.row_offsets()[v]; e < g.row_offsets()[v + 1]; ++e) {
          CHECK(sv.at(e, k) >= 0.0);
          sum += sv.at(e, k);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
      }
  }
}

TEST_CASE("gather and scatter round trip gradients") {
  Tape t;
  ValueId h = t.leaf(Tensor::from_rows({{1, 2}, {3, 4}}), true);
  ValueId gathered = t.gather_rows(h, {1, 0, 1});
  CHECK(t.value(gathered).at(0, 0) == 3.0);
  t.backward(t.sum_all(gathered));
  CHECK(t.grad(h).at(0, 0) == 1.0);  // row 0 used once
  CHECK(t.grad(h).at(1, 0) == 2.0);  // row 1 used twice
}

TEST_CASE("dropout zero rate is identity; positive rate rescales survivors") {
  std::mt19937_64 rng(3);
  Tape t;
  Tensor x = Tensor::full(50, 40, 1.0);
  ValueId xid = t.leaf(x, true);
  ValueId kept = t.dropout(xid, 0.0, rng);
  CHECK(t.value(kept).data == x.data);

  const double rate = 0.4;
  ValueId dropped = t.dropout(xid, rate, rng);
  int zeros = 0;
  for (double v : t.value(dropped).data) {
    if (v == 0.0)
      ++zeros;
    else
      CHECK(v == doctest::Approx(1.0 / (1.0 - rate)).epsilon(1e-12));
  }
  // 2000 entries: expect 800 +- 3*sqrt(2000*0.4*0.6) ~= 800 +- 66
  CHECK(zeros > 734);
  CHECK(zeros < 866);
}

TEST_CASE("grad_check validates analytic gradients and flags faults") {
  // f(x) = x^2 at x = 3: analytic 6
  GradReport ok = grad_check(
      [](Tape& t, ValueId x) { return t.sum_all(t.mul_elem(x, x)); }, Tensor::scalar(3.0));
  CHECK(ok.max_rel_error < 1e-8);
  CHECK(ok.analytic == doctest::Approx(6.0));
  CHECK(ok.numeric == doctest::Approx(6.0).epsilon(1e-8));

  // two-op chain relu(Wx) against finite differences
  std::mt19937_64 rng(9);
  Tensor w = random_features(rng, 3, 3);
  GradReport chain = grad_check(
      [&](Tape& t, ValueId x) { return t.sum_all(t.relu(t.matmul(t.leaf(w), x))); },
      random_features(rng, 3, 2, 0.2, 2.0));
  CHECK(chain.max_rel_error < 1e-6);

  // a backward rule off by 10% must be detected at ~0.1 relative error
  GradReport fault = grad_check(
      [](Tape& t, ValueId x) {
        const Tensor& X = t.value(x);
        Tensor out = X;
        return t.sum_all(t.record(std::move(out), {x}, [x](Tape& tt, ValueId oid) {
          const Tensor& g = tt.grad_of(oid);
          Tensor& gx = tt.grad_acc(x);
          for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += 1.1 * g.data[i];
        }));
      },
      Tensor::from_rows({{1.0, 2.0}}));
  CHECK(fault.max_rel_error == doctest::Approx(0.1).epsilon(0.05));
}

TEST_CASE("every op passes grad_check at inputs away from kinks") {
  // Broad randomized sweep; the dedicated gradcheck suite covers the rest.
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor a = random_features(rng, 3, 3, 0.3, 2.0);
    Tensor b = random_features(rng, 3, 3, 0.4, 1.8);
    auto combo = [&](Tape& t, ValueId x) {
      ValueId m = t.mul_elem(t.exp(t.scalar_mul(x, 0.3)), t.leaf(b));
      return t.sum_all(t.div_elem(t.log(t.add(m, x)), t.leaf(b)));
    };
    CHECK(grad_check(combo, a).max_rel_error < 1e-4);
  }
}

TEST_CASE("finite checks reject NaN at op boundaries when enabled") {
  set_finite_checks(true);
  Tape t;
  ValueId x = t.leaf(Tensor::scalar(800.0));
  CHECK_THROWS_AS(t.exp(t.mul_elem(x, x)), std::domain_error);  // overflows to inf
  set_finite_checks(false);
}
