#include "nagg/tape.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace nagg {

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  std::ostringstream os;
  os << op << ": incompatible shapes " << a.shape_str() << " and " << b.shape_str();
  throw std::invalid_argument(os.str());
}

// log1p(exp(x)) without overflow on either tail.
double softplus_d(double x) { return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

void check_offsets(const std::vector<int>& offsets, int total_rows) {
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != total_rows)
    throw std::invalid_argument("segment offsets do not partition the input rows");
  for (std::size_t i = 1; i < offsets.size(); ++i)
    if (offsets[i] < offsets[i - 1]) throw std::invalid_argument("segment offsets decrease");
}

}  // namespace

ValueId Tape::push(Tensor value, std::vector<ValueId> inputs,
                   std::function<void(Tape&, ValueId)> rule) {
  require_finite(value, "tape op output");
  bool req = false;
  for (ValueId in : inputs) {
    check_id(in);
    req = req || nodes_[in].requires_grad;
  }
  Node n;
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  n.backward_rule = std::move(rule);
  n.requires_grad = req;
  nodes_.push_back(std::move(n));
  grads_.emplace_back();
  return static_cast<ValueId>(nodes_.size()) - 1;
}

void Tape::check_id(ValueId id) const {
  if (id < 0 || id >= static_cast<ValueId>(nodes_.size()))
    throw std::invalid_argument("tape: invalid value id " + std::to_string(id));
}

ValueId Tape::leaf(Tensor value, bool trainable) {
  require_finite(value, "leaf");
  Node n;
  n.value = std::move(value);
  n.requires_grad = trainable;
  nodes_.push_back(std::move(n));
  grads_.emplace_back();
  return static_cast<ValueId>(nodes_.size()) - 1;
}

const Tensor& Tape::value(ValueId id) const {
  check_id(id);
  return nodes_[id].value;
}

const Tensor& Tape::grad(ValueId id) { return grad_acc(id); }

Tensor& Tape::grad_acc(ValueId id) {
  check_id(id);
  if (grads_[id].data.empty() && nodes_[id].value.size() > 0)
    grads_[id] = Tensor::zeros(nodes_[id].value.rows, nodes_[id].value.cols);
  return grads_[id];
}

const Tensor& Tape::grad_of(ValueId id) { return grad_acc(id); }

bool Tape::requires_grad(ValueId id) const {
  check_id(id);
  return nodes_[id].requires_grad;
}

ValueId Tape::record(Tensor out, std::vector<ValueId> inputs,
                     std::function<void(Tape&, ValueId)> backward_rule) {
  return push(std::move(out), std::move(inputs), std::move(backward_rule));
}

void Tape::backward(ValueId loss) {
  check_id(loss);
  if (!nodes_[loss].value.is_scalar())
    throw std::invalid_argument("backward: loss has shape " + nodes_[loss].value.shape_str() +
                                ", expected 1x1");
  for (auto& g : grads_) g = Tensor();
  grad_acc(loss).data[0] = 1.0;
  for (ValueId id = loss; id >= 0; --id) {
    const Node& n = nodes_[id];
    if (!n.backward_rule || !n.requires_grad) continue;
    if (grads_[id].data.empty()) continue;  // no gradient reached this node
    n.backward_rule(*this, id);
  }
}

// ---------------------------------------------------------------------------
// arithmetic

ValueId Tape::matmul(ValueId a, ValueId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.cols != B.rows) shape_error("matmul", A, B);
  Tensor out(A.rows, B.cols);
  for (int i = 0; i < A.rows; ++i)
    for (int k = 0; k < A.cols; ++k) {
      const double aik = A.at(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < B.cols; ++j) out.at(i, j) += aik * B.at(k, j);
    }
  return push(std::move(out), {a, b}, [a, b](Tape& t, ValueId out_id) {
    const Tensor& g = t.grad_of(out_id);
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_acc(a);  // g . B^T
      for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < B.cols; ++j) {
          const double gij = g.at(i, j);
          if (gij == 0.0) continue;
          for (int k = 0; k < A.cols; ++k) ga.at(i, k) += gij * B.at(k, j);
        }
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_acc(b);  // A^T . g
      for (int i = 0; i < A.rows; ++i)
        for (int k = 0; k < A.cols; ++k) {
          const double aik = A.at(i, k);
          if (aik == 0.0) continue;
          for (int j = 0; j < B.cols; ++j) gb.at(k, j) += aik * g.at(i, j);
        }
    }
  });
}

namespace {
enum class Broadcast { None, Left, Right };  // which operand is the 1x1 scalar
}

// add/sub/mul_elem/div_elem share shape handling: same shape or 1x1 broadcast.
template <typename Fwd, typename Bwd>
static ValueId binary_elementwise(Tape& t, const char* name, ValueId a, ValueId b, Fwd fwd,
                                  Bwd bwd) {
  const Tensor& A = t.value(a);
  const Tensor& B = t.value(b);
  Broadcast bc = Broadcast::None;
  if (!A.same_shape(B)) {
    if (A.is_scalar())
      bc = Broadcast::Left;
    else if (B.is_scalar())
      bc = Broadcast::Right;
    else
      shape_error(name, A, B);
  }
  const Tensor& big = (bc == Broadcast::Left) ? B : A;
  Tensor out(big.rows, big.cols);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = (bc == Broadcast::Left) ? A.data[0] : A.data[i];
    const double y = (bc == Broadcast::Right) ? B.data[0] : B.data[i];
    out.data[i] = fwd(x, y);
  }
  return t.record(std::move(out), {a, b}, [a, b, bc, bwd](Tape& tt, ValueId out_id) {
    const Tensor& g = tt.grad_of(out_id);
    const Tensor& A = tt.value(a);
    const Tensor& B = tt.value(b);
    const bool need_a = tt.requires_grad(a);
    const bool need_b = tt.requires_grad(b);
    if (!need_a && !need_b) return;
    Tensor* ga = need_a ? &tt.grad_acc(a) : nullptr;
    Tensor* gb = need_b ? &tt.grad_acc(b) : nullptr;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = (bc == Broadcast::Left) ? A.data[0] : A.data[i];
      const double y = (bc == Broadcast::Right) ? B.data[0] : B.data[i];
      auto [dx, dy] = bwd(x, y);
      if (ga) ga->data[bc == Broadcast::Left ? 0 : i] += dx * g.data[i];
      if (gb) gb->data[bc == Broadcast::Right ? 0 : i] += dy * g.data[i];
    }
  });
}

ValueId Tape::add(ValueId a, ValueId b) {
  return binary_elementwise(
      *this, "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return std::pair<double, double>{1.0, 1.0}; });
}

ValueId Tape::sub(ValueId a, ValueId b) {
  return binary_elementwise(
      *this, "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return std::pair<double, double>{1.0, -1.0}; });
}

ValueId Tape::mul_elem(ValueId a, ValueId b) {
  return binary_elementwise(
      *this, "mul_elem", a, b, [](double x, double y) { return x * y; },
      [](double x, double y) { return std::pair<double, double>{y, x}; });
}

ValueId Tape::div_elem(ValueId a, ValueId b) {
  return binary_elementwise(
      *this, "div_elem", a, b, [](double x, double y) { return x / y; },
      [](double x, double y) {
        return std::pair<double, double>{1.0 / y, -x / (y * y)};
      });
}

ValueId Tape::scalar_mul(ValueId a, double c) {
  const Tensor& A = value(a);
  Tensor out = A;
  for (double& v : out.data) v *= c;
  return push(std::move(out), {a}, [a, c](Tape& t, ValueId out_id) {
    const Tensor& g = t.grad_of(out_id);
    Tensor& ga = t.grad_acc(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += c * g.data[i];
  });
}

ValueId Tape::add_scalar(ValueId a, double c) {
  const Tensor& A = value(a);
  Tensor out = A;
  for (double& v : out.data) v += c;
  return push(std::move(out), {a}, [a](Tape& t, ValueId out_id) {
    const Tensor& g = t.grad_of(out_id);
    Tensor& ga = t.grad_acc(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
  });
}

// ---------------------------------------------------------------------------
// elementwise nonlinearities

template <typename Fwd, typename Dx>
static ValueId unary_elementwise(Tape& t, ValueId a, Fwd fwd, Dx dx) {
  const Tensor& A = t.value(a);
  Tensor out(A.rows, A.cols);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = fwd(A.data[i]);
  return t.record(std::move(out), {a}, [a, dx](Tape& tt, ValueId out_id) {
    const Tensor& g = tt.grad_of(out_id);
    const Tensor& A = tt.value(a);
    Tensor& ga = tt.grad_acc(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += dx(A.data[i]) * g.data[i];
  });
}

ValueId Tape::relu(ValueId a) {
  return unary_elementwise(
      *this, a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

ValueId Tape::leaky_relu(ValueId a, double slope) {
  return unary_elementwise(
      *this, a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x) { return x > 0.0 ? 1.0 : slope; });
}

ValueId Tape::exp(ValueId a) {
  return unary_elementwise(
      *this, a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

ValueId Tape::log(ValueId a) {
  const Tensor& A = value(a);
  for (std::size_t i = 0; i < A.size(); ++i)
    if (!(A.data[i] > 0.0)) {
      std::ostringstream os;
      os << "log: entry " << A.data[i] << " at flat index " << i << " is not positive";
      throw std::domain_error(os.str());
    }
  return unary_elementwise(
      *this, a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

ValueId Tape::pow_elem(ValueId a, double exponent) {
  const Tensor& A = value(a);
  const bool integral = exponent == std::floor(exponent);
  if (!integral) {
    for (std::size_t i = 0; i < A.size(); ++i)
      if (A.data[i] < 0.0) {
        std::ostringstream os;
        os << "pow_elem: negative base " << A.data[i] << " at flat index " << i
           << " with non-integer exponent " << exponent;
        throw std::domain_error(os.str());
      }
  }
  return unary_elementwise(
      *this, a, [exponent](double x) { return std::pow(x, exponent); },
      [exponent](double x) { return exponent * std::pow(x, exponent - 1.0); });
}

ValueId Tape::softplus(ValueId a) {
  return unary_elementwise(
      *this, a, [](double x) { return softplus_d(x); },
      [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}

// ---------------------------------------------------------------------------
// structure ops

ValueId Tape::gather_rows(ValueId a, std::vector<int> indices) {
  const Tensor& A = value(a);
  for (int idx : indices)
    if (idx < 0 || idx >= A.rows)
      throw std::invalid_argument("gather_rows: index " + std::to_string(idx) + " out of [0," +
                                  std::to_string(A.rows) + ")");
  Tensor out(static_cast<int>(indices.size()), A.cols);
  for (int e = 0; e < out.rows; ++e)
    for (int j = 0; j < A.cols; ++j) out.at(e, j) = A.at(indices[e], j);
  return push(std::move(out), {a},
              [a, idx = std::move(indices)](Tape& t, ValueId out_id) {
                const Tensor& g = t.grad_of(out_id);
                Tensor& ga = t.grad_acc(a);
                for (int e = 0; e < g.rows; ++e)
                  for (int j = 0; j < g.cols; ++j) ga.at(idx[e], j) += g.at(e, j);
              });
}

ValueId Tape::mul_rows(ValueId a, ValueId s) {
  const Tensor& A = value(a);
  const Tensor& S = value(s);
  if (S.cols != 1 || S.rows != A.rows) shape_error("mul_rows", A, S);
  Tensor out(A.rows, A.cols);
  for (int i = 0; i < A.rows; ++i) {
    const double w = S.at(i, 0);
    for (int j = 0; j < A.cols; ++j) out.at(i, j) = w * A.at(i, j);
  }
  return push(std::move(out), {a, s}, [a, s](Tape& t, ValueId out_id) {
    const Tensor& g = t.grad_of(out_id);
    const Tensor& A = t.value(a);
    const Tensor& S = t.value(s);
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_acc(a);
      for (int i = 0; i < A.rows; ++i) {
        const double w = S.at(i, 0);
        for (int j = 0; j < A.cols; ++j) ga.at(i, j) += w * g.at(i, j);
      }
    }
    if (t.requires_grad(s)) {
      Tensor& gs = t.grad_acc(s);
      for (int i = 0; i < A.rows; ++i) {
        double acc = 0.0;
        for (int j = 0; j < A.cols; ++j) acc += A.at(i, j) * g.at(i, j);
        gs.at(i, 0) += acc;
      }
    }
  });
}

ValueId Tape::concat_cols(const std::vector<ValueId>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  int rows = value(parts.front()).rows;
  int cols = 0;
  for (ValueId p : parts) {
    if (value(p).rows != rows) shape_error("concat_cols", value(parts.front()), value(p));
    cols += value(p).cols;
  }
  Tensor out(rows, cols);
  int off = 0;
  for (ValueId p : parts) {
    const Tensor& P = value(p);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < P.cols; ++j) out.at(i, off + j) = P.at(i, j);
    off += P.cols;
  }
  return push(std::move(out), parts, [parts](Tape& t, ValueId out_id) {
    const Tensor& g = t.grad_of(out_id);
    int off = 0;
    for (ValueId p : parts) {
      const Tensor& P = t.value(p);
      if (t.requires_grad(p)) {
        Tensor& gp = t.grad_acc(p);
        for (int i = 0; i < P.rows; ++i)
          for (int j = 0; j < P.cols; ++j) gp.at(i, j) += g.at(i, off + j);
      }
      off += P.cols;
    }
  });
}

ValueId Tape::row_softmax(ValueId a) {
  const Tensor& A = value(a);
  Tensor out(A.rows, A.cols);
  for (int i = 0; i < A.rows; ++i) {
    double m = A.at(i, 0);
    for (int j = 1; j < A.cols; ++j) m = std::max(m, A.at(i, j));
    double z = 0.0;
    for (int j = 0; j < A.cols; ++j) z += std::exp(A.at(i, j) - m);
    for (int j = 0; j < A.cols; ++j) out.at(i, j) = std::exp(A.at(i, j) - m) / z;
  }
  return push(std::move(out), {a}, [a](Tape& t, ValueId out_id) {
    const Tensor& g = t.grad_of(out_id);
    const Tensor& s = t.value(out_id);
    Tensor& ga = t.grad_acc(a);
    for (int i = 0; i < s.rows; ++i) {
      double dot = 0.0;
      for (int j = 0; j < s.cols; ++j) dot += g.at(i, j) * s.at(i, j);
      for (int j = 0; j < s.cols; ++j) ga.at(i, j) += s.at(i, j) * (g.at(i, j) - dot);
    }
  });
}

ValueId Tape::sum_all(ValueId a) {
  const Tensor& A = value(a);
  double acc = 0.0;
  for (double v : A.data) acc += v;
  return push(Tensor::scalar(acc), {a}, [a](Tape& t, ValueId out_id) {
    const double g = t.grad_of(out_id).data[0];
    Tensor& ga = t.grad_acc(a);
    for (double& v : ga.data) v += g;
  });
}

ValueId Tape::dropout(ValueId a, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout: rate " + std::to_string(rate) + " outside [0,1)");
  const Tensor& A = value(a);
  if (rate == 0.0)
    return push(A, {a}, [a](Tape& t, ValueId out_id) {
      const Tensor& g = t.grad_of(out_id);
      Tensor& ga = t.grad_acc(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
    });
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(A.size());
  for (double& m : mask) m = unif(rng) < rate ? 0.0 : keep_scale;
  Tensor out(A.rows, A.cols);
  for (std::size_t i = 0; i < A.size(); ++i) out.data[i] = A.data[i] * mask[i];
  return push(std::move(out), {a}, [a, mask = std::move(mask)](Tape& t, ValueId out_id) {
    const Tensor& g = t.grad_of(out_id);
    Tensor& ga = t.grad_acc(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += mask[i] * g.data[i];
  });
}

// ---------------------------------------------------------------------------
// segment reductions

ValueId Tape::segment_sum(ValueId edge_values, std::vector<int> row_offsets) {
  const Tensor& E = value(edge_values);
  check_offsets(row_offsets, E.rows);
  const int n = static_cast<int>(row_offsets.size()) - 1;
  Tensor out(n, E.cols);
  for (int v = 0; v < n; ++v)
    for (int e = row_offsets[v]; e < row_offsets[v + 1]; ++e)
      for (int j = 0; j < E.cols; ++j) out.at(v, j) += E.at(e, j);
  return push(std::move(out), {edge_values},
              [edge_values, off = std::move(row_offsets)](Tape& t, ValueId out_id) {
                const Tensor& g = t.grad_of(out_id);
                Tensor& ge = t.grad_acc(edge_values);
                const int n = static_cast<int>(off.size()) - 1;
                for (int v = 0; v < n; ++v)
                  for (int e = off[v]; e < off[v + 1]; ++e)
                    for (int j = 0; j < g.cols; ++j) ge.at(e, j) += g.at(v, j);
              });
}

ValueId Tape::segment_max(ValueId edge_values, std::vector<int> row_offsets) {
  const Tensor& E = value(edge_values);
  check_offsets(row_offsets, E.rows);
  const int n = static_cast<int>(row_offsets.size()) - 1;
  for (int v = 0; v < n; ++v)
    if (row_offsets[v] == row_offsets[v + 1])
      throw std::invalid_argument("segment_max: empty segment " + std::to_string(v));
  Tensor out(n, E.cols);
  std::vector<int> argmax(static_cast<std::size_t>(n) * E.cols);
  for (int v = 0; v < n; ++v)
    for (int j = 0; j < E.cols; ++j) {
      int best = row_offsets[v];
      double bv = E.at(best, j);
      for (int e = row_offsets[v] + 1; e < row_offsets[v + 1]; ++e)
        if (E.at(e, j) > bv) {  // strict: ties keep the lowest edge index
          bv = E.at(e, j);
          best = e;
        }
      out.at(v, j) = bv;
      argmax[static_cast<std::size_t>(v) * E.cols + j] = best;
    }
  return push(std::move(out), {edge_values},
              [edge_values, am = std::move(argmax)](Tape& t, ValueId out_id) {
                const Tensor& g = t.grad_of(out_id);
                Tensor& ge = t.grad_acc(edge_values);
                for (int v = 0; v < g.rows; ++v)
                  for (int j = 0; j < g.cols; ++j)
                    ge.at(am[static_cast<std::size_t>(v) * g.cols + j], j) += g.at(v, j);
              });
}

ValueId Tape::segment_softmax(ValueId edge_values, std::vector<int> row_offsets, double gamma) {
  if (gamma < 0.0)
    throw std::invalid_argument("segment_softmax: gamma " + std::to_string(gamma) + " < 0");
  const Tensor& E = value(edge_values);
  check_offsets(row_offsets, E.rows);
  const int n = static_cast<int>(row_offsets.size()) - 1;
  Tensor out(E.rows, E.cols);
  for (int v = 0; v < n; ++v) {
    const int lo = row_offsets[v], hi = row_offsets[v + 1];
    if (lo == hi) continue;
    for (int j = 0; j < E.cols; ++j) {
      double m = E.at(lo, j);
      for (int e = lo + 1; e < hi; ++e) m = std::max(m, E.at(e, j));
      double z = 0.0;
      for (int e = lo; e < hi; ++e) z += std::exp(gamma * (E.at(e, j) - m));
      for (int e = lo; e < hi; ++e) out.at(e, j) = std::exp(gamma * (E.at(e, j) - m)) / z;
    }
  }
  return push(std::move(out), {edge_values},
              [edge_values, off = std::move(row_offsets), gamma](Tape& t, ValueId out_id) {
                const Tensor& g = t.grad_of(out_id);
                const Tensor& s = t.value(out_id);
                Tensor& ge = t.grad_acc(edge_values);
                const int n = static_cast<int>(off.size()) - 1;
                for (int v = 0; v < n; ++v) {
                  const int lo = off[v], hi = off[v + 1];
                  for (int j = 0; j < g.cols; ++j) {
                    double dot = 0.0;
                    for (int e = lo; e < hi; ++e) dot += g.at(e, j) * s.at(e, j);
                    for (int e = lo; e < hi; ++e)
                      ge.at(e, j) += gamma * s.at(e, j) * (g.at(e, j) - dot);
                  }
                }
              });
}

// ---------------------------------------------------------------------------

GradReport grad_check(const std::function<ValueId(Tape&, ValueId)>& build, const Tensor& x,
                      double step) {
  Tensor analytic_grad;
  {
    Tape t;
    ValueId xid = t.leaf(x, true);
    ValueId loss = build(t, xid);
    if (!t.value(loss).is_scalar())
      throw std::invalid_argument("grad_check: function output is not scalar");
    t.backward(loss);
    analytic_grad = t.grad(xid);
  }
  auto eval = [&](const Tensor& point) {
    Tape t;
    ValueId xid = t.leaf(point, false);
    double v = t.value(build(t, xid)).scalar_value();
    if (!std::isfinite(v)) throw std::domain_error("grad_check: function not finite near x");
    return v;
  };
  GradReport report;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe.data[i];
    probe.data[i] = orig + step;
    const double up = eval(probe);
    probe.data[i] = orig - step;
    const double down = eval(probe);
    probe.data[i] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double analytic = analytic_grad.data[i];
    const double rel =
        std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
    if (rel >= report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_coordinate = static_cast<int>(i);
      report.analytic = analytic;
      report.numeric = numeric;
    }
  }
  return report;
}

}  // namespace nagg
