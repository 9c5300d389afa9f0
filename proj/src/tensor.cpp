#include "nagg/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace nagg {

namespace {
std::atomic<bool> g_finite_checks{false};
}

Tensor::Tensor(int r, int c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != static_cast<std::size_t>(r) * c) {
    std::ostringstream os;
    os << "tensor init: " << data.size() << " values for shape " << r << "x" << c;
    throw std::invalid_argument(os.str());
  }
}

Tensor Tensor::scalar(double v) {
  Tensor t(1, 1);
  t.data[0] = v;
  return t;
}

Tensor Tensor::full(int r, int c, double v) {
  Tensor t(r, c);
  std::fill(t.data.begin(), t.data.end(), v);
  return t;
}

Tensor Tensor::identity(int n) {
  Tensor t(n, n);
  for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows_in) {
  if (rows_in.empty()) return Tensor();
  Tensor t(static_cast<int>(rows_in.size()), static_cast<int>(rows_in.front().size()));
  for (int i = 0; i < t.rows; ++i) {
    if (static_cast<int>(rows_in[i].size()) != t.cols) {
      std::ostringstream os;
      os << "tensor from_rows: row " << i << " has " << rows_in[i].size() << " entries, expected "
         << t.cols;
      throw std::invalid_argument(os.str());
    }
    for (int j = 0; j < t.cols; ++j) t.at(i, j) = rows_in[i][j];
  }
  return t;
}

double Tensor::scalar_value() const {
  if (!is_scalar()) throw std::invalid_argument("scalar_value on tensor of shape " + shape_str());
  return data[0];
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << rows << "x" << cols;
  return os.str();
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled); }

bool finite_checks_enabled() { return g_finite_checks.load(); }

void require_finite(const Tensor& t, const char* where) {
  if (!g_finite_checks.load()) return;
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    if (!std::isfinite(t.data[i])) {
      std::ostringstream os;
      os << where << ": non-finite value at flat index " << i << " (shape " << t.shape_str() << ")";
      throw std::domain_error(os.str());
    }
  }
}

}  // namespace nagg
