#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace nagg {

/// Dense row-major 2-D array of doubles. The only tensor rank the engine
/// supports; vectors are n x 1, scalars 1 x 1.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}
  Tensor(int r, int c, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor zeros(int r, int c) { return Tensor(r, c); }
  static Tensor full(int r, int c, double v);
  static Tensor identity(int n);
  // Row-major literal, e.g. from_rows({{1,2},{3,4}}).
  static Tensor from_rows(const std::vector<std::vector<double>>& rows_in);

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  bool is_scalar() const { return rows == 1 && cols == 1; }
  double scalar_value() const;

  std::string shape_str() const;
  bool all_finite() const;
};

/// Toggle NaN/Inf screening at op outputs. Off by default; the test and
/// verification harnesses switch it on.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

/// Throws std::domain_error naming `where` and the first bad coordinate.
void require_finite(const Tensor& t, const char* where);

}  // namespace nagg
