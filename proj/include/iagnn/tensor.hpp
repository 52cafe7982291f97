#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace iagnn {

class Rng;

// Dense row-major matrix of 64-bit floats. Column vectors are (n, 1).
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  std::string shape_str() const;

  static Tensor zeros(int r, int c) { return Tensor(r, c); }
  static Tensor filled(int r, int c, double v);
  static Tensor gaussian(int r, int c, double mean, double stddev, Rng& rng);
  static Tensor from(std::initializer_list<std::initializer_list<double>> v);

  void fill(double v);
  void add_scaled(const Tensor& o, double s);  // this += s * o, shape-checked
  bool all_finite() const;
};

// Shape mismatches throw NumericError naming both shapes.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
double dot_all(const Tensor& a, const Tensor& b);  // flattened inner product

void check_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace iagnn
