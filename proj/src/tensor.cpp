#include "iagnn/tensor.hpp"

#include <cmath>

#include "iagnn/errors.hpp"
#include "iagnn/rng.hpp"

namespace iagnn {

std::string Tensor::shape_str() const {
  return "(" + std::to_string(rows) + " x " + std::to_string(cols) + ")";
}

Tensor Tensor::filled(int r, int c, double v) {
  Tensor t(r, c);
  t.fill(v);
  return t;
}

Tensor Tensor::gaussian(int r, int c, double mean, double stddev, Rng& rng) {
  Tensor t(r, c);
  for (double& x : t.data) x = rng.gaussian(mean, stddev);
  return t;
}

Tensor Tensor::from(std::initializer_list<std::initializer_list<double>> v) {
  const int r = static_cast<int>(v.size());
  const int c = r > 0 ? static_cast<int>(v.begin()->size()) : 0;
  Tensor t(r, c);
  int i = 0;
  for (const auto& rowv : v) {
    if (static_cast<int>(rowv.size()) != c)
      throw NumericError("Tensor::from: ragged initializer");
    int j = 0;
    for (double x : rowv) t.at(i, j++) = x;
    ++i;
  }
  return t;
}

void Tensor::fill(double v) {
  for (double& x : data) x = v;
}

void Tensor::add_scaled(const Tensor& o, double s) {
  check_same_shape(*this, o, "add_scaled");
  for (std::size_t i = 0; i < data.size(); ++i) data[i] += s * o.data[i];
}

bool Tensor::all_finite() const {
  for (double x : data)
    if (!std::isfinite(x)) return false;
  return true;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw NumericError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                       b.shape_str());
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols != b.rows)
    throw NumericError("matmul: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  Tensor out(a.rows, b.cols);
  // i-k-j order keeps the inner loop contiguous in both b and out
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double* orow = out.row(i);
    for (int k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.row(k);
      for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  Tensor out(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

double dot_all(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "dot_all");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

}  // namespace iagnn
