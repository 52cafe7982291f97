#include "iagnn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "iagnn/errors.hpp"

namespace iagnn {

namespace {

void check_offsets(const std::vector<int>& offsets, int rows, const char* op) {
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != rows)
    throw NumericError(std::string(op) + ": bad segment offsets for " + std::to_string(rows) +
                       " rows");
  for (std::size_t s = 1; s < offsets.size(); ++s)
    if (offsets[s] <= offsets[s - 1])
      throw NumericError(std::string(op) + ": empty segment " + std::to_string(s - 1));
}

void check_index_range(const std::vector<int>& idx, int rows, const char* op) {
  for (int i : idx)
    if (i < 0 || i >= rows)
      throw NumericError(std::string(op) + ": index " + std::to_string(i) + " out of range [0, " +
                         std::to_string(rows) + ")");
}

#ifndef NDEBUG
void debug_check_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) throw NumericError(std::string(op) + ": non-finite value");
}
#define IAGNN_CHECK_FINITE(t, op) debug_check_finite((t), (op))
#else
#define IAGNN_CHECK_FINITE(t, op) ((void)0)
#endif

}  // namespace

void Parameter::zero_grad() {
  if (sparse_rows) {
    for (int r : touched) {
      double* g = grad.row(r);
      std::fill(g, g + grad.cols, 0.0);
    }
  } else {
    grad.fill(0.0);
  }
  touched.clear();
}

Tape::Ref Tape::push(Tensor value, std::function<void(Tape&, Node&)> back) {
  IAGNN_CHECK_FINITE(value, "tape node");
  Node n;
  n.grad = Tensor(value.rows, value.cols);
  n.value = std::move(value);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<Ref>(nodes_.size() - 1);
}

Tape::Ref Tape::constant(Tensor v) { return push(std::move(v), nullptr); }

Tape::Ref Tape::param(Parameter& p) {
  Ref r = push(p.value, nullptr);
  dense_uses_.push_back({&p, r});
  return r;
}

Tape::Ref Tape::gather_rows(Parameter& table, std::vector<int> idx) {
  check_index_range(idx, table.value.rows, "gather_rows");
  Tensor out(static_cast<int>(idx.size()), table.value.cols);
  for (std::size_t k = 0; k < idx.size(); ++k)
    std::copy(table.value.row(idx[k]), table.value.row(idx[k]) + table.value.cols, out.row(static_cast<int>(k)));
  Ref r = push(std::move(out), nullptr);
  gather_uses_.push_back({&table, std::move(idx), r});
  return r;
}

Tape::Ref Tape::matmul(Ref a, Ref b) {
  Tensor out = iagnn::matmul(value(a), value(b));
  return push(std::move(out), [a, b](Tape& t, Node& self) {
    // dA = G B^T, dB = A^T G
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    Tensor& ga = t.node(a).grad;
    Tensor& gb = t.node(b).grad;
    const Tensor& g = self.grad;
    for (int i = 0; i < av.rows; ++i)
      for (int j = 0; j < bv.cols; ++j) {
        const double gij = g.at(i, j);
        if (gij == 0.0) continue;
        for (int k = 0; k < av.cols; ++k) {
          ga.at(i, k) += gij * bv.at(k, j);
          gb.at(k, j) += gij * av.at(i, k);
        }
      }
  });
}

Tape::Ref Tape::transpose(Ref a) {
  return push(iagnn::transpose(value(a)), [a](Tape& t, Node& self) {
    Tensor& ga = t.node(a).grad;
    for (int i = 0; i < self.grad.rows; ++i)
      for (int j = 0; j < self.grad.cols; ++j) ga.at(j, i) += self.grad.at(i, j);
  });
}

Tape::Ref Tape::concat_cols(const std::vector<Ref>& xs) {
  if (xs.empty()) throw NumericError("concat_cols: no inputs");
  const int rows = value(xs[0]).rows;
  int cols = 0;
  for (Ref x : xs) {
    if (value(x).rows != rows)
      throw NumericError("concat_cols: shape mismatch " + value(xs[0]).shape_str() + " vs " +
                         value(x).shape_str());
    cols += value(x).cols;
  }
  Tensor out(rows, cols);
  int c0 = 0;
  for (Ref x : xs) {
    const Tensor& v = value(x);
    for (int i = 0; i < rows; ++i)
      std::copy(v.row(i), v.row(i) + v.cols, out.row(i) + c0);
    c0 += v.cols;
  }
  std::vector<Ref> parts(xs);
  return push(std::move(out), [parts](Tape& t, Node& self) {
    int c0 = 0;
    for (Ref x : parts) {
      Tensor& gx = t.node(x).grad;
      for (int i = 0; i < gx.rows; ++i)
        for (int j = 0; j < gx.cols; ++j) gx.at(i, j) += self.grad.at(i, c0 + j);
      c0 += gx.cols;
    }
  });
}

Tape::Ref Tape::concat_rows(const std::vector<Ref>& xs) {
  if (xs.empty()) throw NumericError("concat_rows: no inputs");
  const int cols = value(xs[0]).cols;
  int rows = 0;
  for (Ref x : xs) {
    if (value(x).cols != cols)
      throw NumericError("concat_rows: shape mismatch " + value(xs[0]).shape_str() + " vs " +
                         value(x).shape_str());
    rows += value(x).rows;
  }
  Tensor out(rows, cols);
  int r0 = 0;
  for (Ref x : xs) {
    const Tensor& v = value(x);
    for (int i = 0; i < v.rows; ++i)
      std::copy(v.row(i), v.row(i) + cols, out.row(r0 + i));
    r0 += v.rows;
  }
  std::vector<Ref> parts(xs);
  return push(std::move(out), [parts](Tape& t, Node& self) {
    int r0 = 0;
    for (Ref x : parts) {
      Tensor& gx = t.node(x).grad;
      for (int i = 0; i < gx.rows; ++i)
        for (int j = 0; j < gx.cols; ++j) gx.at(i, j) += self.grad.at(r0 + i, j);
      r0 += gx.rows;
    }
  });
}

Tape::Ref Tape::slice_rows(Ref a, int row0, int nrows) {
  const Tensor& v = value(a);
  if (row0 < 0 || nrows < 0 || row0 + nrows > v.rows)
    throw NumericError("slice_rows: [" + std::to_string(row0) + ", " +
                       std::to_string(row0 + nrows) + ") out of " + v.shape_str());
  Tensor out(nrows, v.cols);
  for (int i = 0; i < nrows; ++i)
    std::copy(v.row(row0 + i), v.row(row0 + i) + v.cols, out.row(i));
  return push(std::move(out), [a, row0](Tape& t, Node& self) {
    Tensor& ga = t.node(a).grad;
    for (int i = 0; i < self.grad.rows; ++i)
      for (int j = 0; j < self.grad.cols; ++j) ga.at(row0 + i, j) += self.grad.at(i, j);
  });
}

Tape::Ref Tape::gather_node_rows(Ref a, std::vector<int> idx) {
  const Tensor& v = value(a);
  check_index_range(idx, v.rows, "gather_node_rows");
  Tensor out(static_cast<int>(idx.size()), v.cols);
  for (std::size_t k = 0; k < idx.size(); ++k)
    std::copy(v.row(idx[k]), v.row(idx[k]) + v.cols, out.row(static_cast<int>(k)));
  return push(std::move(out), [a, idx = std::move(idx)](Tape& t, Node& self) {
    Tensor& ga = t.node(a).grad;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const double* g = self.grad.row(static_cast<int>(k));
      double* dst = ga.row(idx[k]);
      for (int j = 0; j < ga.cols; ++j) dst[j] += g[j];
    }
  });
}

Tape::Ref Tape::scatter_add_rows(Ref a, std::vector<int> dst, int out_rows) {
  const Tensor& v = value(a);
  if (static_cast<int>(dst.size()) != v.rows)
    throw NumericError("scatter_add_rows: " + std::to_string(dst.size()) + " indices for " +
                       v.shape_str());
  check_index_range(dst, out_rows, "scatter_add_rows");
  Tensor out(out_rows, v.cols);
  for (std::size_t k = 0; k < dst.size(); ++k) {
    const double* src = v.row(static_cast<int>(k));
    double* d = out.row(dst[k]);
    for (int j = 0; j < v.cols; ++j) d[j] += src[j];
  }
  return push(std::move(out), [a, dst = std::move(dst)](Tape& t, Node& self) {
    Tensor& ga = t.node(a).grad;
    for (std::size_t k = 0; k < dst.size(); ++k) {
      const double* g = self.grad.row(dst[k]);
      double* d = ga.row(static_cast<int>(k));
      for (int j = 0; j < ga.cols; ++j) d[j] += g[j];
    }
  });
}

Tape::Ref Tape::add(Ref a, Ref b) {
  check_same_shape(value(a), value(b), "add");
  Tensor out = value(a);
  out.add_scaled(value(b), 1.0);
  return push(std::move(out), [a, b](Tape& t, Node& self) {
    t.node(a).grad.add_scaled(self.grad, 1.0);
    t.node(b).grad.add_scaled(self.grad, 1.0);
  });
}

Tape::Ref Tape::sub(Ref a, Ref b) {
  check_same_shape(value(a), value(b), "sub");
  Tensor out = value(a);
  out.add_scaled(value(b), -1.0);
  return push(std::move(out), [a, b](Tape& t, Node& self) {
    t.node(a).grad.add_scaled(self.grad, 1.0);
    t.node(b).grad.add_scaled(self.grad, -1.0);
  });
}

Tape::Ref Tape::mul(Ref a, Ref b) {
  check_same_shape(value(a), value(b), "mul");
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= value(b).data[i];
  return push(std::move(out), [a, b](Tape& t, Node& self) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    Tensor& ga = t.node(a).grad;
    Tensor& gb = t.node(b).grad;
    for (std::size_t i = 0; i < self.grad.data.size(); ++i) {
      ga.data[i] += self.grad.data[i] * bv.data[i];
      gb.data[i] += self.grad.data[i] * av.data[i];
    }
  });
}

Tape::Ref Tape::scale_rows(Ref m, Ref col) {
  const Tensor& mv = value(m);
  const Tensor& cv = value(col);
  if (cv.cols != 1 || cv.rows != mv.rows)
    throw NumericError("scale_rows: shape mismatch " + mv.shape_str() + " vs " + cv.shape_str());
  Tensor out = mv;
  for (int i = 0; i < out.rows; ++i) {
    const double s = cv.at(i, 0);
    double* r = out.row(i);
    for (int j = 0; j < out.cols; ++j) r[j] *= s;
  }
  return push(std::move(out), [m, col](Tape& t, Node& self) {
    const Tensor& mv = t.value(m);
    const Tensor& cv = t.value(col);
    Tensor& gm = t.node(m).grad;
    Tensor& gc = t.node(col).grad;
    for (int i = 0; i < mv.rows; ++i) {
      const double s = cv.at(i, 0);
      const double* g = self.grad.row(i);
      const double* mr = mv.row(i);
      double* gmr = gm.row(i);
      double acc = 0.0;
      for (int j = 0; j < mv.cols; ++j) {
        gmr[j] += g[j] * s;
        acc += g[j] * mr[j];
      }
      gc.at(i, 0) += acc;
    }
  });
}

Tape::Ref Tape::sigmoid(Ref a) {
  Tensor out = value(a);
  for (double& x : out.data) x = 1.0 / (1.0 + std::exp(-x));
  return push(std::move(out), [a](Tape& t, Node& self) {
    Tensor& ga = t.node(a).grad;
    for (std::size_t i = 0; i < self.value.data.size(); ++i) {
      const double y = self.value.data[i];
      ga.data[i] += self.grad.data[i] * y * (1.0 - y);
    }
  });
}

Tape::Ref Tape::leaky_relu(Ref a, double negative_slope) {
  Tensor out = value(a);
  for (double& x : out.data) x = x >= 0.0 ? x : negative_slope * x;
  return push(std::move(out), [a, negative_slope](Tape& t, Node& self) {
    const Tensor& av = t.value(a);
    Tensor& ga = t.node(a).grad;
    for (std::size_t i = 0; i < av.data.size(); ++i)
      ga.data[i] += self.grad.data[i] * (av.data[i] >= 0.0 ? 1.0 : negative_slope);
  });
}

Tape::Ref Tape::sum_all(Ref a) {
  double s = 0.0;
  for (double x : value(a).data) s += x;
  Tensor out(1, 1);
  out.at(0, 0) = s;
  return push(std::move(out), [a](Tape& t, Node& self) {
    Tensor& ga = t.node(a).grad;
    const double g = self.grad.at(0, 0);
    for (double& x : ga.data) x += g;
  });
}

Tape::Ref Tape::mean_rows(Ref a) {
  const Tensor& v = value(a);
  if (v.rows == 0) throw NumericError("mean_rows: empty input");
  Tensor out(1, v.cols);
  for (int i = 0; i < v.rows; ++i)
    for (int j = 0; j < v.cols; ++j) out.at(0, j) += v.at(i, j);
  for (int j = 0; j < v.cols; ++j) out.at(0, j) /= v.rows;
  return push(std::move(out), [a](Tape& t, Node& self) {
    Tensor& ga = t.node(a).grad;
    const double inv = 1.0 / ga.rows;
    for (int i = 0; i < ga.rows; ++i)
      for (int j = 0; j < ga.cols; ++j) ga.at(i, j) += self.grad.at(0, j) * inv;
  });
}

Tape::Ref Tape::segment_softmax(Ref scores, std::vector<int> offsets) {
  const Tensor& v = value(scores);
  if (v.cols != 1) throw NumericError("segment_softmax: expected column, got " + v.shape_str());
  check_offsets(offsets, v.rows, "segment_softmax");
  Tensor out(v.rows, 1);
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const int b = offsets[s], e = offsets[s + 1];
    double mx = v.at(b, 0);
    for (int i = b + 1; i < e; ++i) mx = std::max(mx, v.at(i, 0));
    double z = 0.0;
    for (int i = b; i < e; ++i) {
      out.at(i, 0) = std::exp(v.at(i, 0) - mx);
      z += out.at(i, 0);
    }
    for (int i = b; i < e; ++i) out.at(i, 0) /= z;
  }
  return push(std::move(out), [scores, offsets = std::move(offsets)](Tape& t, Node& self) {
    Tensor& gs = t.node(scores).grad;
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
      const int b = offsets[s], e = offsets[s + 1];
      double dot = 0.0;
      for (int i = b; i < e; ++i) dot += self.grad.at(i, 0) * self.value.at(i, 0);
      for (int i = b; i < e; ++i)
        gs.at(i, 0) += self.value.at(i, 0) * (self.grad.at(i, 0) - dot);
    }
  });
}

Tape::Ref Tape::segment_sum_rows(Ref a, std::vector<int> offsets) {
  const Tensor& v = value(a);
  check_offsets(offsets, v.rows, "segment_sum_rows");
  const int S = static_cast<int>(offsets.size()) - 1;
  Tensor out(S, v.cols);
  for (int s = 0; s < S; ++s)
    for (int i = offsets[s]; i < offsets[s + 1]; ++i)
      for (int j = 0; j < v.cols; ++j) out.at(s, j) += v.at(i, j);
  return push(std::move(out), [a, offsets = std::move(offsets)](Tape& t, Node& self) {
    Tensor& ga = t.node(a).grad;
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s)
      for (int i = offsets[s]; i < offsets[s + 1]; ++i)
        for (int j = 0; j < ga.cols; ++j)
          ga.at(i, j) += self.grad.at(static_cast<int>(s), j);
  });
}

Tape::Ref Tape::neg_log_softmax(Ref scores, int label_pos) {
  const Tensor& v = value(scores);
  if (v.cols != 1) throw NumericError("neg_log_softmax: expected column, got " + v.shape_str());
  if (label_pos < 0 || label_pos >= v.rows)
    throw NumericError("neg_log_softmax: label position " + std::to_string(label_pos) +
                       " out of " + std::to_string(v.rows));
  double mx = v.at(0, 0);
  for (int i = 1; i < v.rows; ++i) mx = std::max(mx, v.at(i, 0));
  double z = 0.0;
  for (int i = 0; i < v.rows; ++i) z += std::exp(v.at(i, 0) - mx);
  Tensor out(1, 1);
  out.at(0, 0) = mx + std::log(z) - v.at(label_pos, 0);
  return push(std::move(out), [scores, label_pos, mx, z](Tape& t, Node& self) {
    const Tensor& v = t.value(scores);
    Tensor& gs = t.node(scores).grad;
    const double g = self.grad.at(0, 0);
    for (int i = 0; i < v.rows; ++i) {
      const double p = std::exp(v.at(i, 0) - mx) / z;
      gs.at(i, 0) += g * (p - (i == label_pos ? 1.0 : 0.0));
    }
  });
}

Tape::Ref Tape::bce_with_logits(Ref scores, int label_pos) {
  const Tensor& v = value(scores);
  if (v.cols != 1) throw NumericError("bce_with_logits: expected column, got " + v.shape_str());
  if (label_pos < 0 || label_pos >= v.rows)
    throw NumericError("bce_with_logits: label position " + std::to_string(label_pos) +
                       " out of " + std::to_string(v.rows));
  // sum_i max(s,0) - y*s + log(1 + exp(-|s|))
  double loss = 0.0;
  for (int i = 0; i < v.rows; ++i) {
    const double s = v.at(i, 0);
    const double y = i == label_pos ? 1.0 : 0.0;
    loss += std::max(s, 0.0) - y * s + std::log1p(std::exp(-std::abs(s)));
  }
  Tensor out(1, 1);
  out.at(0, 0) = loss;
  return push(std::move(out), [scores, label_pos](Tape& t, Node& self) {
    const Tensor& v = t.value(scores);
    Tensor& gs = t.node(scores).grad;
    const double g = self.grad.at(0, 0);
    for (int i = 0; i < v.rows; ++i) {
      const double sig = 1.0 / (1.0 + std::exp(-v.at(i, 0)));
      gs.at(i, 0) += g * (sig - (i == label_pos ? 1.0 : 0.0));
    }
  });
}

void Tape::backward(Ref root, double seed) {
  Node& r = nodes_[root];
  if (r.value.rows != 1 || r.value.cols != 1)
    throw NumericError("backward: root must be scalar, got " + r.value.shape_str());
  if (backward_ran_)
    throw NumericError("backward: already ran on this tape; combine roots instead");
  backward_ran_ = true;
  r.grad.at(0, 0) += seed;
  for (Ref i = root; i >= 0; --i)
    if (nodes_[i].back) nodes_[i].back(*this, nodes_[i]);
}

void Tape::accumulate_param_grads(double scale) {
  for (const DenseUse& u : dense_uses_)
    u.p->grad.add_scaled(nodes_[u.node].grad, scale);
  for (const GatherUse& u : gather_uses_) {
    const Tensor& g = nodes_[u.node].grad;
    for (std::size_t k = 0; k < u.idx.size(); ++k) {
      const double* src = g.row(static_cast<int>(k));
      double* dst = u.table->grad.row(u.idx[k]);
      for (int j = 0; j < g.cols; ++j) dst[j] += scale * src[j];
      u.table->touched.push_back(u.idx[k]);
    }
  }
}

}  // namespace iagnn
