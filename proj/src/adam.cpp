#include "iagnn/adam.hpp"

#include <algorithm>
#include <cmath>

#include "iagnn/errors.hpp"

namespace iagnn {

Adam::Adam(std::vector<Parameter*> params, AdamConfig config) : config_(config) {
  for (Parameter* p : params) {
    Slot s{p, Tensor(p->value.rows, p->value.cols), Tensor(p->value.rows, p->value.cols), {}};
    if (p->sparse_rows) s.row_step.assign(p->value.rows, 0);
    slots_.push_back(std::move(s));
  }
}

void Adam::update_row(Slot& slot, int row, double lr, double bc1, double bc2) {
  const int cols = slot.p->value.cols;
  const double* g = slot.p->grad.row(row);
  double* m = slot.m.row(row);
  double* v = slot.v.row(row);
  double* theta = slot.p->value.row(row);
  for (int c = 0; c < cols; ++c) {
    if (!std::isfinite(g[c]))
      throw NumericError("adam_step: non-finite gradient in " + slot.p->name + " at (" +
                         std::to_string(row) + ", " + std::to_string(c) + ")");
    m[c] = config_.beta1 * m[c] + (1.0 - config_.beta1) * g[c];
    v[c] = config_.beta2 * v[c] + (1.0 - config_.beta2) * g[c] * g[c];
    theta[c] -= lr * (m[c] / bc1) / (std::sqrt(v[c] / bc2) + config_.eps);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (Slot& slot : slots_) {
    if (slot.p->sparse_rows) {
      std::vector<int> rows = slot.p->touched;
      std::sort(rows.begin(), rows.end());
      rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
      for (int r : rows) {
        // decay the moments for the skipped zero-gradient steps
        const auto skipped = t_ - 1 - slot.row_step[r];
        if (skipped > 0) {
          const double d1 = std::pow(config_.beta1, static_cast<double>(skipped));
          const double d2 = std::pow(config_.beta2, static_cast<double>(skipped));
          double* m = slot.m.row(r);
          double* v = slot.v.row(r);
          for (int c = 0; c < slot.m.cols; ++c) {
            m[c] *= d1;
            v[c] *= d2;
          }
        }
        slot.row_step[r] = t_;
        update_row(slot, r, lr, bc1, bc2);
      }
    } else {
      for (int r = 0; r < slot.p->value.rows; ++r) update_row(slot, r, lr, bc1, bc2);
    }
  }
}

}  // namespace iagnn
