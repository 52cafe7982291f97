#pragma once

#include <cstdint>
#include <vector>

#include "iagnn/tape.hpp"

namespace iagnn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. Dense tensors take the textbook update every step.
// Sparse embedding tables update only rows the batch touched; their moments
// are caught up lazily at touch time by the beta decay they would have
// received from the zero-gradient steps in between (the rows themselves stay
// frozen while untouched).
class Adam {
 public:
  explicit Adam(std::vector<Parameter*> params, AdamConfig config = {});

  // consumes current grads; the caller zeroes them before the next batch
  void step(double lr);

  std::int64_t timestep() const { return t_; }

 private:
  struct Slot {
    Parameter* p;
    Tensor m, v;
    std::vector<std::int64_t> row_step;  // sparse only: last caught-up step per row
  };

  void update_row(Slot& slot, int row, double lr, double bc1, double bc2);

  std::vector<Slot> slots_;
  AdamConfig config_;
  std::int64_t t_ = 0;
};

}  // namespace iagnn
