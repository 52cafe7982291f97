#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "iagnn/tape.hpp"

namespace iagnn {

struct GradCheckEntry {
  std::string tensor;
  double max_rel_err = 0.0;
  int worst_row = -1;
  int worst_col = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  int coords_checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tol_rel = 1e-4;

  bool passed() const;
  double max_rel_err() const;
  std::string summary() const;  // one line per tensor
};

// Central-difference check of analytic gradients.
//   loss_fn: deterministic forward pass reading current parameter values
//   grad_fn: zeroes grads, runs forward + backward + accumulate
// Samples at least min_coords coordinates per tensor (all when smaller).
// Relative error is |a - n| / max(|a|, |n|, 1e-6).
GradCheckReport finite_difference_check(const std::function<double()>& loss_fn,
                                        const std::function<void()>& grad_fn,
                                        const std::vector<Parameter*>& params,
                                        double h = 1e-5, double tol_rel = 1e-4,
                                        int min_coords = 64, std::uint64_t seed = 0);

}  // namespace iagnn
