#include "iagnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "iagnn/rng.hpp"

namespace iagnn {

bool GradCheckReport::passed() const {
  for (const auto& e : entries)
    if (e.max_rel_err > tol_rel) return false;
  return true;
}

double GradCheckReport::max_rel_err() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_err);
  return m;
}

std::string GradCheckReport::summary() const {
  std::string out;
  char buf[256];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof(buf), "%-28s max_rel_err=%.3e  (%d coords)  %s\n",
                  e.tensor.c_str(), e.max_rel_err, e.coords_checked,
                  e.max_rel_err <= tol_rel ? "ok" : "FAIL");
    out += buf;
  }
  return out;
}

GradCheckReport finite_difference_check(const std::function<double()>& loss_fn,
                                        const std::function<void()>& grad_fn,
                                        const std::vector<Parameter*>& params,
                                        double h, double tol_rel, int min_coords,
                                        std::uint64_t seed) {
  GradCheckReport report;
  report.tol_rel = tol_rel;
  grad_fn();
  // copy analytic grads before poking values
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter* p = params[pi];
    GradCheckEntry entry;
    entry.tensor = p->name;
    const int n = static_cast<int>(p->value.size());
    std::vector<int> coords(n);
    for (int i = 0; i < n; ++i) coords[i] = i;
    if (n > min_coords) {
      shuffle(coords, rng);
      coords.resize(min_coords);
    }
    for (int c : coords) {
      const double saved = p->value.data[c];
      p->value.data[c] = saved + h;
      const double up = loss_fn();
      p->value.data[c] = saved - h;
      const double down = loss_fn();
      p->value.data[c] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi].data[c];
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-6});
      if (rel > entry.max_rel_err) {
        entry.max_rel_err = rel;
        entry.worst_row = c / p->value.cols;
        entry.worst_col = c % p->value.cols;
        entry.analytic = a;
        entry.numeric = numeric;
      }
      ++entry.coords_checked;
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace iagnn
