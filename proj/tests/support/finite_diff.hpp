#pragma once

// Central finite-difference gradient oracle over flattened policy parameters.

#include <functional>
#include <vector>

#include "expa/policy.hpp"

namespace fdiff {

inline std::vector<double> finite_diff(const expa::PolicyParameters& params,
                                       const std::function<double(const expa::PolicyParameters&)>& f,
                                       double eps = 1e-6) {
  expa::PolicyParameters work = params;
  std::vector<double> flat = work.w.flatten();
  std::vector<double> grad(flat.size());
  for (std::size_t i = 0; i < flat.size(); ++i) {
    double saved = flat[i];
    flat[i] = saved + eps;
    work.w.unflatten(flat);
    double up = f(work);
    flat[i] = saved - eps;
    work.w.unflatten(flat);
    double down = f(work);
    flat[i] = saved;
    grad[i] = (up - down) / (2.0 * eps);
  }
  work.w.unflatten(flat);
  return grad;
}

// Worst relative error, with an absolute floor so near-zero coordinates do
// not dominate.
inline double max_rel_error(const std::vector<double>& analytic,
                            const std::vector<double>& numeric, double abs_floor = 1e-7) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    double denom = std::max(abs_floor, std::abs(analytic[i]) + std::abs(numeric[i]));
    double err = std::abs(analytic[i] - numeric[i]);
    if (err > abs_floor) worst = std::max(worst, err / denom);
  }
  return worst;
}

}  // namespace fdiff
