#pragma once

// Central-difference gradient oracle over every scalar parameter.

#include <algorithm>
#include <cmath>
#include <vector>

#include "gaplab/neuralnet.hpp"

namespace testsupport {

template <typename F>
std::vector<double> fd_gradient(gaplab::PolicyParams& params, F&& objective,
                                double h = 1e-5) {
  auto ptrs = gaplab::param_ptrs(params);
  std::vector<double> out(ptrs.size());
  for (std::size_t k = 0; k < ptrs.size(); ++k) {
    double orig = *ptrs[k];
    *ptrs[k] = orig + h;
    double up = objective(params);
    *ptrs[k] = orig - h;
    double dn = objective(params);
    *ptrs[k] = orig;
    out[k] = (up - dn) / (2.0 * h);
  }
  return out;
}

// Relative error with a unit floor so near-zero components compare on an
// absolute scale.
inline double rel_err(double a, double b) {
  double denom = std::max({1.0, std::abs(a), std::abs(b)});
  return std::abs(a - b) / denom;
}

inline double max_rel_err(const std::vector<double>& a,
                          const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, rel_err(a[i], b[i]));
  return worst;
}

}  // namespace testsupport
