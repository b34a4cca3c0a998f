#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

// Central finite-difference oracle shared by the gradient tests. Returns the
// worst relative error between analytic and numeric gradients.
inline double max_relative_error(std::span<double> params,
                                 std::span<const double> analytic,
                                 const std::function<double()>& eval,
                                 double h = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = eval();
    params[i] = saved - h;
    const double down = eval();
    params[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-3});
    worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
  }
  return worst;
}
