#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace empowerkit {

// Running mean/std statistics (Welford) used to normalize intrinsic rewards.
// Callers update with each new value first, then normalize it.
struct NormalizerState {
  std::int64_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;  // sum of squared deviations

  void update(double x) {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
  }

  double variance() const {
    return count > 0 ? m2 / static_cast<double>(count) : 0.0;
  }

  double std() const { return std::sqrt(std::max(variance(), 0.0)); }

  // (x - mean) / max(std, 1e-8), clamped to [-5, 5]
  double normalize(double x) const {
    const double s = std::max(std(), 1e-8);
    return std::clamp((x - mean) / s, -5.0, 5.0);
  }

  double update_and_normalize(double x) {
    update(x);
    return normalize(x);
  }
};

}  // namespace empowerkit
