#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

namespace aad {

using Index = Eigen::Index;

/// Pearson correlation of two equal-length segments. Returns 0 when either
/// segment has zero variance; `degenerate` is set in that case.
template <typename A, typename B>
double pearson(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y,
               bool* degenerate = nullptr) {
  const Index n = x.size();
  if (n == 0 || y.size() != n) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  const double mx = x.mean();
  const double my = y.mean();
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double dx = x(i) - mx;
    const double dy = y(i) - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  if (degenerate) *degenerate = false;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), mid));
  }
  return m;
}

/// Median absolute deviation, unscaled.
inline double mad(const std::vector<double>& v, double med) {
  std::vector<double> dev(v.size());
  std::transform(v.begin(), v.end(), dev.begin(),
                 [med](double x) { return std::abs(x - med); });
  return median(std::move(dev));
}

}  // namespace aad
