#pragma once

// Slow, obviously-correct reference implementations used only by tests.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <vector>

namespace oracle {

using Eigen::Index;

/// Magnitude of the DFT of x at (possibly fractional) bin frequency f.
inline double dft_magnitude(const Eigen::VectorXd& x, double f_hz, double fs) {
  std::complex<double> acc{0.0, 0.0};
  for (Index t = 0; t < x.size(); ++t) {
    acc += x(t) * std::polar(1.0, -2.0 * std::numbers::pi * f_hz * static_cast<double>(t) / fs);
  }
  return std::abs(acc);
}

/// Lagged design by explicit index arithmetic.
inline Eigen::MatrixXd hankel(const Eigen::MatrixXd& eeg, Index taps) {
  Eigen::MatrixXd x(eeg.rows(), eeg.cols() * taps);
  for (Index t = 0; t < eeg.rows(); ++t) {
    for (Index c = 0; c < eeg.cols(); ++c) {
      for (Index l = 0; l < taps; ++l) {
        x(t, c * taps + l) = t + l < eeg.rows() ? eeg(t + l, c) : 0.0;
      }
    }
  }
  return x;
}

struct Lw {
  double rho, mu;
};

/// Ledoit-Wolf from the outer-product definition.
inline Lw ledoit_wolf(const Eigen::MatrixXd& x) {
  const auto T = static_cast<double>(x.rows());
  const Index p = x.cols();
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(p, p);
  for (Index t = 0; t < x.rows(); ++t) s += x.row(t).transpose() * x.row(t);
  s /= T;
  const double mu = s.trace() / static_cast<double>(p);
  double num = 0.0;
  for (Index t = 0; t < x.rows(); ++t) {
    num += (x.row(t).transpose() * x.row(t) - s).squaredNorm();
  }
  num /= T * T;
  const double den = (s - mu * Eigen::MatrixXd::Identity(p, p)).squaredNorm();
  return {den == 0.0 ? 1.0 : std::min(1.0, num / den), mu};
}

/// ((1-rho) S + rho mu I)^-1 X's / T via an explicit inverse.
inline Eigen::VectorXd shrinkage_solution(const Eigen::MatrixXd& x, const Eigen::VectorXd& s, double rho, double mu) {
  const auto T = static_cast<double>(x.rows());
  const Eigen::MatrixXd a =
      (1.0 - rho) * (x.transpose() * x) / T + rho * mu * Eigen::MatrixXd::Identity(x.cols(), x.cols());
  return a.inverse() * (x.transpose() * s / T);
}

inline Eigen::VectorXd matvec(const Eigen::MatrixXd& a, const Eigen::VectorXd& v) {
  Eigen::VectorXd out(a.rows());
  for (Index i = 0; i < a.rows(); ++i) {
    double acc = 0.0;
    for (Index j = 0; j < a.cols(); ++j) acc += a(i, j) * v(j);
    out(i) = acc;
  }
  return out;
}

/// Two-pass Pearson correlation, 0 for constant input.
inline double pearson_naive(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const auto n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (Index i = 0; i < x.size(); ++i) {
    mx += x(i) / n;
    my += y(i) / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (Index i = 0; i < x.size(); ++i) {
    sxy += (x(i) - mx) * (y(i) - my);
    sxx += (x(i) - mx) * (x(i) - mx);
    syy += (y(i) - my) * (y(i) - my);
  }
  return sxx > 0 && syy > 0 ? sxy / std::sqrt(sxx * syy) : 0.0;
}

/// ||s - X d||^2 + lambda ||d||^2.
inline double ridge_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& s, const Eigen::VectorXd& d,
                              double lambda) {
  return (s - x * d).squaredNorm() + lambda * d.squaredNorm();
}

/// Central finite-difference gradient.
template <typename F>
Eigen::VectorXd fd_gradient(F&& f, const Eigen::VectorXd& at, double h) {
  Eigen::VectorXd g(at.size());
  for (Index i = 0; i < at.size(); ++i) {
    Eigen::VectorXd a = at, b = at;
    a(i) += h;
    b(i) -= h;
    g(i) = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

/// P(X <= k) for X ~ Binomial(n, 1/2), by direct pmf summation in long double
/// with multiplicative binomial coefficients.
inline long double binomial_cdf_half(long k, long n) {
  if (k < 0) return 0.0L;
  if (k >= n) return 1.0L;
  long double coef = 1.0L;  // C(n, 0)
  long double total = 0.0L;
  const long double scale = std::pow(0.5L, static_cast<long double>(n));
  for (long i = 0; i <= k; ++i) {
    total += coef * scale;
    coef = coef * static_cast<long double>(n - i) / static_cast<long double>(i + 1);
  }
  return total;
}

/// Smallest k with P(X <= k) >= q.
inline long binomial_quantile_half(long double q, long n) {
  for (long k = 0; k <= n; ++k) {
    if (binomial_cdf_half(k, n) >= q - 1e-15L) return k;
  }
  return n;
}

/// Two-sided Wilcoxon signed-rank p by enumerating all 2^n sign flips of the
/// average ranks of |d| (nonzero d only).
inline double wilcoxon_enumerate(const std::vector<double>& d) {
  std::vector<double> a;
  for (double v : d) {
    if (v != 0.0) a.push_back(v);
  }
  const size_t n = a.size();
  std::vector<double> rank(n);
  for (size_t i = 0; i < n; ++i) {
    double less = 0, equal = 0;
    for (size_t j = 0; j < n; ++j) {
      if (std::abs(a[j]) < std::abs(a[i])) less += 1;
      if (std::abs(a[j]) == std::abs(a[i])) equal += 1;
    }
    rank[i] = less + (equal + 1.0) / 2.0;
  }
  double total = 0, w = 0;
  for (size_t i = 0; i < n; ++i) {
    total += rank[i];
    if (a[i] > 0) w += rank[i];
  }
  const double mean = total / 2.0;
  const double obs = std::abs(w - mean);
  std::uint64_t extreme = 0;
  const std::uint64_t count = std::uint64_t{1} << n;
  for (std::uint64_t m = 0; m < count; ++m) {
    double s = 0;
    for (size_t i = 0; i < n; ++i) {
      if (m >> i & 1U) s += rank[i];
    }
    if (std::abs(s - mean) >= obs - 1e-9) ++extreme;
  }
  return std::min(1.0, static_cast<double>(extreme) / static_cast<double>(count));
}

}  // namespace oracle
