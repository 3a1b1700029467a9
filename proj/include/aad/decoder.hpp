#pragma once

// Backward (stimulus-reconstruction) decoder: time-lagged design matrix,
// Ledoit-Wolf shrinkage, regularised least squares and window-wise
// correlation decisions.

#include "aad/error.hpp"
#include "aad/numeric.hpp"

#include <Eigen/Dense>

#include "json.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace aad {

/// Post-stimulus lags [low, high] ms at `fs`. 0-400 ms at 20 Hz gives 9 taps.
struct LagGrid {
  double fs{20.0};
  double span_ms_low{0.0};
  double span_ms_high{400.0};

  Index first() const { return static_cast<Index>(std::ceil(span_ms_low * fs / 1000.0 - 1e-9)); }
  Index taps() const {
    return static_cast<Index>(std::floor(span_ms_high * fs / 1000.0 + 1e-9)) - first() + 1;
  }
  bool operator==(const LagGrid&) const = default;
};

/// Block-Hankel matrix [X_1 ... X_C]; block c row t holds x_c(t), ...,
/// x_c(t+L-1), zero past the end of the signal.
template <typename Derived>
Eigen::MatrixXd build_lagged(const Eigen::MatrixBase<Derived>& eeg, Index taps) {
  const Index T = eeg.rows();
  const Index C = eeg.cols();
  if (taps < 1) throw ConfigError("build_lagged: need at least one tap");
  if (T < taps) {
    throw DataError("build_lagged: " + std::to_string(T) + " samples is fewer than " + std::to_string(taps) + " taps");
  }
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(T, C * taps);
  for (Index c = 0; c < C; ++c) {
    for (Index l = 0; l < taps; ++l) {
      x.col(c * taps + l).head(T - l) = eeg.col(c).tail(T - l);
    }
  }
  return x;
}

template <typename Derived>
Eigen::MatrixXd build_lagged(const Eigen::MatrixBase<Derived>& eeg, const LagGrid& grid) {
  if (grid.first() != 0) throw ConfigError("build_lagged: only lag grids starting at 0 ms are supported");
  return build_lagged(eeg, grid.taps());
}

struct Shrinkage {
  double rho{0.0};  // weight on the scaled-identity target, in [0, 1]
  double mu{0.0};   // trace(S) / p
};

/// Sufficient statistics of a lagged design X (T x p) and target s:
/// X'X, (X.^2)'(X.^2), X's and T. Sums over trials pool training data;
/// principal submatrices give the statistics of any column subset.
struct GramStats {
  Eigen::MatrixXd gram;
  Eigen::MatrixXd fourth;
  Eigen::VectorXd cross;
  Index samples{0};

  static GramStats from(const Eigen::MatrixXd& x, const Eigen::VectorXd& s) {
    if (x.rows() != s.size()) throw DataError("GramStats: design and target lengths differ");
    GramStats g;
    g.gram = x.transpose() * x;
    const Eigen::MatrixXd sq = x.array().square().matrix();
    g.fourth = sq.transpose() * sq;
    g.cross = x.transpose() * s;
    g.samples = x.rows();
    return g;
  }

  Index dim() const { return gram.rows(); }

  GramStats& operator+=(const GramStats& o) {
    if (samples == 0) return *this = o;
    if (o.dim() != dim()) throw DataError("GramStats: cannot pool designs of different width");
    gram += o.gram;
    fourth += o.fourth;
    cross += o.cross;
    samples += o.samples;
    return *this;
  }

  GramStats subset(const std::vector<Index>& cols) const {
    GramStats g;
    const auto n = static_cast<Index>(cols.size());
    g.gram.resize(n, n);
    g.fourth.resize(n, n);
    g.cross.resize(n);
    for (Index i = 0; i < n; ++i) {
      g.cross(i) = cross(cols[static_cast<size_t>(i)]);
      for (Index j = 0; j < n; ++j) {
        g.gram(i, j) = gram(cols[static_cast<size_t>(i)], cols[static_cast<size_t>(j)]);
        g.fourth(i, j) = fourth(cols[static_cast<size_t>(i)], cols[static_cast<size_t>(j)]);
      }
    }
    g.samples = samples;
    return g;
  }
};

/// Analytical Ledoit-Wolf shrinkage towards mu*I for S = X'X/T:
///   mu  = trace(S)/p
///   rho = min(1, sum_t ||x_t x_t' - S||_F^2 / T^2 / ||S - mu I||_F^2)
/// using sum_t ||x_t x_t' - S||^2 = sum_t ||x_t||^4 - T ||S||^2.
inline Shrinkage ledoit_wolf(const GramStats& g) {
  const Index p = g.dim();
  const double T = static_cast<double>(g.samples);
  if (g.samples < 2) throw DataError("ledoit_wolf: need at least 2 samples");
  if (p == 0) throw DataError("ledoit_wolf: empty design");
  const Eigen::MatrixXd s = g.gram / T;
  Shrinkage out;
  out.mu = s.trace() / static_cast<double>(p);
  const double dispersion = (s - out.mu * Eigen::MatrixXd::Identity(p, p)).squaredNorm();
  const double spread = std::max(0.0, g.fourth.sum() - T * s.squaredNorm()) / (T * T);
  out.rho = dispersion > 0.0 ? std::min(1.0, spread / dispersion) : 1.0;
  return out;
}

inline Shrinkage ledoit_wolf(const Eigen::MatrixXd& x) {
  return ledoit_wolf(GramStats::from(x, Eigen::VectorXd::Zero(x.rows())));
}

struct Decoder {
  Eigen::VectorXd weights;            // channels.size() * grid.taps()
  std::vector<std::string> channels;  // block order of the design matrix
  LagGrid grid;
  Shrinkage shrinkage;
  Index training_samples{0};

  /// Ridge parameter of the equivalent objective ||s - Xd||^2 + lambda ||d||^2,
  /// whose minimiser is (1 - rho) * weights.
  double ridge_lambda() const {
    return shrinkage.rho >= 1.0 ? std::numeric_limits<double>::infinity()
                                : shrinkage.rho * shrinkage.mu * static_cast<double>(training_samples) /
                                      (1.0 - shrinkage.rho);
  }
};

struct TrainOptions {
  std::optional<double> rho_override;
};

/// Solves ((1-rho) S + rho mu I) d = X's / T by Cholesky. Columns that are
/// identically zero over all training data are left out of the shrinkage
/// estimate and get zero weight.
inline Decoder train(const GramStats& stats, std::vector<std::string> channels, const LagGrid& grid,
                     const TrainOptions& opt = {}) {
  const Index p = stats.dim();
  if (static_cast<Index>(channels.size()) * grid.taps() != p) {
    throw DataError("train: design width " + std::to_string(p) + " does not match " +
                    std::to_string(channels.size()) + " channels x " + std::to_string(grid.taps()) + " taps");
  }
  std::vector<Index> active;
  for (Index i = 0; i < p; ++i) {
    if (stats.gram(i, i) > 0.0) active.push_back(i);
  }
  Decoder dec;
  dec.channels = std::move(channels);
  dec.grid = grid;
  dec.training_samples = stats.samples;
  dec.weights = Eigen::VectorXd::Zero(p);
  if (active.empty()) throw NumericalError("train: every design column is zero");

  const GramStats sub = static_cast<Index>(active.size()) == p ? stats : stats.subset(active);
  dec.shrinkage = ledoit_wolf(sub);
  if (opt.rho_override) dec.shrinkage.rho = *opt.rho_override;
  const double T = static_cast<double>(sub.samples);
  const Index q = sub.dim();
  Eigen::MatrixXd a = (1.0 - dec.shrinkage.rho) * (sub.gram / T);
  a.diagonal().array() += dec.shrinkage.rho * dec.shrinkage.mu;
  const Eigen::VectorXd rhs = sub.cross / T;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("train: regularised covariance is not positive definite (rho=" +
                         std::to_string(dec.shrinkage.rho) + "); enforce a shrinkage floor");
  }
  const Eigen::VectorXd d = llt.solve(rhs);
  const double resid = (a * d - rhs).norm();
  if (!std::isfinite(resid) || resid > 1e-10 * (a.norm() * d.norm() + rhs.norm())) {
    throw NumericalError("train: linear solve failed to converge");
  }
  for (Index i = 0; i < q; ++i) dec.weights(active[static_cast<size_t>(i)]) = d(i);
  return dec;
}

inline Decoder train(const Eigen::MatrixXd& x_lagged, const Eigen::VectorXd& s_att, std::vector<std::string> channels,
                     const LagGrid& grid = {}, const TrainOptions& opt = {}) {
  return train(GramStats::from(x_lagged, s_att), std::move(channels), grid, opt);
}

/// s_hat = X d.
inline Eigen::VectorXd reconstruct(const Decoder& dec, const Eigen::MatrixXd& x_lagged) {
  if (x_lagged.cols() != dec.weights.size()) {
    std::string names;
    for (const auto& c : dec.channels) names += (names.empty() ? "" : ",") + c;
    throw DataError("reconstruct: design has " + std::to_string(x_lagged.cols()) + " columns, decoder expects " +
                    std::to_string(dec.weights.size()) + " (" + std::to_string(dec.grid.taps()) +
                    " taps over channels " + names + ")");
  }
  return x_lagged * dec.weights;
}

struct Decision {
  Index window_index{0};
  double corr_1{0.0};
  double corr_2{0.0};
  int chosen{1};
  bool correct{false};
  bool degenerate{false};  // reconstruction constant within the window
};

/// Non-overlapping windows of `window_samples`; the final partial window is
/// dropped. Speaker 1 wins exact ties. `attended_speaker` is 1 or 2.
inline std::vector<Decision> classify_windows(const Eigen::VectorXd& recon, const Eigen::VectorXd& env1,
                                              const Eigen::VectorXd& env2, Index window_samples,
                                              int attended_speaker) {
  if (recon.size() != env1.size() || recon.size() != env2.size()) {
    throw DataError("classify_windows: reconstruction and envelopes differ in length");
  }
  if (window_samples < 2) throw ConfigError("classify_windows: window must span at least 2 samples");
  std::vector<Decision> out;
  const Index n = recon.size() / window_samples;
  out.reserve(static_cast<size_t>(n));
  for (Index w = 0; w < n; ++w) {
    const Index o = w * window_samples;
    Decision d;
    d.window_index = w;
    bool flat = false;
    d.corr_1 = pearson(recon.segment(o, window_samples), env1.segment(o, window_samples), &flat);
    d.degenerate = flat && recon.segment(o, window_samples).maxCoeff() == recon.segment(o, window_samples).minCoeff();
    d.corr_2 = pearson(recon.segment(o, window_samples), env2.segment(o, window_samples));
    d.chosen = d.corr_2 > d.corr_1 ? 2 : 1;
    d.correct = d.chosen == attended_speaker;
    out.push_back(d);
  }
  return out;
}

inline Index window_samples(double window_s, double fs) {
  const double n = window_s * fs;
  if (std::abs(n - std::round(n)) > 1e-9) throw ConfigError("window length is not a whole number of samples");
  return static_cast<Index>(std::llround(n));
}

inline double accuracy(const std::vector<Decision>& ds) {
  if (ds.empty()) return 0.0;
  Index ok = 0;
  for (const auto& d : ds) ok += d.correct;
  return static_cast<double>(ok) / static_cast<double>(ds.size());
}

// ---------------------------------------------------------------------------
// Serialisation: one JSON header line, then little-endian float64 weights.

inline void save_decoder(const std::filesystem::path& path, const Decoder& dec) {
  nlohmann::json h{{"format", "aad-decoder-1"},
                   {"channels", dec.channels},
                   {"lag_grid", {{"fs", dec.grid.fs}, {"span_ms", {dec.grid.span_ms_low, dec.grid.span_ms_high}}, {"taps", dec.grid.taps()}}},
                   {"shrinkage", {{"rho", dec.shrinkage.rho}, {"mu", dec.shrinkage.mu}}},
                   {"training_samples", dec.training_samples},
                   {"n_weights", dec.weights.size()}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << h.dump() << '\n';
  out.write(reinterpret_cast<const char*>(dec.weights.data()),
            static_cast<std::streamsize>(dec.weights.size() * static_cast<Index>(sizeof(double))));
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

inline Decoder load_decoder(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open decoder '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  Decoder dec;
  Index n = 0;
  try {
    const auto h = nlohmann::json::parse(line);
    if (h.at("format") != "aad-decoder-1") throw DataError("unknown decoder format");
    dec.channels = h.at("channels").get<std::vector<std::string>>();
    dec.grid.fs = h.at("lag_grid").at("fs").get<double>();
    dec.grid.span_ms_low = h.at("lag_grid").at("span_ms").at(0).get<double>();
    dec.grid.span_ms_high = h.at("lag_grid").at("span_ms").at(1).get<double>();
    dec.shrinkage.rho = h.at("shrinkage").at("rho").get<double>();
    dec.shrinkage.mu = h.at("shrinkage").at("mu").get<double>();
    dec.training_samples = h.at("training_samples").get<Index>();
    n = h.at("n_weights").get<Index>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("decoder '" + path.string() + "': bad header: " + e.what());
  }
  if (n != static_cast<Index>(dec.channels.size()) * dec.grid.taps()) throw DataError("decoder header inconsistent");
  dec.weights.resize(n);
  in.read(reinterpret_cast<char*>(dec.weights.data()), static_cast<std::streamsize>(n * static_cast<Index>(sizeof(double))));
  if (!in) throw DataError("decoder '" + path.string() + "': truncated weights");
  return dec;
}

}  // namespace aad
