#pragma once

// Signal-processing primitives used by the EEG and envelope pipelines:
// Butterworth bandpass design as second-order sections, forward-backward
// (zero-phase) filtering, plain decimation, an ERB-spaced gammatone
// filterbank and the envelope chain built on top of it.

#include "aad/error.hpp"
#include "aad/numeric.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

namespace aad::dsp {

/// One biquad, a0 normalised to 1. Direct form II transposed when applied.
struct Sos {
  double b0{1}, b1{0}, b2{0};
  double a1{0}, a2{0};
};

using SosCascade = std::vector<Sos>;

struct BandpassSpec {
  double low_hz{1.0};
  double high_hz{9.0};
  int order{4};  // order of the lowpass prototype; the bandpass has 2*order poles
  bool zero_phase{true};
};

inline void validate(const BandpassSpec& spec, double fs) {
  if (!(fs > 0.0)) throw ConfigError("bandpass: sample rate must be positive");
  if (spec.order < 1) throw ConfigError("bandpass: order must be >= 1");
  if (!(spec.low_hz > 0.0 && spec.low_hz < spec.high_hz && spec.high_hz < fs / 2.0)) {
    throw ConfigError("bandpass: need 0 < low_hz < high_hz < Nyquist (got " +
                      std::to_string(spec.low_hz) + ", " + std::to_string(spec.high_hz) +
                      " at fs=" + std::to_string(fs) + ")");
  }
}

/// Complex frequency response of a cascade at normalised angular frequency w.
inline std::complex<double> frequency_response(const SosCascade& sos, double w) {
  const std::complex<double> z1 = std::polar(1.0, -w);
  const std::complex<double> z2 = z1 * z1;
  std::complex<double> h{1.0, 0.0};
  for (const auto& s : sos) {
    h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  }
  return h;
}

inline double magnitude_at(const SosCascade& sos, double f_hz, double fs) {
  return std::abs(frequency_response(sos, 2.0 * std::numbers::pi * f_hz / fs));
}

/// Digital Butterworth bandpass: analog lowpass prototype, lowpass-to-bandpass
/// transform around the prewarped edges, bilinear transform. Each section
/// carries one zero at z=1 and one at z=-1; unit gain at the band centre.
inline SosCascade butter_bandpass(const BandpassSpec& spec, double fs) {
  validate(spec, fs);
  using cd = std::complex<double>;
  const double pi = std::numbers::pi;
  const int n = spec.order;
  const double wl = 2.0 * fs * std::tan(pi * spec.low_hz / fs);
  const double wh = 2.0 * fs * std::tan(pi * spec.high_hz / fs);
  const double bw = wh - wl;
  const double w0 = std::sqrt(wl * wh);

  std::vector<cd> zpoles;
  zpoles.reserve(static_cast<size_t>(2 * n));
  for (int k = 0; k < n; ++k) {
    const cd p = std::polar(1.0, pi / 2.0 + pi * (2.0 * k + 1.0) / (2.0 * n));
    const cd half = p * (bw / 2.0);
    const cd root = std::sqrt(half * half - w0 * w0);
    for (const cd s : {half + root, half - root}) {
      zpoles.push_back((1.0 + s / (2.0 * fs)) / (1.0 - s / (2.0 * fs)));
    }
  }
  for (const auto& z : zpoles) {
    if (std::abs(z) >= 1.0) throw NumericalError("bandpass: unstable design (pole on or outside unit circle)");
  }

  // Pair conjugates; real poles pair among themselves.
  SosCascade sos;
  std::vector<double> reals;
  for (const auto& z : zpoles) {
    if (z.imag() > 1e-14) {
      sos.push_back({1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
    } else if (std::abs(z.imag()) <= 1e-14) {
      reals.push_back(z.real());
    }
  }
  for (size_t i = 0; i + 1 < reals.size(); i += 2) {
    sos.push_back({1.0, 0.0, -1.0, -(reals[i] + reals[i + 1]), reals[i] * reals[i + 1]});
  }
  if (static_cast<int>(sos.size()) != n) throw NumericalError("bandpass: pole pairing failed");

  const double wc = 2.0 * std::atan(w0 / (2.0 * fs));
  const double g = std::abs(frequency_response(sos, wc));
  sos.front().b0 /= g;
  sos.front().b1 /= g;
  sos.front().b2 /= g;
  return sos;
}

/// Causal filtering in place. `state` holds two delay values per section.
inline void sos_filter(const SosCascade& sos, std::vector<double>& x, std::vector<double> state) {
  for (size_t k = 0; k < sos.size(); ++k) {
    const Sos& s = sos[k];
    double z1 = state[2 * k];
    double z2 = state[2 * k + 1];
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
}

/// Steady-state delay values for a unit step input, so filtering a constant
/// signal starts without transient.
inline std::vector<double> sos_step_state(const SosCascade& sos) {
  std::vector<double> zi(2 * sos.size());
  double level = 1.0;
  for (size_t k = 0; k < sos.size(); ++k) {
    const Sos& s = sos[k];
    const double g = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    zi[2 * k] = level * (g - s.b0);
    zi[2 * k + 1] = level * (s.b2 - s.a2 * g);
    level *= g;
  }
  return zi;
}

/// Number of samples reflected onto each end before forward-backward filtering.
inline Index filtfilt_padlen(const SosCascade& sos) {
  return 3 * (2 * static_cast<Index>(sos.size()) + 1);
}

/// Zero-phase filtering: odd reflection padding, step-state initialisation,
/// forward pass, backward pass, trim.
inline std::vector<double> filtfilt(const SosCascade& sos, const std::vector<double>& x) {
  const Index n = static_cast<Index>(x.size());
  const Index pad = filtfilt_padlen(sos);
  if (n <= pad) {
    throw DataError("filtfilt: signal of " + std::to_string(n) + " samples is too short (need > " +
                    std::to_string(pad) + ")");
  }
  std::vector<double> ext(static_cast<size_t>(n + 2 * pad));
  for (Index i = 0; i < pad; ++i) ext[static_cast<size_t>(i)] = 2.0 * x[0] - x[static_cast<size_t>(pad - i)];
  for (Index i = 0; i < n; ++i) ext[static_cast<size_t>(pad + i)] = x[static_cast<size_t>(i)];
  for (Index i = 0; i < pad; ++i) {
    ext[static_cast<size_t>(pad + n + i)] = 2.0 * x[static_cast<size_t>(n - 1)] - x[static_cast<size_t>(n - 2 - i)];
  }

  const std::vector<double> zi = sos_step_state(sos);
  auto scaled = [&zi](double v) {
    std::vector<double> s(zi);
    for (double& e : s) e *= v;
    return s;
  };
  sos_filter(sos, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  sos_filter(sos, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + pad, ext.begin() + pad + n};
}

/// Butterworth bandpass applied to a vector; zero-phase unless spec says otherwise.
inline Eigen::VectorXd butter_bandpass_zero_phase(const Eigen::VectorXd& x, const BandpassSpec& spec,
                                                  double fs) {
  const SosCascade sos = butter_bandpass(spec, fs);
  std::vector<double> v(x.data(), x.data() + x.size());
  if (spec.zero_phase) {
    v = filtfilt(sos, v);
  } else {
    if (x.size() <= filtfilt_padlen(sos)) throw DataError("bandpass: signal too short");
    sos_filter(sos, v, std::vector<double>(2 * sos.size(), 0.0));
  }
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
}

/// Column-wise variant for time x channel matrices.
inline Eigen::MatrixXd butter_bandpass_zero_phase(const Eigen::MatrixXd& x, const BandpassSpec& spec,
                                                  double fs) {
  Eigen::MatrixXd y(x.rows(), x.cols());
  for (Index c = 0; c < x.cols(); ++c) {
    y.col(c) = butter_bandpass_zero_phase(Eigen::VectorXd(x.col(c)), spec, fs);
  }
  return y;
}

/// y(t) = x(t * factor). No anti-aliasing.
template <typename Derived>
auto decimate(const Eigen::MatrixBase<Derived>& x, Index factor) {
  using Plain = typename Derived::PlainObject;
  if (factor < 1) throw ConfigError("decimate: factor must be >= 1");
  const Index rows = (x.rows() + factor - 1) / factor;
  Plain y(rows, x.cols());
  for (Index t = 0; t < rows; ++t) y.row(t) = x.row(t * factor);
  return y;
}

/// Integer decimation factor between two rates; rejects non-integer ratios.
inline Index decimation_factor(double fs_in, double fs_out) {
  if (!(fs_in > 0.0 && fs_out > 0.0)) throw ConfigError("decimate: rates must be positive");
  const double ratio = fs_in / fs_out;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * ratio) {
    throw ConfigError("decimate: " + std::to_string(fs_in) + " Hz -> " + std::to_string(fs_out) +
                      " Hz is not an integer ratio; resample the recording at ingestion");
  }
  return static_cast<Index>(rounded);
}

/// Zero mean, unit sample variance (n-1 denominator).
inline Eigen::VectorXd standardize(const Eigen::VectorXd& x) {
  if (x.size() < 2) throw DataError("standardize: need at least 2 samples");
  const double m = x.mean();
  const Eigen::VectorXd centred = x.array() - m;
  const double var = centred.squaredNorm() / static_cast<double>(x.size() - 1);
  if (!(var > 0.0)) throw DataError("standardize: constant input");
  return centred / std::sqrt(var);
}

// ---------------------------------------------------------------------------
// Gammatone filterbank

struct GammatoneBankSpec {
  int n_bands{19};
  double f_min{50.0};
  double f_max{5000.0};
  double compression_exponent{0.6};
};

inline void validate(const GammatoneBankSpec& spec) {
  if (spec.n_bands < 1) throw ConfigError("gammatone: n_bands must be >= 1");
  if (!(spec.f_min > 0.0 && spec.f_min < spec.f_max)) throw ConfigError("gammatone: need 0 < f_min < f_max");
}

// Glasberg & Moore ERB constants.
inline constexpr double kEarQ = 9.26449;
inline constexpr double kMinBw = 24.7;

inline double erb_rate(double f_hz) { return kEarQ * std::log(1.0 + f_hz / (kEarQ * kMinBw)); }
inline double erb_rate_inverse(double e) { return (std::exp(e / kEarQ) - 1.0) * kEarQ * kMinBw; }
inline double erb_bandwidth(double f_hz) { return f_hz / kEarQ + kMinBw; }

/// Centre frequencies equally spaced on the ERB-rate scale, ascending, both
/// ends included.
inline std::vector<double> erb_space(double f_min, double f_max, int n) {
  std::vector<double> cf(static_cast<size_t>(n));
  const double lo = erb_rate(f_min);
  const double hi = erb_rate(f_max);
  for (int i = 0; i < n; ++i) {
    const double frac = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
    cf[static_cast<size_t>(i)] = erb_rate_inverse(lo + frac * (hi - lo));
  }
  return cf;
}

/// Fourth-order gammatone as four biquads (Slaney's factorisation of the
/// Patterson-Holdsworth filter), normalised to unit gain at the centre
/// frequency.
inline SosCascade gammatone_sections(double cf, double fs) {
  const double pi = std::numbers::pi;
  const double t = 1.0 / fs;
  const double b = 1.019 * 2.0 * pi * erb_bandwidth(cf);
  const double arg = 2.0 * cf * pi * t;
  const double decay = std::exp(b * t);
  const double c = 2.0 * t * std::cos(arg) / decay;
  const double s = 2.0 * t * std::sin(arg) / decay;
  const double rp = std::sqrt(3.0 + std::pow(2.0, 1.5));
  const double rm = std::sqrt(3.0 - std::pow(2.0, 1.5));
  const double a1 = -2.0 * std::cos(arg) / decay;
  const double a2 = std::exp(-2.0 * b * t);
  SosCascade sos{
      {t, -(c + rp * s) / 2.0, 0.0, a1, a2},
      {t, -(c - rp * s) / 2.0, 0.0, a1, a2},
      {t, -(c + rm * s) / 2.0, 0.0, a1, a2},
      {t, -(c - rm * s) / 2.0, 0.0, a1, a2},
  };
  const double g = std::abs(frequency_response(sos, arg));
  for (auto& sec : sos) {
    const double k = std::pow(g, -0.25);
    sec.b0 *= k;
    sec.b1 *= k;
    sec.b2 *= k;
  }
  return sos;
}

/// Sum over bands of |band signal|^exponent at the audio rate, before any
/// envelope bandpass. Nonnegative by construction.
inline Eigen::VectorXd gammatone_compressed_sum(const Eigen::VectorXd& audio, double fs,
                                                const GammatoneBankSpec& spec = {}) {
  validate(spec);
  if (fs < 2.0 * spec.f_max) {
    throw ConfigError("gammatone: fs " + std::to_string(fs) + " Hz below 2*f_max");
  }
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(audio.size());
  std::vector<double> band(static_cast<size_t>(audio.size()));
  for (double cf : erb_space(spec.f_min, spec.f_max, spec.n_bands)) {
    const SosCascade sos = gammatone_sections(cf, fs);
    std::copy(audio.data(), audio.data() + audio.size(), band.begin());
    sos_filter(sos, band, std::vector<double>(2 * sos.size(), 0.0));
    for (Index i = 0; i < audio.size(); ++i) {
      const double mag = std::abs(band[static_cast<size_t>(i)]);
      sum(i) += mag > 0.0 ? std::pow(mag, spec.compression_exponent) : 0.0;
    }
  }
  return sum;
}

/// Speech envelope at `target_hz`: compressed gammatone sum, zero-phase
/// bandpass, decimation. Not standardised (that happens per trial).
inline Eigen::VectorXd gammatone_envelope(const Eigen::VectorXd& audio, double fs,
                                          const GammatoneBankSpec& spec = {},
                                          const BandpassSpec& band = {}, double target_hz = 20.0) {
  const Index factor = decimation_factor(fs, target_hz);
  const Eigen::VectorXd raw = gammatone_compressed_sum(audio, fs, spec);
  return decimate(butter_bandpass_zero_phase(raw, band, fs), factor);
}

}  // namespace aad::dsp
