#pragma once

// Per-trial EEG cleaning chain. All stages are mask-aware: bad channels and
// rejected windows travel as a SampleMask and are excluded from the
// reference and from normalisation, then zeroed.

#include "aad/corpus.hpp"
#include "aad/dsp.hpp"
#include "aad/error.hpp"
#include "aad/numeric.hpp"

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace aad {

enum class Setup { scalp, around_ear, in_ear };

inline std::string to_string(Setup s) {
  switch (s) {
    case Setup::scalp: return "scalp";
    case Setup::around_ear: return "around_ear";
    case Setup::in_ear: return "in_ear";
  }
  return "?";
}

inline Setup setup_from_string(const std::string& s) {
  if (s == "scalp") return Setup::scalp;
  if (s == "around_ear") return Setup::around_ear;
  if (s == "in_ear") return Setup::in_ear;
  throw ConfigError("unknown setup '" + s + "' (expected scalp, around_ear or in_ear)");
}

/// Channels of a setup that end up in the decoder.
inline bool belongs_to(Setup s, SetupTag t) {
  switch (s) {
    case Setup::scalp: return t == SetupTag::scalp;
    case Setup::around_ear: return t == SetupTag::around_ear_left || t == SetupTag::around_ear_right;
    case Setup::in_ear: return t == SetupTag::in_ear_left || t == SetupTag::in_ear_right;
  }
  return false;
}

struct ReferenceScheme {
  enum class Kind { common_average, same_ear_average, other_ear_average, single_electrode, shared_fp1 };
  Kind kind{Kind::common_average};
  std::string electrode;  // single_electrode only

  static ReferenceScheme car() { return {}; }
  static ReferenceScheme same_ear() { return {Kind::same_ear_average, {}}; }
  static ReferenceScheme other_ear() { return {Kind::other_ear_average, {}}; }
  static ReferenceScheme fp1() { return {Kind::shared_fp1, {}}; }
  static ReferenceScheme electrode_ref(std::string label) { return {Kind::single_electrode, std::move(label)}; }

  std::string name() const {
    switch (kind) {
      case Kind::common_average: return "car";
      case Kind::same_ear_average: return "same_ear";
      case Kind::other_ear_average: return "other_ear";
      case Kind::single_electrode: return "electrode:" + electrode;
      case Kind::shared_fp1: return "fp1";
    }
    return "?";
  }

  static ReferenceScheme parse(const std::string& s) {
    if (s == "car") return car();
    if (s == "same_ear") return same_ear();
    if (s == "other_ear") return other_ear();
    if (s == "fp1") return fp1();
    if (s.rfind("electrode:", 0) == 0 && s.size() > 10) return electrode_ref(s.substr(10));
    throw ConfigError("unknown reference scheme '" + s + "' (car, same_ear, other_ear, fp1, electrode:<label>)");
  }

  bool operator==(const ReferenceScheme&) const = default;
};

struct CleaningReport {
  std::vector<std::string> removed_channels;
  std::vector<double> rejected_sample_fraction;  // per output channel
  std::vector<std::string> stages_applied;
  std::vector<std::string> warnings;
};

struct PipelineConfig {
  dsp::BandpassSpec bandpass{1.0, 9.0, 4, true};
  bool eog_regression{true};
  bool bad_channels{true};
  bool asr{true};  // pass-through slot; upstream setting recorded below
  std::string asr_settings{"clean_asr cutoff=5 (defaults); pass-through"};
  bool window_rejection{true};
  double rejection_k{5.0};
  double rejection_window_s{1.0};
  double bad_window_s{2.0};
  double bad_correlation{0.45};
  double bad_other_fraction{0.95};
  double bad_window_fraction{0.5};
  double target_rate_hz{kEnvelopeRateHz};
  std::map<Setup, ReferenceScheme> reference{
      {Setup::scalp, ReferenceScheme::car()},
      {Setup::around_ear, ReferenceScheme::car()},
      {Setup::in_ear, ReferenceScheme::car()},
  };

  /// Bandpass, reference, decimate and normalise only.
  static PipelineConfig no_artifact_removal() {
    PipelineConfig c;
    c.eog_regression = c.bad_channels = c.asr = c.window_rejection = false;
    return c;
  }
};

// ---------------------------------------------------------------------------
// Stages

struct EogRegressionResult {
  Eigen::MatrixXd eeg;
  bool rank_deficient{false};
};

/// eeg - eog * B with B the least-squares (minimum-norm) solution of eog * B = eeg.
inline EogRegressionResult eog_regress(const Eigen::MatrixXd& eeg, const Eigen::MatrixXd& eog) {
  if (eeg.rows() != eog.rows()) throw DataError("eog_regress: EEG and EOG sample counts differ");
  for (Index c = 0; c < eog.cols(); ++c) {
    if (eog.col(c).cwiseAbs().maxCoeff() == 0.0) throw DataError("eog_regress: EOG column " + std::to_string(c) + " is identically zero");
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(eog);
  const bool deficient = cod.rank() < eog.cols();
  const Eigen::MatrixXd b = cod.solve(eeg);
  return {eeg - eog * b, deficient};
}

/// Channels (column indices) whose 2 s-window correlation with at least 95% of
/// the other channels is below 0.45 in at least half of the windows.
inline std::vector<Index> detect_bad_channels(const Eigen::MatrixXd& eeg, double fs, const PipelineConfig& cfg = {},
                                              std::vector<std::string>* warnings = nullptr) {
  const Index c = eeg.cols();
  if (c < 3) {
    if (warnings) warnings->push_back("bad-channel detection skipped: fewer than 3 channels");
    return {};
  }
  const Index win = static_cast<Index>(std::llround(cfg.bad_window_s * fs));
  if (win < 2 || eeg.rows() < win) throw DataError("bad-channel detection: trial shorter than one analysis window");
  const Index n_windows = eeg.rows() / win;
  std::vector<Index> bad_windows(static_cast<size_t>(c), 0);
  const double needed = cfg.bad_other_fraction * static_cast<double>(c - 1);

  Eigen::MatrixXd seg(win, c);
  for (Index w = 0; w < n_windows; ++w) {
    seg = eeg.middleRows(w * win, win);
    seg.rowwise() -= seg.colwise().mean();
    const Eigen::VectorXd norms = seg.colwise().norm();
    const Eigen::MatrixXd gram = seg.transpose() * seg;
    for (Index i = 0; i < c; ++i) {
      Index low = 0;
      for (Index j = 0; j < c; ++j) {
        if (j == i) continue;
        const double denom = norms(i) * norms(j);
        const double r = denom > 0.0 ? gram(i, j) / denom : 0.0;
        if (r < cfg.bad_correlation) ++low;
      }
      if (static_cast<double>(low) >= needed) ++bad_windows[static_cast<size_t>(i)];
    }
  }
  std::vector<Index> bad;
  for (Index i = 0; i < c; ++i) {
    if (static_cast<double>(bad_windows[static_cast<size_t>(i)]) >= cfg.bad_window_fraction * static_cast<double>(n_windows)) {
      bad.push_back(i);
    }
  }
  return bad;
}

/// Per channel, masks 1 s windows whose RMS is a robust outlier:
/// (rms - median) / (1.4826 * MAD) > k over that channel's windows.
inline SampleMask reject_high_power_windows(const Eigen::MatrixXd& eeg, double fs, const SampleMask& mask,
                                            double k = 5.0, double window_s = 1.0) {
  SampleMask out = mask;
  const Index win = static_cast<Index>(std::llround(window_s * fs));
  if (win < 1) throw ConfigError("window rejection: window shorter than one sample");
  const Index n_windows = eeg.rows() / win;
  for (Index c = 0; c < eeg.cols(); ++c) {
    if (mask.channel_removed(c) || n_windows == 0) continue;
    std::vector<double> rms(static_cast<size_t>(n_windows));
    for (Index w = 0; w < n_windows; ++w) {
      rms[static_cast<size_t>(w)] = std::sqrt(eeg.col(c).segment(w * win, win).squaredNorm() / static_cast<double>(win));
    }
    const double med = median(rms);
    const double spread = 1.4826 * mad(rms, med);
    if (!(spread > 0.0)) continue;
    for (Index w = 0; w < n_windows; ++w) {
      if ((rms[static_cast<size_t>(w)] - med) / spread > k) out.valid.col(c).segment(w * win, win).setConstant(false);
    }
  }
  return out;
}

struct ReferencedEeg {
  Eigen::MatrixXd eeg;
  SampleMask mask;
};

/// Subtracts the scheme's reference signal from every column. Columns are
/// described by `channels` (same order as eeg columns). Averages use only
/// valid samples of included channels; EOG and the shared Fp1 never enter
/// an average. A reference that is itself invalid at a sample invalidates
/// that sample on the channels it is subtracted from.
inline ReferencedEeg rereference(const Eigen::MatrixXd& eeg, const std::vector<Channel>& channels,
                                 const ReferenceScheme& scheme, const SampleMask& mask) {
  using Kind = ReferenceScheme::Kind;
  const Index T = eeg.rows();
  const Index C = eeg.cols();
  if (static_cast<Index>(channels.size()) != C) throw DataError("rereference: channel list does not match EEG columns");
  ReferencedEeg out{eeg, mask};

  auto averageable = [&](Index c) {
    const SetupTag t = channels[static_cast<size_t>(c)].tag;
    return t != SetupTag::eog && t != SetupTag::shared_fp1 && !mask.channel_removed(c);
  };
  auto group_average = [&](auto&& in_group, Eigen::VectorXd& ref, Eigen::Array<bool, Eigen::Dynamic, 1>& ok) {
    ref = Eigen::VectorXd::Zero(T);
    ok = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(T, false);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(T);
    for (Index c = 0; c < C; ++c) {
      if (!averageable(c) || !in_group(channels[static_cast<size_t>(c)].tag)) continue;
      for (Index t = 0; t < T; ++t) {
        if (mask.valid(t, c)) {
          ref(t) += eeg(t, c);
          count(t) += 1.0;
        }
      }
    }
    for (Index t = 0; t < T; ++t) {
      if (count(t) > 0.0) {
        ref(t) /= count(t);
        ok(t) = true;
      }
    }
  };
  auto subtract = [&](Index c, const Eigen::VectorXd& ref, const Eigen::Array<bool, Eigen::Dynamic, 1>& ok) {
    out.eeg.col(c) -= ref;
    out.mask.valid.col(c) = out.mask.valid.col(c) && ok;
  };

  switch (scheme.kind) {
    case Kind::common_average: {
      Eigen::VectorXd ref;
      Eigen::Array<bool, Eigen::Dynamic, 1> ok;
      group_average([](SetupTag) { return true; }, ref, ok);
      for (Index c = 0; c < C; ++c) subtract(c, ref, ok);
      break;
    }
    case Kind::same_ear_average:
    case Kind::other_ear_average: {
      for (Index c = 0; c < C; ++c) {
        const SetupTag t = channels[static_cast<size_t>(c)].tag;
        if (t == SetupTag::scalp) throw ConfigError("rereference: ear-average schemes are only valid for ear setups");
      }
      Eigen::VectorXd left, right;
      Eigen::Array<bool, Eigen::Dynamic, 1> left_ok, right_ok;
      group_average([](SetupTag t) { return is_left_ear(t); }, left, left_ok);
      group_average([](SetupTag t) { return is_right_ear(t); }, right, right_ok);
      const bool same = scheme.kind == Kind::same_ear_average;
      for (Index c = 0; c < C; ++c) {
        const SetupTag t = channels[static_cast<size_t>(c)].tag;
        if (is_left_ear(t)) {
          same ? subtract(c, left, left_ok) : subtract(c, right, right_ok);
        } else if (is_right_ear(t)) {
          same ? subtract(c, right, right_ok) : subtract(c, left, left_ok);
        }
      }
      break;
    }
    case Kind::single_electrode:
    case Kind::shared_fp1: {
      auto find = [&](auto&& pred) -> std::optional<Index> {
        for (Index c = 0; c < C; ++c) {
          if (pred(channels[static_cast<size_t>(c)])) return c;
        }
        return std::nullopt;
      };
      auto fp1_of = [&](RecordingSystem sys) {
        auto idx = find([sys](const Channel& ch) {
          return sys == RecordingSystem::ear ? ch.tag == SetupTag::shared_fp1
                                             : (ch.tag == SetupTag::scalp && ch.label == "Fp1");
        });
        if (!idx) throw DataError(std::string("rereference: no Fp1 electrode available for the ") +
                                  (sys == RecordingSystem::ear ? "ear" : "scalp") + " system");
        if (mask.channel_removed(*idx)) throw DataError("rereference: Fp1 reference electrode was removed as bad");
        return *idx;
      };
      std::optional<Index> target;
      if (scheme.kind == Kind::single_electrode) {
        target = find([&](const Channel& ch) { return ch.label == scheme.electrode; });
        if (!target) throw ConfigError("rereference: reference electrode '" + scheme.electrode + "' not available");
        if (mask.channel_removed(*target)) {
          throw DataError("rereference: reference electrode '" + scheme.electrode + "' was removed as bad");
        }
      }
      // Reference per recording system; cross-system targets go through both Fp1s.
      std::map<RecordingSystem, std::pair<Eigen::VectorXd, Eigen::Array<bool, Eigen::Dynamic, 1>>> refs;
      auto reference_for = [&](RecordingSystem sys) -> const auto& {
        auto it = refs.find(sys);
        if (it != refs.end()) return it->second;
        Eigen::VectorXd ref;
        Eigen::Array<bool, Eigen::Dynamic, 1> ok;
        if (scheme.kind == Kind::shared_fp1) {
          const Index f = fp1_of(sys);
          ref = eeg.col(f);
          ok = mask.valid.col(f);
        } else {
          const RecordingSystem tsys = system_of(channels[static_cast<size_t>(*target)].tag);
          ref = eeg.col(*target);
          ok = mask.valid.col(*target);
          if (tsys != sys) {
            const Index ft = fp1_of(tsys);
            const Index fo = fp1_of(sys);
            ref += eeg.col(fo) - eeg.col(ft);
            ok = ok && mask.valid.col(ft) && mask.valid.col(fo);
          }
        }
        return refs.emplace(sys, std::make_pair(std::move(ref), std::move(ok))).first->second;
      };
      for (Index c = 0; c < C; ++c) {
        const auto& [ref, ok] = reference_for(system_of(channels[static_cast<size_t>(c)].tag));
        subtract(c, ref, ok);
      }
      break;
    }
  }
  return out;
}

/// Scales so that the Frobenius norm over valid entries is 1, then zeroes
/// invalid entries.
inline Eigen::MatrixXd normalize_frobenius(const Eigen::MatrixXd& eeg, const SampleMask& mask) {
  if (mask.rows() != eeg.rows() || mask.cols() != eeg.cols()) throw DataError("normalize: mask shape mismatch");
  const Eigen::MatrixXd kept = mask.valid.select(eeg, 0.0);
  const double norm = kept.norm();
  if (mask.valid_count() == 0) throw DataError("normalize: no valid samples in trial");
  if (!(norm > 0.0)) throw NumericalError("normalize: valid entries are all zero");
  return kept / norm;
}

// ---------------------------------------------------------------------------
// Full pipeline

struct PreprocessedTrial {
  std::vector<Channel> channels;  // one per eeg column
  Eigen::MatrixXd eeg;            // time x channels at the envelope rate, invalid entries zero
  SampleMask mask;
  Eigen::VectorXd attended;    // standardised
  Eigen::VectorXd unattended;  // standardised
  Side attended_side{Side::left};
  Condition condition{Condition::fixation};
  double sample_rate_hz{kEnvelopeRateHz};
  CleaningReport report;

  const Eigen::VectorXd& left_envelope() const { return attended_side == Side::left ? attended : unattended; }
  const Eigen::VectorXd& right_envelope() const { return attended_side == Side::left ? unattended : attended; }
  std::vector<std::string> labels() const {
    std::vector<std::string> l;
    for (const auto& c : channels) l.push_back(c.label);
    return l;
  }
};

namespace detail {

template <typename F>
auto run_stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("preprocess stage '") + name + "': " + e.what());
  } catch (const DataError& e) {
    throw DataError(std::string("preprocess stage '") + name + "': " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("preprocess stage '") + name + "': " + e.what());
  }
}

}  // namespace detail

/// Cleans one raw trial for one setup. Stage order: bandpass, EOG regression
/// (scalp only), bad channels, ASR slot, window rejection, reference,
/// decimate, normalise. Envelopes are standardised per trial.
inline PreprocessedTrial preprocess_trial(const Trial& raw, const Montage& montage, Setup setup,
                                          const PipelineConfig& cfg = {}) {
  if (raw.eeg.cols() != montage.size()) throw DataError("preprocess: EEG columns do not match montage");
  const double fs = raw.sample_rate_hz;
  const Index factor = detail::run_stage("decimate", [&] { return dsp::decimation_factor(fs, cfg.target_rate_hz); });
  const auto scheme_it = cfg.reference.find(setup);
  const ReferenceScheme scheme = scheme_it == cfg.reference.end() ? ReferenceScheme::car() : scheme_it->second;

  // Working channel set: decoding channels, EOG (scalp), and whatever the
  // reference needs.
  std::vector<Index> work;
  std::vector<char> decoding;
  std::vector<Index> eog;
  const RecordingSystem own = setup == Setup::scalp ? RecordingSystem::scalp : RecordingSystem::ear;
  std::set<Index> helpers;
  if (scheme.kind == ReferenceScheme::Kind::shared_fp1) {
    if (auto f = montage.fp1_of(own)) helpers.insert(*f);
  } else if (scheme.kind == ReferenceScheme::Kind::single_electrode) {
    const Index tgt = detail::run_stage("reference", [&] {
      auto i = montage.find(scheme.electrode);
      if (!i) throw ConfigError("reference electrode '" + scheme.electrode + "' not in montage");
      return *i;
    });
    helpers.insert(tgt);
    const RecordingSystem tsys = system_of(montage.channels[static_cast<size_t>(tgt)].tag);
    if (tsys != own) {
      for (auto sys : {tsys, own}) {
        if (auto f = montage.fp1_of(sys)) helpers.insert(*f);
      }
    }
  }
  for (Index c = 0; c < montage.size(); ++c) {
    const SetupTag tag = montage.channels[static_cast<size_t>(c)].tag;
    const bool dec = belongs_to(setup, tag);
    const bool is_eog = setup == Setup::scalp && tag == SetupTag::eog;
    if (dec || is_eog || helpers.count(c)) {
      work.push_back(c);
      decoding.push_back(dec);
      if (is_eog) eog.push_back(static_cast<Index>(work.size() - 1));
    }
  }
  if (std::none_of(decoding.begin(), decoding.end(), [](char d) { return d; })) {
    throw DataError("preprocess: montage has no channels for setup " + to_string(setup));
  }
  std::vector<Channel> work_channels;
  Eigen::MatrixXd x(raw.eeg.rows(), static_cast<Index>(work.size()));
  for (size_t i = 0; i < work.size(); ++i) {
    work_channels.push_back(montage.channels[static_cast<size_t>(work[i])]);
    x.col(static_cast<Index>(i)) = raw.eeg.col(work[i]);
  }

  CleaningReport report;
  x = detail::run_stage("bandpass", [&] { return dsp::butter_bandpass_zero_phase(x, cfg.bandpass, fs); });
  report.stages_applied.push_back("bandpass");

  SampleMask mask = SampleMask::all_valid(x.rows(), x.cols());
  std::vector<Index> dec_cols;
  for (size_t i = 0; i < decoding.size(); ++i) {
    if (decoding[i]) dec_cols.push_back(static_cast<Index>(i));
  }

  if (cfg.eog_regression && setup == Setup::scalp && !eog.empty()) {
    detail::run_stage("eog_regression", [&] {
      Eigen::MatrixXd e(x.rows(), static_cast<Index>(eog.size()));
      for (size_t i = 0; i < eog.size(); ++i) e.col(static_cast<Index>(i)) = x.col(eog[i]);
      std::vector<Index> targets;
      for (Index c = 0; c < x.cols(); ++c) {
        if (std::find(eog.begin(), eog.end(), c) == eog.end()) targets.push_back(c);
      }
      Eigen::MatrixXd y(x.rows(), static_cast<Index>(targets.size()));
      for (size_t i = 0; i < targets.size(); ++i) y.col(static_cast<Index>(i)) = x.col(targets[i]);
      auto res = eog_regress(y, e);
      if (res.rank_deficient) report.warnings.push_back("EOG regressors rank deficient; pseudoinverse used");
      for (size_t i = 0; i < targets.size(); ++i) x.col(targets[i]) = res.eeg.col(static_cast<Index>(i));
      return 0;
    });
    report.stages_applied.push_back("eog_regression");
  }

  if (cfg.bad_channels) {
    detail::run_stage("bad_channels", [&] {
      Eigen::MatrixXd d(x.rows(), static_cast<Index>(dec_cols.size()));
      for (size_t i = 0; i < dec_cols.size(); ++i) d.col(static_cast<Index>(i)) = x.col(dec_cols[i]);
      const auto bad = detect_bad_channels(d, fs, cfg, &report.warnings);
      if (!bad.empty() && bad.size() == dec_cols.size()) {
        throw DataError("every channel failed the correlation criterion; the channels share no common signal");
      }
      for (Index b : bad) {
        const Index col = dec_cols[static_cast<size_t>(b)];
        mask.valid.col(col).setConstant(false);
        report.removed_channels.push_back(work_channels[static_cast<size_t>(col)].label);
      }
      return 0;
    });
    report.stages_applied.push_back("bad_channels");
  }

  if (cfg.asr) report.stages_applied.push_back("asr");

  if (cfg.window_rejection) {
    mask = detail::run_stage("window_rejection", [&] {
      return reject_high_power_windows(x, fs, mask, cfg.rejection_k, cfg.rejection_window_s);
    });
    report.stages_applied.push_back("window_rejection");
  }

  ReferencedEeg ref = detail::run_stage("reference", [&] { return rereference(x, work_channels, scheme, mask); });
  report.stages_applied.push_back("reference");

  Eigen::MatrixXd slow = dsp::decimate(ref.eeg, factor);
  SampleMask slow_mask{dsp::decimate(ref.mask.valid.matrix().cast<int>(), factor).array() != 0};
  report.stages_applied.push_back("decimate");

  PreprocessedTrial out;
  const Index n = std::min({slow.rows(), raw.attended_envelope.size(), raw.unattended_envelope.size()});
  out.eeg.resize(n, static_cast<Index>(dec_cols.size()));
  out.mask.valid.resize(n, static_cast<Index>(dec_cols.size()));
  for (size_t i = 0; i < dec_cols.size(); ++i) {
    out.channels.push_back(work_channels[static_cast<size_t>(dec_cols[i])]);
    out.eeg.col(static_cast<Index>(i)) = slow.col(dec_cols[i]).head(n);
    out.mask.valid.col(static_cast<Index>(i)) = slow_mask.valid.col(dec_cols[i]).head(n);
  }
  out.eeg = detail::run_stage("normalize", [&] { return normalize_frobenius(out.eeg, out.mask); });
  report.stages_applied.push_back("normalize");

  for (Index c = 0; c < out.eeg.cols(); ++c) {
    report.rejected_sample_fraction.push_back(
        1.0 - static_cast<double>(out.mask.valid.col(c).count()) / static_cast<double>(std::max<Index>(n, 1)));
  }
  out.attended = dsp::standardize(raw.attended_envelope.head(n));
  out.unattended = dsp::standardize(raw.unattended_envelope.head(n));
  out.attended_side = raw.attended_side;
  out.condition = raw.condition;
  out.sample_rate_hz = cfg.target_rate_hz;
  out.report = std::move(report);
  return out;
}

/// Early integration: concatenates channels of separately preprocessed
/// setups of the same trial.
inline PreprocessedTrial combine(const std::vector<PreprocessedTrial>& parts) {
  if (parts.empty()) throw DataError("combine: nothing to combine");
  PreprocessedTrial out = parts.front();
  for (size_t i = 1; i < parts.size(); ++i) {
    const auto& p = parts[i];
    if (p.eeg.rows() != out.eeg.rows()) throw DataError("combine: setups differ in length");
    Eigen::MatrixXd eeg(out.eeg.rows(), out.eeg.cols() + p.eeg.cols());
    eeg << out.eeg, p.eeg;
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> valid(out.eeg.rows(), eeg.cols());
    valid << out.mask.valid, p.mask.valid;
    out.eeg = std::move(eeg);
    out.mask.valid = std::move(valid);
    out.channels.insert(out.channels.end(), p.channels.begin(), p.channels.end());
    auto& r = out.report;
    r.removed_channels.insert(r.removed_channels.end(), p.report.removed_channels.begin(), p.report.removed_channels.end());
    r.rejected_sample_fraction.insert(r.rejected_sample_fraction.end(), p.report.rejected_sample_fraction.begin(),
                                      p.report.rejected_sample_fraction.end());
    r.warnings.insert(r.warnings.end(), p.report.warnings.begin(), p.report.warnings.end());
  }
  return out;
}

}  // namespace aad
