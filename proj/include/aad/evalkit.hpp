#pragma once

// Cross-validation over preprocessed trials, accuracy curves, and the
// significance machinery used to read them.

#include "aad/decoder.hpp"
#include "aad/error.hpp"
#include "aad/preprocess.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace aad {

inline const std::vector<double>& default_windows() {
  static const std::vector<double> w{1, 5, 10, 30, 60, 120, 300, 600};
  return w;
}

struct AccuracyCurve {
  std::string participant;  // or "pooled"
  std::vector<double> window_lengths_s;
  std::vector<Index> n_decisions;
  std::vector<Index> n_correct;

  explicit AccuracyCurve(std::string id = {}, std::vector<double> windows = default_windows())
      : participant(std::move(id)),
        window_lengths_s(std::move(windows)),
        n_decisions(window_lengths_s.size(), 0),
        n_correct(window_lengths_s.size(), 0) {}

  void add(size_t w, const std::vector<Decision>& ds) {
    n_decisions[w] += static_cast<Index>(ds.size());
    for (const auto& d : ds) n_correct[w] += d.correct;
  }

  double accuracy(size_t w) const {
    return n_decisions[w] == 0 ? 0.0 : static_cast<double>(n_correct[w]) / static_cast<double>(n_decisions[w]);
  }

  size_t index_of(double window_s) const {
    for (size_t i = 0; i < window_lengths_s.size(); ++i) {
      if (window_lengths_s[i] == window_s) return i;
    }
    throw ConfigError("accuracy curve has no " + std::to_string(window_s) + " s window");
  }
};

struct CorrelationSample {
  double corr_attended{0.0};
  double corr_unattended{0.0};
};

/// Lagged designs and per-trial sufficient statistics for a set of
/// preprocessed trials sharing one channel layout. Channel subsets select
/// column blocks, so evaluating a subset never re-runs preprocessing.
class DecodingSet {
 public:
  DecodingSet(const std::vector<PreprocessedTrial>& trials, LagGrid grid = {}) : grid_(grid) {
    if (trials.empty()) throw DataError("decoding set: no trials");
    labels_ = trials.front().labels();
    for (const auto& t : trials) {
      if (t.labels() != labels_) throw DataError("decoding set: trials disagree on channel layout");
      if (t.sample_rate_hz != grid.fs) throw ConfigError("decoding set: trial rate does not match lag grid rate");
      Item it;
      it.x = build_lagged(t.eeg, grid_);
      it.stats = GramStats::from(it.x, t.attended);
      it.env1 = t.left_envelope();
      it.env2 = t.right_envelope();
      it.attended_speaker = t.attended_side == Side::left ? 1 : 2;
      items_.push_back(std::move(it));
    }
  }

  Index n_trials() const { return static_cast<Index>(items_.size()); }
  Index n_channels() const { return static_cast<Index>(labels_.size()); }
  const std::vector<std::string>& labels() const { return labels_; }
  const LagGrid& grid() const { return grid_; }
  Index trial_samples(Index k) const { return items_[static_cast<size_t>(k)].x.rows(); }

  std::vector<Index> all_channels() const {
    std::vector<Index> c(static_cast<size_t>(n_channels()));
    std::iota(c.begin(), c.end(), Index{0});
    return c;
  }

  /// Pooled statistics of `trials` restricted to `channels` (sorted ascending
  /// internally so equal sets give bit-identical designs).
  GramStats pooled(const std::vector<Index>& trials, const std::vector<Index>& channels) const {
    GramStats g;
    for (Index k : trials) g += items_[static_cast<size_t>(k)].stats;
    const auto cols = columns(channels);
    return static_cast<Index>(cols.size()) == g.dim() ? g : g.subset(cols);
  }

  Decoder train(const std::vector<Index>& trials, const std::vector<Index>& channels, const TrainOptions& opt = {}) const {
    return train_from(pooled(trials, channels), channels, opt);
  }

  Decoder train_from(const GramStats& stats, const std::vector<Index>& channels, const TrainOptions& opt = {}) const {
    std::vector<std::string> names;
    for (Index c : sorted(channels)) names.push_back(labels_[static_cast<size_t>(c)]);
    return aad::train(stats, std::move(names), grid_, opt);
  }

  Eigen::VectorXd reconstruct(const Decoder& dec, Index trial, const std::vector<Index>& channels) const {
    const auto& x = items_[static_cast<size_t>(trial)].x;
    const auto cols = columns(channels);
    if (static_cast<Index>(cols.size()) == x.cols()) return aad::reconstruct(dec, x);
    return aad::reconstruct(dec, x(Eigen::all, cols));
  }

  std::vector<Decision> test(const Decoder& dec, Index trial, const std::vector<Index>& channels, double window_s) const {
    return decide(reconstruct(dec, trial, channels), trial, window_s);
  }

  std::vector<Decision> decide(const Eigen::VectorXd& recon, Index trial, double window_s) const {
    const auto& it = items_[static_cast<size_t>(trial)];
    return classify_windows(recon, it.env1, it.env2, window_samples(window_s, grid_.fs), it.attended_speaker);
  }

  int attended_speaker(Index trial) const { return items_[static_cast<size_t>(trial)].attended_speaker; }
  const GramStats& stats(Index trial) const { return items_[static_cast<size_t>(trial)].stats; }

  std::vector<Index> columns(const std::vector<Index>& channels) const {
    std::vector<Index> cols;
    const Index taps = grid_.taps();
    for (Index c : sorted(channels)) {
      if (c < 0 || c >= n_channels()) throw DataError("decoding set: channel index out of range");
      for (Index l = 0; l < taps; ++l) cols.push_back(c * taps + l);
    }
    return cols;
  }

  /// Column indices of the named channels.
  std::vector<Index> channel_indices(const std::vector<std::string>& names) const {
    std::vector<Index> out;
    for (const auto& n : names) {
      auto it = std::find(labels_.begin(), labels_.end(), n);
      if (it == labels_.end()) throw DataError("decoding set: no channel '" + n + "'");
      out.push_back(static_cast<Index>(it - labels_.begin()));
    }
    return out;
  }

 private:
  static std::vector<Index> sorted(std::vector<Index> v) {
    std::sort(v.begin(), v.end());
    if (std::adjacent_find(v.begin(), v.end()) != v.end()) throw DataError("decoding set: duplicate channel in subset");
    return v;
  }

  struct Item {
    Eigen::MatrixXd x;
    GramStats stats;
    Eigen::VectorXd env1, env2;
    int attended_speaker{1};
  };
  LagGrid grid_;
  std::vector<std::string> labels_;
  std::vector<Item> items_;
};

struct CvConfig {
  std::vector<double> windows{default_windows()};
  LagGrid grid{};
  double correlation_window_s{60.0};
};

struct CvResult {
  AccuracyCurve curve;
  std::vector<CorrelationSample> correlations;
};

inline void collect_correlations(const std::vector<Decision>& ds, int attended_speaker,
                                 std::vector<CorrelationSample>& out) {
  for (const auto& d : ds) {
    out.push_back(attended_speaker == 1 ? CorrelationSample{d.corr_1, d.corr_2} : CorrelationSample{d.corr_2, d.corr_1});
  }
}

/// Leave-one-trial-out on an already-built decoding set and channel subset.
inline CvResult loto_cv(const DecodingSet& set, const std::vector<Index>& channels, const CvConfig& cfg,
                        const std::string& participant = {}) {
  if (set.n_trials() < 2) throw DataError("loto_cv: need at least 2 trials");
  CvResult res{AccuracyCurve(participant, cfg.windows), {}};
  for (Index k = 0; k < set.n_trials(); ++k) {
    std::vector<Index> train;
    for (Index j = 0; j < set.n_trials(); ++j) {
      if (j != k) train.push_back(j);
    }
    const Decoder dec = set.train(train, channels);
    const Eigen::VectorXd recon = set.reconstruct(dec, k, channels);
    for (size_t w = 0; w < cfg.windows.size(); ++w) {
      const auto ds = set.decide(recon, k, cfg.windows[w]);
      res.curve.add(w, ds);
      if (cfg.windows[w] == cfg.correlation_window_s) collect_correlations(ds, set.attended_speaker(k), res.correlations);
    }
  }
  return res;
}

inline CvResult loto_cv(const std::vector<PreprocessedTrial>& trials, const CvConfig& cfg = {},
                        const std::string& participant = {}) {
  if (trials.size() < 2) throw DataError("loto_cv: need at least 2 trials");
  const DecodingSet set(trials, cfg.grid);
  return loto_cv(set, set.all_channels(), cfg, participant);
}

struct ParticipantTrials {
  std::string participant_id;
  std::vector<PreprocessedTrial> trials;
};

/// Leave-one-participant-out: decoder pooled over every trial of the other
/// participants, tested on every trial of the held-out one.
inline std::vector<CvResult> lopo_cv(const std::vector<ParticipantTrials>& participants, const CvConfig& cfg = {}) {
  if (participants.size() < 2) throw DataError("lopo_cv: need at least 2 participants");
  const auto ref = participants.front().trials.at(0).labels();
  for (const auto& p : participants) {
    const auto labels = p.trials.at(0).labels();
    if (labels != ref) {
      std::string diff;
      for (const auto& l : labels) {
        if (std::find(ref.begin(), ref.end(), l) == ref.end()) diff += " +" + l;
      }
      for (const auto& l : ref) {
        if (std::find(labels.begin(), labels.end(), l) == labels.end()) diff += " -" + l;
      }
      if (diff.empty()) diff = " (same channels, different order)";
      throw DataError("lopo_cv: participant " + p.participant_id + " channel set differs from " +
                      participants.front().participant_id + ":" + diff);
    }
  }
  std::vector<DecodingSet> sets;
  for (const auto& p : participants) sets.emplace_back(p.trials, cfg.grid);
  const auto channels = sets.front().all_channels();

  std::vector<CvResult> out;
  for (size_t held = 0; held < sets.size(); ++held) {
    GramStats pool;
    for (size_t q = 0; q < sets.size(); ++q) {
      if (q == held) continue;
      for (Index k = 0; k < sets[q].n_trials(); ++k) pool += sets[q].stats(k);
    }
    const Decoder dec = sets[held].train_from(pool, channels);
    CvResult res{AccuracyCurve(participants[held].participant_id, cfg.windows), {}};
    for (Index k = 0; k < sets[held].n_trials(); ++k) {
      const Eigen::VectorXd recon = sets[held].reconstruct(dec, k, channels);
      for (size_t w = 0; w < cfg.windows.size(); ++w) {
        const auto ds = sets[held].decide(recon, k, cfg.windows[w]);
        res.curve.add(w, ds);
        if (cfg.windows[w] == cfg.correlation_window_s) {
          collect_correlations(ds, sets[held].attended_speaker(k), res.correlations);
        }
      }
    }
    out.push_back(std::move(res));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Statistics

inline double binomial_log_pmf(Index k, Index n, double p) {
  if (k < 0 || k > n) return -std::numeric_limits<double>::infinity();
  const double nk = static_cast<double>(n), kk = static_cast<double>(k);
  return std::lgamma(nk + 1.0) - std::lgamma(kk + 1.0) - std::lgamma(nk - kk + 1.0) + kk * std::log(p) +
         (nk - kk) * std::log1p(-p);
}

inline double binomial_cdf(Index k, Index n, double p = 0.5) {
  if (k < 0) return 0.0;
  if (k >= n) return 1.0;
  double s = 0.0;
  for (Index i = 0; i <= k; ++i) s += std::exp(binomial_log_pmf(i, n, p));
  return std::min(1.0, s);
}

/// Smallest k with CDF(k) >= q (inverse binomial CDF).
inline Index binomial_quantile(double q, Index n, double p = 0.5) {
  if (n < 1) throw ConfigError("binomial: need n >= 1");
  double s = 0.0;
  for (Index k = 0; k <= n; ++k) {
    s += std::exp(binomial_log_pmf(k, n, p));
    if (s >= q - 1e-12) return k;
  }
  return n;
}

/// Chance-level significance threshold for n two-class decisions, as an
/// accuracy fraction: inverse binomial CDF (p = 0.5) at 1 - alpha, over n.
inline double binomial_threshold(Index n, double alpha = 0.05) {
  return static_cast<double>(binomial_quantile(1.0 - alpha, n)) / static_cast<double>(n);
}

/// Two-sided central band of chance accuracy at the given level.
inline std::pair<double, double> binomial_band(Index n, double level = 0.95) {
  const double tail = (1.0 - level) / 2.0;
  return {static_cast<double>(binomial_quantile(tail, n)) / static_cast<double>(n),
          static_cast<double>(binomial_quantile(1.0 - tail, n)) / static_cast<double>(n)};
}

enum class ZeroMethod { drop, pratt };

struct WilcoxonResult {
  double p_value{1.0};
  double w_plus{0.0};  // sum of ranks of positive differences
  Index n_used{0};
  bool exact{true};
  bool all_zero{false};
};

inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

/// Two-sided Wilcoxon signed-rank test on paired samples. Average ranks for
/// ties; exact null distribution for up to 25 nonzero differences, normal
/// approximation (continuity corrected) above.
inline WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& x, const std::vector<double>& y,
                                           ZeroMethod zeros = ZeroMethod::drop) {
  if (x.size() != y.size()) throw DataError("wilcoxon: samples differ in length");
  std::vector<double> d;
  for (size_t i = 0; i < x.size(); ++i) {
    const double v = x[i] - y[i];
    if (v != 0.0 || zeros == ZeroMethod::pratt) d.push_back(v);
  }
  WilcoxonResult r;
  if (std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; })) {
    r.all_zero = true;
    return r;
  }
  // doubled average ranks of |d|
  std::vector<size_t> order(d.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return std::abs(d[a]) < std::abs(d[b]); });
  std::vector<long> rank2(d.size());
  for (size_t i = 0; i < order.size();) {
    size_t j = i;
    while (j + 1 < order.size() && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const long r2 = static_cast<long>(i + 1 + j + 1);  // 2 * average rank
    for (size_t k = i; k <= j; ++k) rank2[order[k]] = r2;
    i = j + 1;
  }
  std::vector<long> used;
  long w2 = 0;
  for (size_t i = 0; i < d.size(); ++i) {
    if (d[i] == 0.0) continue;
    used.push_back(rank2[i]);
    if (d[i] > 0.0) w2 += rank2[i];
  }
  r.n_used = static_cast<Index>(used.size());
  r.w_plus = static_cast<double>(w2) / 2.0;
  const long total2 = std::accumulate(used.begin(), used.end(), 0L);

  if (r.n_used <= 25) {
    std::vector<double> count(static_cast<size_t>(total2 + 1), 0.0);
    count[0] = 1.0;
    long reach = 0;
    for (long v : used) {
      for (long s = reach; s >= 0; --s) count[static_cast<size_t>(s + v)] += count[static_cast<size_t>(s)];
      reach += v;
    }
    const double all = std::ldexp(1.0, static_cast<int>(used.size()));
    double lower = 0.0, upper = 0.0;
    for (long s = 0; s <= total2; ++s) {
      if (s <= w2) lower += count[static_cast<size_t>(s)];
      if (s >= w2) upper += count[static_cast<size_t>(s)];
    }
    r.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / all);
    r.exact = true;
  } else {
    // Mean and variance of sum_i r_i B_i, B_i ~ Bernoulli(1/2); exact under ties.
    const double mean = static_cast<double>(total2) / 4.0;
    double var = 0.0;
    for (long v : used) var += static_cast<double>(v) * static_cast<double>(v) / 16.0;
    const double diff = std::abs(r.w_plus - mean) - 0.5;
    r.p_value = std::min(1.0, 2.0 * normal_sf(std::max(0.0, diff) / std::sqrt(var)));
    r.exact = false;
  }
  return r;
}

/// Benjamini-Hochberg step-up procedure at FDR level alpha.
inline std::vector<bool> benjamini_hochberg(const std::vector<double>& p, double alpha = 0.05) {
  const size_t m = p.size();
  std::vector<size_t> order(m);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return p[a] < p[b]; });
  size_t cutoff = 0;
  for (size_t i = 0; i < m; ++i) {
    if (p[order[i]] <= static_cast<double>(i + 1) * alpha / static_cast<double>(m)) cutoff = i + 1;
  }
  std::vector<bool> sig(m, false);
  for (size_t i = 0; i < cutoff; ++i) sig[order[i]] = true;
  return sig;
}

/// Right-tail binomial p-value of k or more correct out of n at chance.
inline double binomial_p_value(Index k, Index n) { return 1.0 - binomial_cdf(k - 1, n); }

}  // namespace aad
