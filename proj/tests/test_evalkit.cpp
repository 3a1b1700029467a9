#include "aad/corpus.hpp"
#include "aad/evalkit.hpp"
#include "aad/preprocess.hpp"

#include "helpers.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace aad;

namespace {

SynthDatasetSpec spec(double sigma, std::uint64_t seed = 1, int participants = 1) {
  SynthDatasetSpec s;
  s.participants = participants;
  s.montage = scalp_montage(6);
  s.noise_sigma = sigma;
  s.seed = seed;
  return s;
}

std::vector<PreprocessedTrial> preprocess(const Recording& rec) {
  std::vector<PreprocessedTrial> out;
  for (const auto& t : rec.trials) {
    out.push_back(preprocess_trial(t, rec.montage, Setup::scalp, PipelineConfig::no_artifact_removal()));
  }
  return out;
}

/// Trials whose EEG carries no stimulus information at all.
std::vector<PreprocessedTrial> null_trials(std::uint64_t seed, Index samples = 12000) {
  const Montage m = scalp_montage(4);
  std::vector<PreprocessedTrial> out;
  for (int k = 0; k < 6; ++k) {
    PreprocessedTrial t;
    t.channels = m.channels;
    t.eeg = testutil::randn(samples, 4, seed * 100 + static_cast<std::uint64_t>(k));
    t.mask = SampleMask::all_valid(samples, 4);
    t.attended = dsp::standardize(synthetic_envelope(samples, seed * 100 + 50 + static_cast<std::uint64_t>(k)));
    t.unattended = dsp::standardize(synthetic_envelope(samples, seed * 100 + 80 + static_cast<std::uint64_t>(k)));
    t.attended_side = k % 2 == 0 ? Side::left : Side::right;
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

TEST(Loto, NoiseFreeIsPerfect) {
  const auto res = loto_cv(preprocess(make_synthetic_recording(spec(0.0), 0)));
  for (size_t w = 0; w < res.curve.window_lengths_s.size(); ++w) {
    EXPECT_EQ(res.curve.accuracy(w), 1.0) << res.curve.window_lengths_s[w];
  }
}

TEST(Loto, DecisionCountsPerWindow) {
  const auto res = loto_cv(preprocess(make_synthetic_recording(spec(5.0, 2), 0)));
  const std::vector<Index> want{3600, 720, 360, 120, 60, 30, 12, 6};
  EXPECT_EQ(res.curve.n_decisions, want);
  EXPECT_EQ(res.correlations.size(), 60U);
  for (const auto& c : res.correlations) {
    EXPECT_GE(c.corr_attended, -1.0);
    EXPECT_LE(c.corr_attended, 1.0);
  }
}

TEST(Loto, NoiseGivesMonotoneAboveChanceCurve) {
  const auto res = loto_cv(preprocess(make_synthetic_recording(spec(20.0, 3), 0)));
  const auto& c = res.curve;
  EXPECT_GT(c.accuracy(c.index_of(60)), binomial_threshold(60));
  EXPECT_LT(c.accuracy(c.index_of(1)), c.accuracy(c.index_of(60)));
}

TEST(Loto, NullDataStaysInChanceBand) {
  const auto res = loto_cv(null_trials(1));
  const auto [lo, hi] = binomial_band(60);
  const double acc = res.curve.accuracy(res.curve.index_of(60));
  EXPECT_GE(acc, lo);
  EXPECT_LE(acc, hi);
}

TEST(Loto, TooFewTrials) {
  auto t = null_trials(2, 400);
  t.resize(1);
  EXPECT_THROW(loto_cv(t), DataError);
}

TEST(Loto, CoinFlipRespectsBand) {
  const auto trials = null_trials(3);
  const DecodingSet set(trials);
  const auto [lo, hi] = binomial_band(60);
  int inside = 0;
  const int reps = 100;
  for (int r = 0; r < reps; ++r) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(r) + 1);
    Index correct = 0, total = 0;
    for (Index k = 0; k < set.n_trials(); ++k) {
      const Index n = set.trial_samples(k) / window_samples(60, 20);
      for (Index w = 0; w < n; ++w) {
        const int chosen = rng() % 2 == 0 ? 1 : 2;
        correct += chosen == set.attended_speaker(k);
        ++total;
      }
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(total);
    inside += acc >= lo && acc <= hi;
  }
  EXPECT_GE(inside, 95);
}

TEST(Accuracy, PermutationInvariant) {
  std::vector<Decision> ds(50);
  for (size_t i = 0; i < ds.size(); ++i) ds[i].correct = (i * 7) % 3 == 0;
  const double a = accuracy(ds);
  std::mt19937_64 rng(5);
  std::shuffle(ds.begin(), ds.end(), rng);
  EXPECT_EQ(accuracy(ds), a);
  AccuracyCurve c("x", {1.0});
  c.add(0, ds);
  EXPECT_EQ(c.accuracy(0), a);
}

TEST(Lopo, IdenticalParticipantsMatchOwnDecoder) {
  const Recording rec = make_synthetic_recording(spec(10.0, 4), 0);
  const auto trials = preprocess(rec);
  const auto res = lopo_cv({{"A", trials}, {"B", trials}});
  ASSERT_EQ(res.size(), 2U);
  const DecodingSet set(trials);
  const auto ch = set.all_channels();
  const Decoder own = set.train({0, 1, 2, 3, 4, 5}, ch);
  AccuracyCurve want("A");
  for (Index k = 0; k < 6; ++k) {
    for (size_t w = 0; w < want.window_lengths_s.size(); ++w) want.add(w, set.test(own, k, ch, want.window_lengths_s[w]));
  }
  EXPECT_EQ(res[0].curve.n_correct, want.n_correct);
  EXPECT_EQ(res[1].curve.n_correct, want.n_correct);
}

TEST(Lopo, InvertedCouplingIsBelowChance) {
  SynthDatasetSpec s = spec(5.0, 5, 3);
  s.coupling_sign = {1.0, 1.0, -1.0};
  s.unattended_gain = 0.0;
  std::vector<ParticipantTrials> ps;
  for (int p = 0; p < 3; ++p) {
    const Recording r = make_synthetic_recording(s, p);
    ps.push_back({r.participant_id, preprocess(r)});
  }
  const auto res = lopo_cv(ps);
  ASSERT_EQ(res.size(), 3U);
  const auto& inv = res[2].curve;
  EXPECT_LT(inv.accuracy(inv.index_of(60)), 0.5);
  EXPECT_GT(res[0].curve.accuracy(inv.index_of(60)), 0.5);
}

TEST(Lopo, MontageMismatchListsChannels) {
  const auto a = null_trials(6, 400);
  auto b = null_trials(7, 400);
  for (auto& t : b) t.channels[2].label = "Oz";
  try {
    lopo_cv({{"P01", a}, {"P02", b}});
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("+Oz"), std::string::npos) << msg;
    EXPECT_NE(msg.find("-" + a[0].channels[2].label), std::string::npos) << msg;
  }
}

TEST(Binomial, PaperThresholds) {
  EXPECT_NEAR(binomial_threshold(60), 0.60, 1e-12);
  EXPECT_EQ(binomial_threshold(1), 1.0);
}

TEST(Binomial, LargeNMatchesExactEnumeration) {
  for (long n : {100L, 900L, 3600L}) {
    const long k = oracle::binomial_quantile_half(0.95L, n);
    EXPECT_DOUBLE_EQ(binomial_threshold(n), static_cast<double>(k) / static_cast<double>(n)) << n;
    EXPECT_NEAR(binomial_cdf(k, n), static_cast<double>(oracle::binomial_cdf_half(k, n)), 1e-10);
  }
}

TEST(Binomial, NonIncreasingAlongEachCurve) {
  // Decision counts of one accuracy curve: 6 ten-minute trials per
  // participant, pooled over up to 15 participants.
  for (Index p = 1; p <= 15; ++p) {
    double prev = 1.0;
    for (auto it = default_windows().rbegin(); it != default_windows().rend(); ++it) {
      const Index n = p * 6 * static_cast<Index>(600 / *it);
      EXPECT_LE(binomial_threshold(n), prev + 1e-12) << p << " participants, n=" << n;
      prev = binomial_threshold(n);
    }
  }
  EXPECT_GT(binomial_threshold(54000), 0.5);
  EXPECT_LT(binomial_threshold(54000), 0.504);
}

TEST(Binomial, NotMonotoneForArbitraryCounts) {
  EXPECT_GT(binomial_threshold(36), binomial_threshold(30));
  EXPECT_GT(binomial_threshold(6), binomial_threshold(5));
}

TEST(Wilcoxon, IdenticalSamples) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const auto r = wilcoxon_signed_rank(x, x);
  EXPECT_EQ(r.p_value, 1.0);
  EXPECT_TRUE(r.all_zero);
}

TEST(Wilcoxon, SixPositiveDifferences) {
  const std::vector<double> x{1.1, 2.2, 3.3, 4.4, 5.5, 6.6}, y{1, 2, 3, 4, 5, 6};
  const auto r = wilcoxon_signed_rank(x, y);
  EXPECT_NEAR(r.p_value, 0.03125, 1e-15);
  EXPECT_TRUE(r.exact);
  EXPECT_EQ(r.w_plus, 21.0);
}

TEST(Wilcoxon, SymmetricInArguments) {
  const auto x = testutil::randn(15, 1), y = testutil::randn(15, 2);
  const std::vector<double> a(x.data(), x.data() + 15), b(y.data(), y.data() + 15);
  EXPECT_DOUBLE_EQ(wilcoxon_signed_rank(a, b).p_value, wilcoxon_signed_rank(b, a).p_value);
}

TEST(Wilcoxon, ExactMatchesEnumerationWithTies) {
  std::mt19937_64 rng(9);
  for (int rep = 0; rep < 40; ++rep) {
    const size_t n = 5 + rep % 8;
    std::vector<double> x(n), y(n, 0.0), d(n);
    for (size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(static_cast<int>(rng() % 7) - 2);  // small integers force ties and zeros
      d[i] = x[i];
    }
    EXPECT_NEAR(wilcoxon_signed_rank(x, y).p_value, oracle::wilcoxon_enumerate(d), 1e-12) << rep;
  }
}

TEST(Wilcoxon, NormalApproximationAboveTwentyFive) {
  const Index n = 40;
  std::vector<double> x(n), y(n, 0.0);
  for (Index i = 0; i < n; ++i) x[static_cast<size_t>(i)] = (i % 3 == 0 ? -1.0 : 1.0) * static_cast<double>(i + 1);
  const auto r = wilcoxon_signed_rank(x, y);
  EXPECT_FALSE(r.exact);
  double w = 0;
  for (Index i = 0; i < n; ++i) w += x[static_cast<size_t>(i)] > 0 ? static_cast<double>(i + 1) : 0.0;
  const double nn = static_cast<double>(n);
  const double mean = nn * (nn + 1) / 4, sd = std::sqrt(nn * (nn + 1) * (2 * nn + 1) / 24);
  const double z = (std::abs(w - mean) - 0.5) / sd;
  EXPECT_NEAR(r.p_value, std::erfc(z / std::sqrt(2.0)), 1e-12);
}

TEST(Wilcoxon, PrattKeepsZerosInRanking) {
  const std::vector<double> x{0, 0, 1, 2, 3, -4, 5, 6}, y(8, 0.0);
  const auto drop = wilcoxon_signed_rank(x, y);
  const auto pratt = wilcoxon_signed_rank(x, y, ZeroMethod::pratt);
  EXPECT_EQ(drop.n_used, 6);
  EXPECT_EQ(pratt.n_used, 6);
  EXPECT_EQ(drop.w_plus, 1 + 2 + 3 + 5 + 6);
  EXPECT_EQ(pratt.w_plus, 3 + 4 + 5 + 7 + 8);
}

TEST(Bh, SingleAndAllOnes) {
  EXPECT_EQ(benjamini_hochberg({0.04}), std::vector<bool>{true});
  EXPECT_EQ(benjamini_hochberg({0.06}), std::vector<bool>{false});
  EXPECT_EQ(benjamini_hochberg({1, 1, 1}), (std::vector<bool>{false, false, false}));
  EXPECT_TRUE(benjamini_hochberg({}).empty());
}

TEST(Bh, ExactlySixOfFifteen) {
  // p_(i) <= i*alpha/m for i = 6, and above the line for every i > 6.
  std::vector<double> p;
  for (int i = 1; i <= 6; ++i) p.push_back(i * 0.05 / 15 - 1e-6);
  for (int i = 7; i <= 15; ++i) p.push_back(i * 0.05 / 15 + 0.01);
  std::mt19937_64 rng(1);
  std::shuffle(p.begin(), p.end(), rng);
  const auto sig = benjamini_hochberg(p);
  EXPECT_EQ(std::count(sig.begin(), sig.end(), true), 6);
  for (size_t i = 0; i < p.size(); ++i) EXPECT_EQ(sig[i], p[i] < 0.05 * 6 / 15);
}

TEST(Bh, Monotone) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 0.1);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> p(12);
    for (auto& v : p) v = u(rng);
    const auto sig = benjamini_hochberg(p);
    for (size_t i = 0; i < p.size(); ++i) {
      for (size_t j = 0; j < p.size(); ++j) {
        if (sig[i] && p[j] <= p[i]) {
          EXPECT_TRUE(sig[j]);
        }
      }
    }
  }
}
