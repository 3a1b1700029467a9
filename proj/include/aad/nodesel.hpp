#pragma once

// Sensor-network experiments: greedy forward node selection inside nested
// leave-one-trial-out CV, a random-order baseline, and selection-order
// importance weights.

#include "aad/corpus.hpp"
#include "aad/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace aad {

struct Node {
  int id{0};
  std::string name;
  std::vector<std::string> channels;
};

/// Every scalp electrode except Fp1 is its own node, in montage order; then
/// the around-ear set and the in-ear set as one node each.
inline std::vector<Node> build_node_catalog(const std::vector<Channel>& available) {
  std::vector<Node> nodes;
  Node around{0, "around_ear", {}}, in{0, "in_ear", {}};
  for (const auto& ch : available) {
    if (ch.tag == SetupTag::scalp && ch.label != "Fp1") {
      nodes.push_back({static_cast<int>(nodes.size()), ch.label, {ch.label}});
    } else if (ch.tag == SetupTag::around_ear_left || ch.tag == SetupTag::around_ear_right) {
      around.channels.push_back(ch.label);
    } else if (ch.tag == SetupTag::in_ear_left || ch.tag == SetupTag::in_ear_right) {
      in.channels.push_back(ch.label);
    }
  }
  for (Node* n : {&around, &in}) {
    if (n->channels.empty()) continue;
    n->id = static_cast<int>(nodes.size());
    nodes.push_back(*n);
  }
  return nodes;
}

inline const Node& node_by_name(const std::vector<Node>& catalog, const std::string& name) {
  for (const auto& n : catalog) {
    if (n.name == name) return n;
  }
  throw ConfigError("no node named '" + name + "'");
}

struct NodeSelConfig {
  double validation_window_s{30.0};
  double test_window_s{60.0};
  double half_life_nodes{2.0};  // k-th node weight 2^(-(k-1)/half_life)
};

struct FoldTrace {
  Index test_trial{0};
  std::vector<int> selected;              // node ids in selection order
  std::vector<double> validation_score;   // inner-CV accuracy after each addition
  std::vector<Index> test_correct;        // outer test, index = added-node count (0 = base)
  std::vector<Index> test_decisions;
};

struct SelectionTrace {
  std::vector<int> base;
  std::vector<FoldTrace> folds;

  /// Outer accuracy per added-node count, pooling decisions over folds.
  std::vector<double> accuracy_per_count() const {
    std::vector<double> acc;
    if (folds.empty()) return acc;
    for (size_t k = 0; k < folds.front().test_correct.size(); ++k) {
      Index ok = 0, n = 0;
      for (const auto& f : folds) {
        ok += f.test_correct[k];
        n += f.test_decisions[k];
      }
      acc.push_back(n == 0 ? 0.0 : static_cast<double>(ok) / static_cast<double>(n));
    }
    return acc;
  }
};

/// Called for every inner fold with (outer test trial, inner train trials, inner validation trial).
using FoldObserver = std::function<void(Index, const std::vector<Index>&, Index)>;

namespace detail {

inline std::vector<Index> channels_of(const DecodingSet& set, const std::vector<Node>& catalog,
                                      const std::vector<int>& nodes) {
  std::vector<std::string> names;
  for (int id : nodes) {
    const auto& n = catalog.at(static_cast<size_t>(id));
    names.insert(names.end(), n.channels.begin(), n.channels.end());
  }
  return set.channel_indices(names);
}

inline std::pair<Index, Index> outer_score(const DecodingSet& set, const std::vector<Index>& train, Index test,
                                           const std::vector<Index>& channels, double window_s) {
  const Decoder dec = set.train(train, channels);
  const auto ds = set.test(dec, test, channels, window_s);
  Index ok = 0;
  for (const auto& d : ds) ok += d.correct;
  return {ok, static_cast<Index>(ds.size())};
}

}  // namespace detail

/// Greedy forward selection, one trace per outer fold. At every step each
/// remaining candidate is scored by the mean inner leave-one-trial-out
/// accuracy (validation windows) on the outer-training trials; the best is
/// added, lowest node id on ties. After every addition the outer held-out
/// trial is scored at the test window length.
inline SelectionTrace greedy_select(const DecodingSet& set, const std::vector<Node>& catalog, const std::vector<int>& base,
                                    const std::vector<int>& candidates, const NodeSelConfig& cfg = {},
                                    const FoldObserver& observer = {}) {
  if (set.n_trials() < 3) throw DataError("greedy_select: nested CV needs at least 3 trials");
  if (base.empty()) throw ConfigError("greedy_select: base node set is empty");
  SelectionTrace trace;
  trace.base = base;
  std::set<int> seen(base.begin(), base.end());
  for (int c : candidates) {
    if (!seen.insert(c).second) throw ConfigError("greedy_select: node " + std::to_string(c) + " listed twice");
  }

  for (Index outer = 0; outer < set.n_trials(); ++outer) {
    std::vector<Index> outer_train;
    for (Index k = 0; k < set.n_trials(); ++k) {
      if (k != outer) outer_train.push_back(k);
    }
    FoldTrace fold;
    fold.test_trial = outer;
    std::vector<int> current = base;
    std::vector<int> remaining(candidates.begin(), candidates.end());
    std::sort(remaining.begin(), remaining.end());

    auto record_outer = [&] {
      const auto [ok, n] = detail::outer_score(set, outer_train, outer, detail::channels_of(set, catalog, current),
                                               cfg.test_window_s);
      fold.test_correct.push_back(ok);
      fold.test_decisions.push_back(n);
    };
    record_outer();

    while (!remaining.empty()) {
      double best = -1.0;
      size_t best_at = 0;
      for (size_t ci = 0; ci < remaining.size(); ++ci) {
        std::vector<int> trial_set = current;
        trial_set.push_back(remaining[ci]);
        const auto chans = detail::channels_of(set, catalog, trial_set);
        double score = 0.0;
        for (Index val : outer_train) {
          std::vector<Index> inner_train;
          for (Index k : outer_train) {
            if (k != val) inner_train.push_back(k);
          }
          if (observer) observer(outer, inner_train, val);
          const auto [ok, n] = detail::outer_score(set, inner_train, val, chans, cfg.validation_window_s);
          score += n == 0 ? 0.0 : static_cast<double>(ok) / static_cast<double>(n);
        }
        score /= static_cast<double>(outer_train.size());
        if (score > best) {  // remaining is id-sorted: strict > keeps the lowest id on ties
          best = score;
          best_at = ci;
        }
      }
      current.push_back(remaining[best_at]);
      fold.selected.push_back(remaining[best_at]);
      fold.validation_score.push_back(best);
      remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best_at));
      record_outer();
    }
    trace.folds.push_back(std::move(fold));
  }
  return trace;
}

/// Random-order control: per outer fold and repetition, a uniformly random
/// permutation of the candidates is added one node at a time and scored like
/// the greedy outer loop. Returns accuracy per added-node count (decisions
/// pooled over folds), averaged over repetitions.
inline std::vector<double> random_select_baseline(const DecodingSet& set, const std::vector<Node>& catalog,
                                                  const std::vector<int>& base, const std::vector<int>& candidates,
                                                  int n_reps, std::uint64_t seed, const NodeSelConfig& cfg = {}) {
  if (n_reps < 1) throw ConfigError("random baseline: need at least one repetition");
  std::vector<double> mean(candidates.size() + 1, 0.0);
  std::mt19937_64 rng(seed);
  for (int r = 0; r < n_reps; ++r) {
    std::vector<Index> ok(candidates.size() + 1, 0), n(candidates.size() + 1, 0);
    for (Index outer = 0; outer < set.n_trials(); ++outer) {
      std::vector<Index> outer_train;
      for (Index k = 0; k < set.n_trials(); ++k) {
        if (k != outer) outer_train.push_back(k);
      }
      std::vector<int> order(candidates.begin(), candidates.end());
      // Fisher-Yates driven by raw engine output (portable across standard libraries).
      for (size_t i = order.size(); i > 1; --i) {
        const auto j = static_cast<size_t>(rng() % i);
        std::swap(order[i - 1], order[j]);
      }
      std::vector<int> current = base;
      for (size_t k = 0; k <= order.size(); ++k) {
        if (k > 0) current.push_back(order[k - 1]);
        const auto [c, m] = detail::outer_score(set, outer_train, outer, detail::channels_of(set, catalog, current),
                                                cfg.test_window_s);
        ok[k] += c;
        n[k] += m;
      }
    }
    for (size_t k = 0; k < mean.size(); ++k) {
      mean[k] += (n[k] == 0 ? 0.0 : static_cast<double>(ok[k]) / static_cast<double>(n[k])) / n_reps;
    }
  }
  return mean;
}

/// Raw weight of the k-th selected node (1-based).
inline double selection_weight(size_t k, double half_life_nodes = 2.0) {
  return std::exp2(-static_cast<double>(k - 1) / half_life_nodes);
}

/// Per trace: weights by selection order, scaled to sum to 100; then the mean
/// over traces (a node absent from a trace contributes 0 there). Empty
/// traces are skipped and reported through `skipped`.
inline std::map<int, double> importance_weights(const std::vector<std::vector<int>>& traces,
                                                double half_life_nodes = 2.0, Index* skipped = nullptr) {
  std::map<int, double> total;
  Index used = 0, empty = 0;
  for (const auto& t : traces) {
    if (t.empty()) {
      ++empty;
      continue;
    }
    double sum = 0.0;
    for (size_t k = 1; k <= t.size(); ++k) sum += selection_weight(k, half_life_nodes);
    for (size_t k = 1; k <= t.size(); ++k) total[t[k - 1]] += 100.0 * selection_weight(k, half_life_nodes) / sum;
    ++used;
  }
  if (skipped) *skipped = empty;
  if (used == 0) return {};
  for (auto& [id, w] : total) w /= static_cast<double>(used);
  return total;
}

inline std::vector<std::vector<int>> selection_orders(const SelectionTrace& trace) {
  std::vector<std::vector<int>> out;
  for (const auto& f : trace.folds) out.push_back(f.selected);
  return out;
}

}  // namespace aad
