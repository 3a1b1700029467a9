#pragma once

// Experiment orchestration: key-value configs, config hashing, data
// sourcing (canonical dataset or synthetic spec), the per-command runners,
// and deterministic CSV / JSON manifest output.

#include "aad/corpus.hpp"
#include "aad/decoder.hpp"
#include "aad/dsp.hpp"
#include "aad/error.hpp"
#include "aad/evalkit.hpp"
#include "aad/nodesel.hpp"
#include "aad/preprocess.hpp"

#include "json.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace aad {

// ---------------------------------------------------------------------------
// Text helpers

inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

/// Fixed-format number for CSV output.
inline std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// Shortest round-trip form, used in canonical config text.
inline std::string fmt_exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using KeyValues = std::map<std::string, std::string>;

/// `key = value` per line; `#` starts a comment; blank lines ignored.
inline KeyValues parse_key_values(const std::string& text, const std::string& where = "config") {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ":" + std::to_string(n) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ":" + std::to_string(n) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_key_values(ss.str(), path.string());
}

namespace detail {

inline double to_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config '" + key + "': '" + v + "' is not a number");
  }
}

inline long long to_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const long long d = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config '" + key + "': '" + v + "' is not an integer");
  }
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const auto d = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config '" + key + "': '" + v + "' is not a non-negative integer");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config '" + key + "': '" + v + "' is not a boolean");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Experiment config

enum class CvMode { loto, lopo };

/// One decoding input: a single setup, or several combined by early
/// integration.
using SetupGroup = std::vector<Setup>;

inline std::string group_name(const SetupGroup& g) {
  std::string s;
  for (size_t i = 0; i < g.size(); ++i) s += (i ? "+" : "") + to_string(g[i]);
  return s;
}

inline SetupGroup parse_group(const std::string& s) {
  SetupGroup g;
  for (const auto& part : split(s, '+')) {
    const Setup x = setup_from_string(part);
    if (std::find(g.begin(), g.end(), x) != g.end()) throw ConfigError("setup '" + part + "' repeated in '" + s + "'");
    g.push_back(x);
  }
  if (g.empty()) throw ConfigError("empty setup group");
  return g;
}

struct ExperimentConfig {
  std::string dataset;
  std::string synthetic;
  std::vector<SetupGroup> setups{{Setup::scalp}, {Setup::around_ear}, {Setup::in_ear}};
  PipelineConfig pipeline;
  bool reference_explicit{false};
  CvMode cv{CvMode::loto};
  std::vector<double> windows{default_windows()};
  double correlation_window_s{60.0};
  std::optional<std::uint64_t> seed;
  std::vector<std::string> participants;  // empty: all
  std::string out{"out"};

  // reference-sweep
  Setup sweep_setup{Setup::in_ear};
  double sweep_window_s{60.0};

  // node-select
  std::string base{"in_ear"};
  std::vector<std::string> candidates;  // node names; empty: every non-base node
  int n_reps{100};
  NodeSelConfig nodesel;

  // stats
  std::string input;
  double stats_window_s{60.0};
  double alpha{0.05};

  static const std::vector<std::string>& keys() {
    static const std::vector<std::string> k{
        "dataset", "synthetic", "setups", "reference", "reference.scalp", "reference.around_ear",
        "reference.in_ear", "eog_regression", "bad_channels", "asr", "window_rejection", "artifact_removal",
        "rejection_k", "band_low_hz", "band_high_hz", "filter_order", "cv", "windows", "correlation_window_s",
        "seed", "participants", "out", "sweep_setup", "sweep_window_s", "base", "candidates", "n_reps",
        "half_life_nodes", "validation_window_s", "test_window_s", "input", "stats_window_s", "alpha"};
    return k;
  }

  void apply(const std::string& key, const std::string& v) {
    using namespace detail;
    if (key == "dataset") {
      dataset = v;
    } else if (key == "synthetic") {
      synthetic = v;
    } else if (key == "setups") {
      setups.clear();
      for (const auto& s : split(v, ',')) setups.push_back(parse_group(s));
      if (setups.empty()) throw ConfigError("config 'setups' is empty");
    } else if (key == "reference") {
      const auto r = ReferenceScheme::parse(v);
      for (auto& [s, ref] : pipeline.reference) ref = r;
      reference_explicit = true;
    } else if (key.rfind("reference.", 0) == 0) {
      pipeline.reference[setup_from_string(key.substr(10))] = ReferenceScheme::parse(v);
      reference_explicit = true;
    } else if (key == "eog_regression") {
      pipeline.eog_regression = to_bool(key, v);
    } else if (key == "bad_channels") {
      pipeline.bad_channels = to_bool(key, v);
    } else if (key == "asr") {
      pipeline.asr = to_bool(key, v);
    } else if (key == "window_rejection") {
      pipeline.window_rejection = to_bool(key, v);
    } else if (key == "artifact_removal") {
      const bool on = to_bool(key, v);
      pipeline.eog_regression = pipeline.bad_channels = pipeline.asr = pipeline.window_rejection = on;
    } else if (key == "rejection_k") {
      pipeline.rejection_k = to_double(key, v);
    } else if (key == "band_low_hz") {
      pipeline.bandpass.low_hz = to_double(key, v);
    } else if (key == "band_high_hz") {
      pipeline.bandpass.high_hz = to_double(key, v);
    } else if (key == "filter_order") {
      pipeline.bandpass.order = static_cast<int>(to_int(key, v));
    } else if (key == "cv") {
      if (v == "loto") {
        cv = CvMode::loto;
      } else if (v == "lopo") {
        cv = CvMode::lopo;
      } else {
        throw ConfigError("config 'cv': expected loto or lopo, got '" + v + "'");
      }
    } else if (key == "windows") {
      windows.clear();
      for (const auto& w : split(v, ',')) windows.push_back(to_double(key, w));
    } else if (key == "correlation_window_s") {
      correlation_window_s = to_double(key, v);
    } else if (key == "seed") {
      seed = to_u64(key, v);
    } else if (key == "participants") {
      participants.clear();
      for (const auto& p : split(v, ',')) {
        if (!p.empty()) participants.push_back(p);
      }
    } else if (key == "out") {
      out = v;
    } else if (key == "sweep_setup") {
      sweep_setup = setup_from_string(v);
    } else if (key == "sweep_window_s") {
      sweep_window_s = to_double(key, v);
    } else if (key == "base") {
      base = v;
    } else if (key == "candidates") {
      candidates.clear();
      for (const auto& c : split(v, ',')) {
        if (!c.empty()) candidates.push_back(c);
      }
    } else if (key == "n_reps") {
      n_reps = static_cast<int>(to_int(key, v));
    } else if (key == "half_life_nodes") {
      nodesel.half_life_nodes = to_double(key, v);
    } else if (key == "validation_window_s") {
      nodesel.validation_window_s = to_double(key, v);
    } else if (key == "test_window_s") {
      nodesel.test_window_s = to_double(key, v);
    } else if (key == "input") {
      input = v;
    } else if (key == "stats_window_s") {
      stats_window_s = to_double(key, v);
    } else if (key == "alpha") {
      alpha = to_double(key, v);
    } else {
      std::string valid;
      for (const auto& k : keys()) valid += " " + k;
      throw ConfigError("unknown config key '" + key + "' (valid:" + valid + ")");
    }
  }

  static ExperimentConfig from(const KeyValues& kv) {
    ExperimentConfig c;
    // Global reference before per-setup overrides.
    if (auto it = kv.find("reference"); it != kv.end()) c.apply(it->first, it->second);
    for (const auto& [k, v] : kv) {
      if (k != "reference") c.apply(k, v);
    }
    return c;
  }

  /// Canonical text of every setting that can influence results (the output
  /// directory is excluded).
  std::string canonical(const std::string& command) const {
    std::ostringstream s;
    s << "command=" << command << "\n";
    s << "dataset=" << dataset << "\nsynthetic=" << synthetic << "\n";
    s << "setups=";
    for (size_t i = 0; i < setups.size(); ++i) s << (i ? "," : "") << group_name(setups[i]);
    s << "\n";
    for (const auto& [setup, ref] : pipeline.reference) s << "reference." << to_string(setup) << "=" << ref.name() << "\n";
    s << "eog_regression=" << pipeline.eog_regression << "\nbad_channels=" << pipeline.bad_channels
      << "\nasr=" << pipeline.asr << "\nwindow_rejection=" << pipeline.window_rejection
      << "\nrejection_k=" << fmt_exact(pipeline.rejection_k) << "\nband_low_hz=" << fmt_exact(pipeline.bandpass.low_hz)
      << "\nband_high_hz=" << fmt_exact(pipeline.bandpass.high_hz) << "\nfilter_order=" << pipeline.bandpass.order
      << "\ncv=" << (cv == CvMode::loto ? "loto" : "lopo") << "\nwindows=";
    for (size_t i = 0; i < windows.size(); ++i) s << (i ? "," : "") << fmt_exact(windows[i]);
    s << "\ncorrelation_window_s=" << fmt_exact(correlation_window_s) << "\nseed=" << root_seed() << "\nparticipants=";
    for (size_t i = 0; i < participants.size(); ++i) s << (i ? "," : "") << participants[i];
    s << "\n";
    if (command == "reference-sweep") {
      s << "sweep_setup=" << to_string(sweep_setup) << "\nsweep_window_s=" << fmt_exact(sweep_window_s) << "\n";
    }
    if (command == "node-select") {
      s << "base=" << base << "\ncandidates=";
      for (size_t i = 0; i < candidates.size(); ++i) s << (i ? "," : "") << candidates[i];
      s << "\nn_reps=" << n_reps << "\nhalf_life_nodes=" << fmt_exact(nodesel.half_life_nodes)
        << "\nvalidation_window_s=" << fmt_exact(nodesel.validation_window_s)
        << "\ntest_window_s=" << fmt_exact(nodesel.test_window_s) << "\n";
    }
    if (command == "stats") {
      s << "input=" << input << "\nstats_window_s=" << fmt_exact(stats_window_s) << "\nalpha=" << fmt_exact(alpha)
        << "\n";
    }
    return s.str();
  }

  std::uint64_t root_seed() const { return seed.value_or(1); }

  /// Checks that need no data.
  void validate_static() const {
    if (dataset.empty() == synthetic.empty()) throw ConfigError("exactly one of 'dataset' or 'synthetic' must be set");
    if (windows.empty()) throw ConfigError("'windows' is empty");
    for (double w : windows) {
      if (!(w > 0.0)) throw ConfigError("window lengths must be positive");
    }
    for (size_t i = 1; i < windows.size(); ++i) {
      if (!(windows[i] > windows[i - 1])) throw ConfigError("'windows' must be strictly increasing");
    }
    for (const auto& [setup, ref] : pipeline.reference) {
      if (setup == Setup::scalp && (ref.kind == ReferenceScheme::Kind::same_ear_average ||
                                    ref.kind == ReferenceScheme::Kind::other_ear_average)) {
        throw ConfigError("reference '" + ref.name() + "' is only valid for ear setups, not scalp");
      }
    }
    for (const auto& g : setups) {
      if (g.size() < 2 || !reference_explicit) continue;
      for (Setup s : g) {
        if (pipeline.reference.at(s).kind != ReferenceScheme::Kind::shared_fp1) {
          throw ConfigError("combined setup '" + group_name(g) + "' is always referenced to the shared Fp1; reference '" +
                            pipeline.reference.at(s).name() + "' conflicts");
        }
      }
    }
    dsp::validate(pipeline.bandpass, 2.0 * pipeline.bandpass.high_hz + 1.0);
    if (n_reps < 1) throw ConfigError("'n_reps' must be >= 1");
    if (!(nodesel.half_life_nodes > 0.0)) throw ConfigError("'half_life_nodes' must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("'alpha' must be in (0, 1)");
  }

  /// Checks against the montage.
  void validate_montage(const Montage& m) const {
    for (const auto& [setup, ref] : pipeline.reference) {
      if (ref.kind == ReferenceScheme::Kind::single_electrode && !m.find(ref.electrode)) {
        throw ConfigError("reference electrode '" + ref.electrode + "' not in montage (valid: " +
                          [&] {
                            std::string l;
                            for (const auto& x : m.labels()) l += (l.empty() ? "" : " ") + x;
                            return l;
                          }() +
                          ")");
      }
    }
    for (const auto& g : setups) {
      for (Setup s : g) {
        bool any = false;
        for (const auto& c : m.channels) any = any || belongs_to(s, c.tag);
        if (!any) throw ConfigError("montage has no channels for setup '" + to_string(s) + "'");
      }
    }
  }

  PipelineConfig pipeline_for(const SetupGroup& g) const {
    PipelineConfig p = pipeline;
    if (g.size() > 1) {
      for (Setup s : g) p.reference[s] = ReferenceScheme::fp1();
    }
    return p;
  }
};

// ---------------------------------------------------------------------------
// Data sources

struct DataSource {
  Montage montage;
  std::string version;
  std::optional<SynthDatasetSpec> synth;
  std::filesystem::path root;
  std::vector<std::string> ids;

  /// Opens the metadata only; recordings are produced by `recording`.
  static DataSource open(const ExperimentConfig& cfg) {
    DataSource d;
    if (!cfg.synthetic.empty()) {
      const auto j = io::read_json(cfg.synthetic, "synthetic spec");
      auto spec = synth_spec_from_json(j);
      if (cfg.seed) spec.seed = *cfg.seed;
      d.montage = spec.montage;
      d.version = "synthetic-" + hex64(fnv1a64(j.dump() + "|seed=" + std::to_string(spec.seed)));
      for (int p = 0; p < spec.participants; ++p) d.ids.push_back(participant_dir_name(p + 1));
      d.synth = std::move(spec);
    } else {
      d.root = cfg.dataset;
      d.montage = load_montage(d.root);
      d.version = dataset_version(d.root);
      d.ids = list_participants(d.root);
    }
    if (!cfg.participants.empty()) {
      for (const auto& p : cfg.participants) {
        if (std::find(d.ids.begin(), d.ids.end(), p) == d.ids.end()) throw ConfigError("participant '" + p + "' not in data");
      }
      d.ids = cfg.participants;
    }
    if (d.ids.empty()) throw DataError("no participants in data source");
    return d;
  }

  Recording recording(const std::string& id) const {
    if (synth) return make_synthetic_recording(*synth, std::stoi(id.substr(1)) - 1);
    return load_recording(root, id, montage);
  }
};

namespace detail {

template <typename F>
auto with_context(const std::string& where, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(where + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(where + ": " + e.what());
  }
}

}  // namespace detail

/// Preprocesses every trial for a setup group. Each setup is cleaned on its
/// own and the results concatenated.
inline std::vector<PreprocessedTrial> preprocess_group(const Recording& rec, const SetupGroup& g,
                                                        const PipelineConfig& pcfg) {
  std::vector<PreprocessedTrial> out;
  for (size_t k = 0; k < rec.trials.size(); ++k) {
    out.push_back(detail::with_context(rec.participant_id + " trial " + std::to_string(k + 1), [&] {
      std::vector<PreprocessedTrial> parts;
      for (Setup s : g) parts.push_back(preprocess_trial(rec.trials[k], rec.montage, s, pcfg));
      return combine(parts);
    }));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& config_hash, const std::string& header)
      : path_(path), f_(path, std::ios::binary) {
    if (!f_) throw DataError("cannot write '" + path.string() + "'");
    f_ << "# config_hash=" << config_hash << "\n" << header << "\n";
  }
  void row(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) f_ << (i ? "," : "") << cells[i];
    f_ << "\n";
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream f_;
};

struct RunContext {
  std::string command;
  ExperimentConfig cfg;
  std::string config_hash;
  std::filesystem::path out;
  std::vector<std::string> files;
  std::vector<std::string> warnings;

  RunContext(std::string cmd, ExperimentConfig c) : command(std::move(cmd)), cfg(std::move(c)) {
    config_hash = hex64(fnv1a64(cfg.canonical(command)));
    out = cfg.out;
    std::filesystem::create_directories(out);
  }

  CsvWriter csv(const std::string& name, const std::string& header) {
    files.push_back(name);
    return CsvWriter(out / name, config_hash, header);
  }

  void manifest(const std::string& dataset_version) const {
    nlohmann::json j;
    j["command"] = command;
    j["config_hash"] = config_hash;
    j["seed"] = cfg.root_seed();
    j["dataset_version"] = dataset_version;
    j["config"] = cfg.canonical(command);
    j["outputs"] = files;
    j["warnings"] = warnings;
    io::write_json(out / "manifest.json", j);
  }
};

// ---------------------------------------------------------------------------
// Commands

/// Accuracy curves and 60 s correlation samples per setup group.
inline void run_decoding(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  cfg.validate_static();
  const DataSource src = DataSource::open(cfg);
  cfg.validate_montage(src.montage);
  if (cfg.cv == CvMode::lopo && src.ids.size() < 2) throw ConfigError("lopo needs at least 2 participants");

  const CvConfig cv{cfg.windows, LagGrid{}, cfg.correlation_window_s};
  auto acc = ctx.csv("accuracy.csv", "participant,setup,reference,cv,window_s,n_decisions,n_correct,accuracy,threshold");
  auto cor = ctx.csv("correlations.csv", "participant,setup,window_index,corr_attended,corr_unattended");

  for (const auto& g : cfg.setups) {
    const PipelineConfig pcfg = cfg.pipeline_for(g);
    std::string ref;
    for (Setup s : g) ref += (ref.empty() ? "" : "+") + pcfg.reference.at(s).name();
    std::vector<ParticipantTrials> parts;
    for (const auto& id : src.ids) {
      const Recording rec = src.recording(id);
      parts.push_back({id, preprocess_group(rec, g, pcfg)});
      for (const auto& t : parts.back().trials) {
        for (const auto& w : t.report.warnings) ctx.warnings.push_back(id + " " + group_name(g) + ": " + w);
      }
    }
    std::vector<CvResult> results;
    if (cfg.cv == CvMode::loto) {
      for (const auto& p : parts) results.push_back(loto_cv(p.trials, cv, p.participant_id));
    } else {
      results = lopo_cv(parts, cv);
    }
    AccuracyCurve pooled("pooled", cfg.windows);
    for (const auto& r : results) {
      for (size_t w = 0; w < cfg.windows.size(); ++w) {
        const Index n = r.curve.n_decisions[w];
        acc.row({r.curve.participant, group_name(g), ref, cfg.cv == CvMode::loto ? "loto" : "lopo",
                 fmt_exact(cfg.windows[w]), std::to_string(n), std::to_string(r.curve.n_correct[w]),
                 fmt(r.curve.accuracy(w)), n > 0 ? fmt(binomial_threshold(n, cfg.alpha)) : "nan"});
        pooled.n_decisions[w] += n;
        pooled.n_correct[w] += r.curve.n_correct[w];
      }
      for (size_t i = 0; i < r.correlations.size(); ++i) {
        cor.row({r.curve.participant, group_name(g), std::to_string(i), fmt(r.correlations[i].corr_attended, 9),
                 fmt(r.correlations[i].corr_unattended, 9)});
      }
    }
    if (results.size() > 1) {
      for (size_t w = 0; w < cfg.windows.size(); ++w) {
        const Index n = pooled.n_decisions[w];
        acc.row({"pooled", group_name(g), ref, cfg.cv == CvMode::loto ? "loto" : "lopo", fmt_exact(cfg.windows[w]),
                 std::to_string(n), std::to_string(pooled.n_correct[w]), fmt(pooled.accuracy(w)),
                 n > 0 ? fmt(binomial_threshold(n, cfg.alpha)) : "nan"});
      }
    }
  }
  ctx.manifest(src.version);
}

/// LOTO accuracy of one setup referenced to each scalp electrode in turn.
inline void run_reference_sweep(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  cfg.validate_static();
  const DataSource src = DataSource::open(cfg);
  cfg.validate_montage(src.montage);
  const CvConfig cv{{cfg.sweep_window_s}, LagGrid{}, cfg.sweep_window_s};
  std::vector<std::string> electrodes;
  for (const auto& c : src.montage.channels) {
    if (c.tag == SetupTag::scalp) electrodes.push_back(c.label);
  }
  if (electrodes.empty()) throw ConfigError("montage has no scalp electrodes to sweep");

  auto rows = ctx.csv("reference_sweep.csv", "participant,setup,reference_electrode,window_s,n_decisions,n_correct,accuracy");
  std::vector<Recording> recs;
  for (const auto& id : src.ids) recs.push_back(src.recording(id));
  std::vector<std::pair<std::string, double>> heat;
  for (const auto& e : electrodes) {
    PipelineConfig pcfg = cfg.pipeline;
    pcfg.reference[cfg.sweep_setup] = ReferenceScheme::electrode_ref(e);
    double sum = 0.0;
    for (const auto& rec : recs) {
      const auto trials = preprocess_group(rec, {cfg.sweep_setup}, pcfg);
      const auto r = loto_cv(trials, cv, rec.participant_id);
      rows.row({rec.participant_id, to_string(cfg.sweep_setup), e, fmt_exact(cfg.sweep_window_s),
                std::to_string(r.curve.n_decisions[0]), std::to_string(r.curve.n_correct[0]), fmt(r.curve.accuracy(0))});
      sum += r.curve.accuracy(0);
    }
    heat.emplace_back(e, sum / static_cast<double>(recs.size()));
  }
  auto hm = ctx.csv("reference_heatmap.csv", "electrode,mean_accuracy");
  for (const auto& [e, a] : heat) hm.row({e, fmt(a)});
  ctx.manifest(src.version);
}

/// Greedy node selection and the random-order baseline, per participant.
inline void run_node_select(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  cfg.validate_static();
  const DataSource src = DataSource::open(cfg);
  cfg.validate_montage(src.montage);

  PipelineConfig pcfg = cfg.pipeline;
  SetupGroup all;
  for (Setup s : {Setup::scalp, Setup::around_ear, Setup::in_ear}) {
    bool any = false;
    for (const auto& c : src.montage.channels) any = any || belongs_to(s, c.tag);
    if (any) {
      all.push_back(s);
      pcfg.reference[s] = ReferenceScheme::fp1();
    }
  }
  std::vector<Channel> avail;
  for (const auto& c : src.montage.channels) {
    for (Setup s : all) {
      if (belongs_to(s, c.tag)) avail.push_back(c);
    }
  }
  const auto catalog = build_node_catalog(avail);
  const int base_id = node_by_name(catalog, cfg.base).id;
  std::vector<int> cand;
  if (cfg.candidates.empty()) {
    for (const auto& n : catalog) {
      if (n.id != base_id) cand.push_back(n.id);
    }
  } else {
    for (const auto& c : cfg.candidates) {
      const int id = node_by_name(catalog, c).id;
      if (id == base_id) throw ConfigError("candidate '" + c + "' is the base node");
      cand.push_back(id);
    }
  }

  auto tr = ctx.csv("selection_traces.csv", "participant,fold,step,node_id,node,validation_accuracy");
  auto ac = ctx.csv("selection_accuracy.csv", "participant,n_added,greedy_accuracy,random_accuracy");
  std::vector<std::vector<int>> orders;
  std::vector<std::vector<double>> greedy_acc, random_acc;
  for (size_t p = 0; p < src.ids.size(); ++p) {
    const auto& id = src.ids[p];
    const Recording rec = src.recording(id);
    const DecodingSet set(preprocess_group(rec, all, pcfg));
    const auto trace = greedy_select(set, catalog, {base_id}, cand, cfg.nodesel);
    const auto base_rand = random_select_baseline(set, catalog, {base_id}, cand, cfg.n_reps,
                                                  mix_seed(cfg.root_seed(), 7000 + p), cfg.nodesel);
    for (const auto& f : trace.folds) {
      for (size_t s = 0; s < f.selected.size(); ++s) {
        const auto& node = catalog[static_cast<size_t>(f.selected[s])];
        tr.row({id, std::to_string(f.test_trial + 1), std::to_string(s + 1), std::to_string(node.id), node.name,
                fmt(f.validation_score[s])});
      }
      orders.push_back(f.selected);
    }
    const auto g = trace.accuracy_per_count();
    for (size_t k = 0; k < g.size(); ++k) ac.row({id, std::to_string(k), fmt(g[k]), fmt(base_rand[k])});
    greedy_acc.push_back(g);
    random_acc.push_back(base_rand);
  }
  if (src.ids.size() > 1) {
    for (size_t k = 0; k < greedy_acc.front().size(); ++k) {
      std::vector<double> gv, rv;
      for (size_t p = 0; p < greedy_acc.size(); ++p) {
        gv.push_back(greedy_acc[p][k]);
        rv.push_back(random_acc[p][k]);
      }
      ac.row({"median", std::to_string(k), fmt(median(gv)), fmt(median(rv))});
    }
  }
  Index skipped = 0;
  const auto weights = importance_weights(orders, cfg.nodesel.half_life_nodes, &skipped);
  if (skipped > 0) ctx.warnings.push_back(std::to_string(skipped) + " empty selection trace(s) skipped");
  auto wt = ctx.csv("importance_weights.csv", "node_id,node,weight");
  for (const auto& n : catalog) {
    if (n.id == base_id) continue;
    const auto it = weights.find(n.id);
    wt.row({std::to_string(n.id), n.name, fmt(it == weights.end() ? 0.0 : it->second)});
  }
  ctx.manifest(src.version);
}

/// Cleaning report per participant, trial and setup.
inline void run_preprocess_report(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  cfg.validate_static();
  const DataSource src = DataSource::open(cfg);
  cfg.validate_montage(src.montage);
  auto rep = ctx.csv("cleaning_report.csv",
                     "participant,trial,setup,n_channels,n_samples,removed_channels,mean_rejected_fraction,stages");
  for (const auto& id : src.ids) {
    const Recording rec = src.recording(id);
    for (const auto& g : cfg.setups) {
      const auto trials = preprocess_group(rec, g, cfg.pipeline_for(g));
      for (size_t k = 0; k < trials.size(); ++k) {
        const auto& r = trials[k].report;
        std::string removed, stages;
        for (const auto& c : r.removed_channels) removed += (removed.empty() ? "" : ";") + c;
        for (const auto& s : r.stages_applied) stages += (stages.empty() ? "" : ";") + s;
        double frac = 0.0;
        for (double f : r.rejected_sample_fraction) frac += f;
        if (!r.rejected_sample_fraction.empty()) frac /= static_cast<double>(r.rejected_sample_fraction.size());
        rep.row({id, std::to_string(k + 1), group_name(g), std::to_string(trials[k].eeg.cols()),
                 std::to_string(trials[k].eeg.rows()), removed, fmt(frac), stages});
        for (const auto& w : r.warnings) ctx.warnings.push_back(id + " trial " + std::to_string(k + 1) + ": " + w);
      }
    }
  }
  ctx.manifest(src.version);
}

// ---------------------------------------------------------------------------
// stats

struct CsvTable {
  std::string config_hash;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  Index column(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<Index>(i);
    }
    throw DataError("CSV has no column '" + name + "'");
  }
};

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open '" + path.string() + "'");
  CsvTable t;
  std::string line;
  while (std::getline(f, line)) {
    if (line.rfind("# config_hash=", 0) == 0) {
      t.config_hash = line.substr(14);
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    if (t.header.empty()) {
      t.header = split(line, ',');
    } else {
      t.rows.push_back(split(line, ','));
      if (t.rows.back().size() != t.header.size()) throw DataError(path.string() + ": ragged row");
    }
  }
  if (t.header.empty()) throw DataError(path.string() + ": empty CSV");
  return t;
}

/// Per-participant binomial significance and paired Wilcoxon tests between
/// setups (over participants) with BH correction, read from an accuracy CSV.
inline void run_stats(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  if (cfg.input.empty()) throw ConfigError("stats: 'input' (accuracy CSV) is required");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ConfigError("'alpha' must be in (0, 1)");
  const CsvTable t = read_csv(cfg.input);
  const Index ip = t.column("participant"), is = t.column("setup"), iw = t.column("window_s"),
              in = t.column("n_decisions"), ic = t.column("n_correct");

  std::vector<std::string> setups;
  std::map<std::string, std::map<std::string, std::pair<Index, Index>>> by_setup;  // setup -> participant -> (n, ok)
  for (const auto& r : t.rows) {
    if (detail::to_double("window_s", r[static_cast<size_t>(iw)]) != cfg.stats_window_s) continue;
    const auto& s = r[static_cast<size_t>(is)];
    if (std::find(setups.begin(), setups.end(), s) == setups.end()) setups.push_back(s);
    by_setup[s][r[static_cast<size_t>(ip)]] = {detail::to_int("n_decisions", r[static_cast<size_t>(in)]),
                                               detail::to_int("n_correct", r[static_cast<size_t>(ic)])};
  }
  if (setups.empty()) throw DataError("stats: no rows at window " + fmt_exact(cfg.stats_window_s) + " s");

  auto sig = ctx.csv("significance.csv", "setup,participant,n_decisions,accuracy,threshold,significant");
  for (const auto& s : setups) {
    for (const auto& [p, nk] : by_setup[s]) {
      const auto [n, ok] = nk;
      const double a = n == 0 ? 0.0 : static_cast<double>(ok) / static_cast<double>(n);
      const double thr = n == 0 ? 1.0 : binomial_threshold(n, cfg.alpha);
      sig.row({s, p, std::to_string(n), fmt(a), fmt(thr), n > 0 && a >= thr ? "1" : "0"});
    }
  }

  struct Pair {
    std::string a, b;
    WilcoxonResult w;
    Index n{0};
  };
  std::vector<Pair> pairs;
  for (size_t i = 0; i < setups.size(); ++i) {
    for (size_t j = i + 1; j < setups.size(); ++j) {
      std::vector<double> x, y;
      for (const auto& [p, nk] : by_setup[setups[i]]) {
        if (p == "pooled") continue;
        const auto it = by_setup[setups[j]].find(p);
        if (it == by_setup[setups[j]].end()) continue;
        x.push_back(static_cast<double>(nk.second) / std::max<double>(1.0, static_cast<double>(nk.first)));
        y.push_back(static_cast<double>(it->second.second) / std::max<double>(1.0, static_cast<double>(it->second.first)));
      }
      if (x.empty()) continue;
      pairs.push_back({setups[i], setups[j], wilcoxon_signed_rank(x, y), static_cast<Index>(x.size())});
    }
  }
  std::vector<double> ps;
  for (const auto& p : pairs) ps.push_back(p.w.p_value);
  const auto flags = benjamini_hochberg(ps, cfg.alpha);
  auto pw = ctx.csv("pairwise.csv", "setup_a,setup_b,n_participants,n_used,w_plus,p_value,exact,bh_significant");
  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    pw.row({p.a, p.b, std::to_string(p.n), std::to_string(p.w.n_used), fmt(p.w.w_plus, 1), fmt(p.w.p_value, 8),
            p.w.exact ? "1" : "0", flags[i] ? "1" : "0"});
    if (p.w.all_zero) ctx.warnings.push_back(p.a + " vs " + p.b + ": all differences zero");
  }
  ctx.manifest("input:" + t.config_hash);
}

// ---------------------------------------------------------------------------
// synth / ingest

inline void run_synth(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  if (cfg.synthetic.empty()) throw ConfigError("synth: 'synthetic' spec is required");
  const DataSource src = DataSource::open(cfg);
  std::vector<Recording> recs;
  for (const auto& id : src.ids) recs.push_back(src.recording(id));
  write_dataset(ctx.out, recs, src.version);
  ctx.files.push_back("montage.json");
  for (const auto& id : src.ids) ctx.files.push_back(id + "/");
  ctx.manifest(src.version);
}

/// Converts an intermediate export into the canonical layout. The export
/// directory holds `export.json`:
///   { "version": str, "montage": {channel_labels, setup_tags},
///     "participants": [ { "id": "P01", "trials": [ {
///         "eeg": file, "layout": "channel_major" | "sample_major",
///         "n_samples": int, "sample_rate_hz": num,
///         "attended_side": "left" | "right", "condition": "video" | "fixation",
///         either "envelope_attended"/"envelope_unattended" (f32 at 20 Hz)
///         or "audio_attended"/"audio_unattended" (f32) with "audio_rate_hz" } ] } ] }
/// All binary files are little-endian float32, paths relative to the export.
inline void run_ingest(RunContext& ctx, const std::filesystem::path& export_dir) {
  const auto j = io::read_json(export_dir / "export.json", "export");
  std::vector<Recording> recs;
  try {
    const Montage montage = montage_from_json(j.at("montage"), "export montage");
    montage.validate();
    for (const auto& pj : j.at("participants")) {
      Recording rec;
      rec.participant_id = pj.at("id").get<std::string>();
      rec.montage = montage;
      int k = 0;
      for (const auto& tj : pj.at("trials")) {
        ++k;
        const std::string where = rec.participant_id + " trial " + std::to_string(k);
        Trial t;
        const auto ns = tj.at("n_samples").get<Index>();
        const auto nc = montage.size();
        t.sample_rate_hz = tj.at("sample_rate_hz").get<double>();
        t.attended_side = side_from_string(tj.at("attended_side").get<std::string>());
        t.condition = condition_from_string(tj.at("condition").get<std::string>());
        const std::string layout = tj.value("layout", std::string("channel_major"));
        if (layout != "channel_major" && layout != "sample_major") throw ConfigError(where + ": unknown layout '" + layout + "'");
        const auto raw = io::read_f32(export_dir / tj.at("eeg").get<std::string>(),
                                      static_cast<size_t>(ns * nc), where + " eeg");
        t.eeg.resize(ns, nc);
        for (Index c = 0; c < nc; ++c) {
          for (Index s = 0; s < ns; ++s) {
            const size_t at = layout == "sample_major" ? static_cast<size_t>(s * nc + c) : static_cast<size_t>(c * ns + s);
            t.eeg(s, c) = raw[at];
          }
        }
        const Index n_env = ns / dsp::decimation_factor(t.sample_rate_hz, kEnvelopeRateHz);
        auto load_vec = [&](const std::string& key, size_t n) {
          const auto v = io::read_f32(export_dir / tj.at(key).get<std::string>(), n, where + " " + key);
          Eigen::VectorXd out(static_cast<Index>(v.size()));
          for (size_t i = 0; i < v.size(); ++i) out(static_cast<Index>(i)) = v[i];
          return out;
        };
        if (tj.contains("envelope_attended")) {
          t.attended_envelope = load_vec("envelope_attended", static_cast<size_t>(n_env));
          t.unattended_envelope = load_vec("envelope_unattended", static_cast<size_t>(n_env));
        } else {
          const double fa = tj.at("audio_rate_hz").get<double>();
          const auto na = static_cast<size_t>(std::llround(static_cast<double>(ns) / t.sample_rate_hz * fa));
          t.attended_envelope = dsp::gammatone_envelope(load_vec("audio_attended", na), fa);
          t.unattended_envelope = dsp::gammatone_envelope(load_vec("audio_unattended", na), fa);
          const Index n = std::min<Index>(n_env, t.attended_envelope.size());
          t.attended_envelope.conservativeResize(n);
          t.unattended_envelope.conservativeResize(n);
        }
        rec.trials.push_back(std::move(t));
      }
      if (!rec.trials.empty()) rec.sample_rate_hz = rec.trials.front().sample_rate_hz;
      validate_recording(rec);
      recs.push_back(std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("export.json: ") + e.what());
  }
  const std::string version = j.value("version", std::string("ingested"));
  write_dataset(ctx.out, recs, version);
  ctx.files.push_back("montage.json");
  for (const auto& r : recs) ctx.files.push_back(r.participant_id + "/");
  ctx.manifest(version);
}

}  // namespace aad
