#pragma once

// Data model, canonical on-disk dataset format and the synthetic
// forward-model generator.
//
// On-disk layout (root/):
//   montage.json                      channel labels + setup tags (+ version)
//   P01/trial1_eeg.f32                little-endian float32, channel-major
//   P01/trial1_env_att.f32            attended envelope at the envelope rate
//   P01/trial1_env_un.f32             unattended envelope
//   P01/trial1_meta.json              per-trial sidecar
//   ... trial2..trial6, P02 ...

#include "aad/dsp.hpp"
#include "aad/error.hpp"

#include <Eigen/Dense>

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace aad {

inline constexpr int kTrialsPerRecording = 6;
inline constexpr double kEnvelopeRateHz = 20.0;

enum class SetupTag { scalp, around_ear_left, around_ear_right, in_ear_left, in_ear_right, eog, shared_fp1 };
enum class Side { left, right };
enum class Condition { video, fixation };

inline std::string to_string(SetupTag t) {
  switch (t) {
    case SetupTag::scalp: return "scalp";
    case SetupTag::around_ear_left: return "around_ear_left";
    case SetupTag::around_ear_right: return "around_ear_right";
    case SetupTag::in_ear_left: return "in_ear_left";
    case SetupTag::in_ear_right: return "in_ear_right";
    case SetupTag::eog: return "eog";
    case SetupTag::shared_fp1: return "shared_fp1";
  }
  return "?";
}

inline SetupTag setup_tag_from_string(const std::string& s) {
  for (auto t : {SetupTag::scalp, SetupTag::around_ear_left, SetupTag::around_ear_right, SetupTag::in_ear_left,
                 SetupTag::in_ear_right, SetupTag::eog, SetupTag::shared_fp1}) {
    if (to_string(t) == s) return t;
  }
  throw DataError("unknown setup tag '" + s + "'");
}

inline std::string to_string(Side s) { return s == Side::left ? "left" : "right"; }
inline std::string to_string(Condition c) { return c == Condition::video ? "video" : "fixation"; }

inline Side side_from_string(const std::string& s) {
  if (s == "left") return Side::left;
  if (s == "right") return Side::right;
  throw DataError("attended_side must be 'left' or 'right', got '" + s + "'");
}

inline Condition condition_from_string(const std::string& s) {
  if (s == "video") return Condition::video;
  if (s == "fixation") return Condition::fixation;
  throw DataError("condition must be 'video' or 'fixation', got '" + s + "'");
}

/// Which amplifier a channel was recorded on. Channels of different systems
/// only share a reference through their respective Fp1 electrodes.
enum class RecordingSystem { scalp, ear };

inline RecordingSystem system_of(SetupTag t) {
  return (t == SetupTag::scalp || t == SetupTag::eog) ? RecordingSystem::scalp : RecordingSystem::ear;
}

inline bool is_left_ear(SetupTag t) { return t == SetupTag::around_ear_left || t == SetupTag::in_ear_left; }
inline bool is_right_ear(SetupTag t) { return t == SetupTag::around_ear_right || t == SetupTag::in_ear_right; }

struct Channel {
  std::string label;
  SetupTag tag{SetupTag::scalp};
  bool operator==(const Channel&) const = default;
};

struct Montage {
  std::vector<Channel> channels;

  Index size() const { return static_cast<Index>(channels.size()); }

  std::optional<Index> find(const std::string& label) const {
    for (size_t i = 0; i < channels.size(); ++i) {
      if (channels[i].label == label) return static_cast<Index>(i);
    }
    return std::nullopt;
  }

  Index index_of(const std::string& label) const {
    if (auto i = find(label)) return *i;
    std::string valid;
    for (const auto& c : channels) valid += (valid.empty() ? "" : ", ") + c.label;
    throw DataError("unknown channel label '" + label + "'; valid labels: " + valid);
  }

  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    for (const auto& c : channels) out.push_back(c.label);
    return out;
  }

  /// Label of the Fp1 electrode on the given system, if present.
  std::optional<Index> fp1_of(RecordingSystem sys) const {
    for (size_t i = 0; i < channels.size(); ++i) {
      const auto& c = channels[i];
      if (sys == RecordingSystem::ear && c.tag == SetupTag::shared_fp1) return static_cast<Index>(i);
      if (sys == RecordingSystem::scalp && c.tag == SetupTag::scalp && c.label == "Fp1") return static_cast<Index>(i);
    }
    return std::nullopt;
  }

  void validate() const {
    std::set<std::string> seen;
    for (const auto& c : channels) {
      if (c.label.empty()) throw DataError("montage: empty channel label");
      if (!seen.insert(c.label).second) throw DataError("montage: duplicate channel label '" + c.label + "'");
    }
  }

  bool operator==(const Montage&) const = default;
};

/// The recording layout used in the ear-EEG attention experiment: 29 scalp
/// electrodes (10-20) + 3 EOG on one amplifier; 19 around-ear (9 left, 10
/// right), 12 in-ear (6 per ear) and a shared Fp1 on the other.
inline Montage standard_montage() {
  Montage m;
  for (const char* l : {"Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "FC5", "FC1", "FC2", "FC6", "T7", "C3", "Cz", "C4",
                        "T8", "CP5", "CP1", "CP2", "CP6", "P7", "P3", "Pz", "P4", "P8", "PO3", "PO4", "O1", "O2"}) {
    m.channels.push_back({l, SetupTag::scalp});
  }
  for (const char* l : {"EOG1", "EOG2", "EOG3"}) m.channels.push_back({l, SetupTag::eog});
  for (int i = 1; i <= 9; ++i) m.channels.push_back({"L" + std::to_string(i), SetupTag::around_ear_left});
  for (int i = 1; i <= 10; ++i) m.channels.push_back({"R" + std::to_string(i), SetupTag::around_ear_right});
  for (const char* l : {"ELA", "ELB", "ELC", "ELT", "ELE", "ELI"}) m.channels.push_back({l, SetupTag::in_ear_left});
  for (const char* l : {"ERA", "ERB", "ERC", "ERT", "ERE", "ERI"}) m.channels.push_back({l, SetupTag::in_ear_right});
  m.channels.push_back({"Fp1e", SetupTag::shared_fp1});
  return m;
}

/// One 10-minute listening trial. EEG is stored at the raw rate, envelopes at
/// the envelope rate (20 Hz).
struct Trial {
  Eigen::MatrixXd eeg;  // time x channels
  Eigen::VectorXd attended_envelope;
  Eigen::VectorXd unattended_envelope;
  Side attended_side{Side::left};
  Condition condition{Condition::fixation};
  double sample_rate_hz{1000.0};
  double envelope_rate_hz{kEnvelopeRateHz};

  double duration_s() const { return static_cast<double>(eeg.rows()) / sample_rate_hz; }
};

struct Recording {
  std::string participant_id;
  Montage montage;
  std::vector<Trial> trials;
  double sample_rate_hz{1000.0};
};

/// Per-channel, per-sample validity. A column that is entirely false is a
/// removed channel.
struct SampleMask {
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> valid;

  static SampleMask all_valid(Index rows, Index cols) {
    return {Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(rows, cols, true)};
  }
  Index rows() const { return valid.rows(); }
  Index cols() const { return valid.cols(); }
  bool channel_removed(Index c) const { return !valid.col(c).any(); }
  Index valid_count() const { return valid.count(); }
};

inline void validate_recording(const Recording& rec) {
  rec.montage.validate();
  if (static_cast<int>(rec.trials.size()) != kTrialsPerRecording) {
    throw DataError("participant " + rec.participant_id + ": expected 6 trials, found " +
                    std::to_string(rec.trials.size()));
  }
  int left = 0, video = 0;
  for (size_t k = 0; k < rec.trials.size(); ++k) {
    const Trial& t = rec.trials[k];
    const std::string where = "participant " + rec.participant_id + " trial " + std::to_string(k + 1);
    if (t.eeg.cols() != rec.montage.size()) {
      throw DataError(where + ": EEG has " + std::to_string(t.eeg.cols()) + " channels, montage has " +
                      std::to_string(rec.montage.size()));
    }
    if (t.attended_envelope.size() != t.unattended_envelope.size()) {
      throw DataError(where + ": attended and unattended envelopes differ in length");
    }
    left += t.attended_side == Side::left;
    video += t.condition == Condition::video;
  }
  if (left != 3) throw DataError("participant " + rec.participant_id + ": attended side not balanced 3/3");
  if (video != 3) throw DataError("participant " + rec.participant_id + ": condition not balanced 3/3");
}

// ---------------------------------------------------------------------------
// Binary IO

namespace io {

static_assert(std::endian::native == std::endian::little, "canonical format IO assumes a little-endian host");

inline void write_f32(const std::filesystem::path& path, const float* data, size_t n) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

inline std::vector<float> read_f32(const std::filesystem::path& path, size_t expected, const std::string& where) {
  std::error_code ec;
  const auto bytes = std::filesystem::file_size(path, ec);
  if (ec) throw DataError(where + ": missing file '" + path.string() + "'");
  if (bytes != expected * sizeof(float)) {
    throw DataError(where + ": '" + path.filename().string() + "' holds " + std::to_string(bytes / sizeof(float)) +
                    " samples, expected " + std::to_string(expected));
  }
  std::vector<float> v(expected);
  std::ifstream in(path, std::ios::binary);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(expected * sizeof(float)));
  if (!in) throw DataError(where + ": read failed for '" + path.string() + "'");
  return v;
}

inline nlohmann::json read_json(const std::filesystem::path& path, const std::string& where) {
  std::ifstream in(path);
  if (!in) throw DataError(where + ": missing file '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(where + ": malformed JSON in '" + path.string() + "': " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
}

}  // namespace io

inline nlohmann::json montage_json(const Montage& m) {
  nlohmann::json labels = nlohmann::json::array(), tags = nlohmann::json::array();
  for (const auto& c : m.channels) {
    labels.push_back(c.label);
    tags.push_back(to_string(c.tag));
  }
  return {{"channel_labels", labels}, {"setup_tags", tags}};
}

inline Montage montage_from_json(const nlohmann::json& j, const std::string& where) {
  try {
    const auto labels = j.at("channel_labels").get<std::vector<std::string>>();
    const auto tags = j.at("setup_tags").get<std::vector<std::string>>();
    if (labels.size() != tags.size()) throw DataError(where + ": channel_labels and setup_tags differ in length");
    Montage m;
    for (size_t i = 0; i < labels.size(); ++i) m.channels.push_back({labels[i], setup_tag_from_string(tags[i])});
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(where + ": " + e.what());
  }
}

inline std::string participant_dir_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "P%02d", index);
  return buf;
}

/// Reads one trial of one participant; validates sidecar against montage.
inline Trial load_trial(const std::filesystem::path& participant_dir, const std::string& participant_id, int k,
                        const Montage& montage) {
  const std::string where = "participant " + participant_id + " trial " + std::to_string(k);
  const std::string stem = "trial" + std::to_string(k);
  const auto meta_path = participant_dir / (stem + "_meta.json");
  if (!std::filesystem::exists(meta_path)) throw DataError(where + ": missing trial (no " + meta_path.string() + ")");
  const auto meta = io::read_json(meta_path, where);
  Trial t;
  size_t n_channels = 0, n_samples = 0;
  try {
    n_channels = meta.at("n_channels").get<size_t>();
    n_samples = meta.at("n_samples").get<size_t>();
    t.sample_rate_hz = meta.at("sample_rate_hz").get<double>();
    t.envelope_rate_hz = meta.value("envelope_rate_hz", kEnvelopeRateHz);
    t.attended_side = side_from_string(meta.at("attended_side").get<std::string>());
    t.condition = condition_from_string(meta.at("condition").get<std::string>());
    if (meta.at("trial_index").get<int>() != k) throw DataError(where + ": trial_index mismatch in sidecar");
    const auto labels = meta.at("channel_labels").get<std::vector<std::string>>();
    const auto tags = meta.at("setup_tags").get<std::vector<std::string>>();
    if (labels.size() != n_channels || tags.size() != n_channels) {
      throw DataError(where + ": n_channels disagrees with channel_labels/setup_tags");
    }
    if (static_cast<Index>(n_channels) != montage.size()) {
      throw DataError(where + ": sidecar lists " + std::to_string(n_channels) + " channels, montage has " +
                      std::to_string(montage.size()));
    }
    for (size_t c = 0; c < n_channels; ++c) {
      const Index idx = montage.index_of(labels[c]);
      if (idx != static_cast<Index>(c) || to_string(montage.channels[c].tag) != tags[c]) {
        throw DataError(where + ": channel " + labels[c] + " does not match montage order/tag");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(where + ": bad sidecar: " + e.what());
  }

  const auto eeg = io::read_f32(participant_dir / (stem + "_eeg.f32"), n_channels * n_samples, where);
  t.eeg.resize(static_cast<Index>(n_samples), static_cast<Index>(n_channels));
  for (size_t c = 0; c < n_channels; ++c) {
    for (size_t s = 0; s < n_samples; ++s) {
      t.eeg(static_cast<Index>(s), static_cast<Index>(c)) = eeg[c * n_samples + s];
    }
  }
  const size_t n_env = static_cast<size_t>(std::llround(static_cast<double>(n_samples) * t.envelope_rate_hz /
                                                        t.sample_rate_hz));
  auto read_env = [&](const char* suffix) {
    const auto v = io::read_f32(participant_dir / (stem + suffix), n_env, where);
    Eigen::VectorXd e(static_cast<Index>(n_env));
    for (size_t i = 0; i < n_env; ++i) e(static_cast<Index>(i)) = v[i];
    return e;
  };
  t.attended_envelope = read_env("_env_att.f32");
  t.unattended_envelope = read_env("_env_un.f32");
  return t;
}

inline Montage load_montage(const std::filesystem::path& root) {
  return montage_from_json(io::read_json(root / "montage.json", "dataset"), "montage.json");
}

/// Participant directories (P01, P02, ...) present under root, sorted.
inline std::vector<std::string> list_participants(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw DataError("dataset root '" + root.string() + "' is not a directory");
  std::vector<std::string> ids;
  for (const auto& e : std::filesystem::directory_iterator(root)) {
    const auto name = e.path().filename().string();
    if (e.is_directory() && name.size() >= 2 && name[0] == 'P' &&
        std::all_of(name.begin() + 1, name.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
      ids.push_back(name);
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

inline Recording load_recording(const std::filesystem::path& root, const std::string& participant_id,
                                const Montage& montage) {
  Recording rec;
  rec.participant_id = participant_id;
  rec.montage = montage;
  const auto dir = root / participant_id;
  for (int k = 1; k <= kTrialsPerRecording; ++k) {
    if (!std::filesystem::exists(dir / ("trial" + std::to_string(k) + "_meta.json"))) {
      size_t found = 0;
      while (std::filesystem::exists(dir / ("trial" + std::to_string(found + 1) + "_meta.json"))) ++found;
      throw DataError("participant " + participant_id + ": expected 6 trials, found " + std::to_string(found) +
                      " (trial " + std::to_string(k) + " missing)");
    }
    rec.trials.push_back(load_trial(dir, participant_id, k, montage));
  }
  rec.sample_rate_hz = rec.trials.front().sample_rate_hz;
  validate_recording(rec);
  return rec;
}

inline std::vector<Recording> load_dataset(const std::filesystem::path& root) {
  const Montage montage = load_montage(root);
  std::vector<Recording> out;
  for (const auto& id : list_participants(root)) out.push_back(load_recording(root, id, montage));
  if (out.empty()) throw DataError("dataset root '" + root.string() + "' contains no participant directories");
  return out;
}

inline void write_trial(const std::filesystem::path& dir, const std::string& participant_id, int k,
                        const Montage& montage, const Trial& t) {
  const std::string stem = "trial" + std::to_string(k);
  const auto n_samples = static_cast<size_t>(t.eeg.rows());
  const auto n_channels = static_cast<size_t>(t.eeg.cols());
  std::vector<float> eeg(n_samples * n_channels);
  for (size_t c = 0; c < n_channels; ++c) {
    for (size_t s = 0; s < n_samples; ++s) {
      eeg[c * n_samples + s] = static_cast<float>(t.eeg(static_cast<Index>(s), static_cast<Index>(c)));
    }
  }
  io::write_f32(dir / (stem + "_eeg.f32"), eeg.data(), eeg.size());
  auto write_env = [&](const Eigen::VectorXd& e, const char* suffix) {
    std::vector<float> v(static_cast<size_t>(e.size()));
    for (Index i = 0; i < e.size(); ++i) v[static_cast<size_t>(i)] = static_cast<float>(e(i));
    io::write_f32(dir / (stem + suffix), v.data(), v.size());
  };
  write_env(t.attended_envelope, "_env_att.f32");
  write_env(t.unattended_envelope, "_env_un.f32");
  nlohmann::json meta = montage_json(montage);
  meta["participant_id"] = participant_id;
  meta["trial_index"] = k;
  meta["sample_rate_hz"] = t.sample_rate_hz;
  meta["envelope_rate_hz"] = t.envelope_rate_hz;
  meta["n_channels"] = n_channels;
  meta["n_samples"] = n_samples;
  meta["attended_side"] = to_string(t.attended_side);
  meta["condition"] = to_string(t.condition);
  io::write_json(dir / (stem + "_meta.json"), meta);
}

/// Writes recordings in the canonical layout. Values are stored as float32.
inline void write_dataset(const std::filesystem::path& root, const std::vector<Recording>& recordings,
                          const std::string& version = "canonical-1") {
  if (recordings.empty()) throw DataError("write_dataset: nothing to write");
  std::filesystem::create_directories(root);
  nlohmann::json mj = montage_json(recordings.front().montage);
  mj["version"] = version;
  io::write_json(root / "montage.json", mj);
  for (const auto& rec : recordings) {
    if (!(rec.montage == recordings.front().montage)) {
      throw DataError("write_dataset: participant " + rec.participant_id + " has a different montage");
    }
    const auto dir = root / rec.participant_id;
    std::filesystem::create_directories(dir);
    for (size_t k = 0; k < rec.trials.size(); ++k) {
      write_trial(dir, rec.participant_id, static_cast<int>(k + 1), rec.montage, rec.trials[k]);
    }
  }
}

inline std::string dataset_version(const std::filesystem::path& root) {
  const auto j = io::read_json(root / "montage.json", "dataset");
  return j.value("version", std::string("unversioned"));
}

// ---------------------------------------------------------------------------
// Synthetic forward model

/// Reproducible Gaussian noise: std::mt19937_64 (fully specified by the
/// standard) feeding a Box-Muller transform on 53-bit uniforms, so streams
/// are identical across standard libraries.
class GaussianNoise {
 public:
  explicit GaussianNoise(std::uint64_t seed) : engine_(seed) {}

  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(th);
    has_spare_ = true;
    return r * std::cos(th);
  }

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  double spare_{0.0};
  bool has_spare_{false};
};

/// SplitMix64 step; derives independent child seeds from a root seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct SynthSpec {
  Montage montage;
  Eigen::MatrixXd kernel_att;  // channels x lags
  Eigen::MatrixXd kernel_un;   // channels x lags
  double unattended_gain{0.0};
  double noise_sigma{0.0};
  std::uint64_t seed{0};
  Index lags{9};
  double sample_rate_hz{kEnvelopeRateHz};  // integer multiple of the envelope rate
  double background_sigma{0.0};            // shared source in every non-EOG channel

  Index n_channels() const { return montage.size(); }

  void validate() const {
    montage.validate();
    const Index c = n_channels();
    if (kernel_att.rows() != c || kernel_un.rows() != c) {
      throw ConfigError("synthetic: kernels must have one row per montage channel (" + std::to_string(c) + ")");
    }
    if (kernel_att.cols() != lags || kernel_un.cols() != lags) {
      throw ConfigError("synthetic: kernel length " + std::to_string(kernel_att.cols()) + "/" +
                        std::to_string(kernel_un.cols()) + " does not match lag count " + std::to_string(lags));
    }
    if (!(unattended_gain >= 0.0 && unattended_gain <= 1.0)) throw ConfigError("synthetic: alpha must be in [0,1]");
    if (!(noise_sigma >= 0.0)) throw ConfigError("synthetic: noise_sigma must be >= 0");
    if (!(background_sigma >= 0.0)) throw ConfigError("synthetic: background_sigma must be >= 0");
    dsp::decimation_factor(sample_rate_hz, kEnvelopeRateHz);
  }
};

/// EEG from the forward model at the envelope rate,
///   eeg(t,c) = sum_l k_att(c,l) s_att(t-l) + alpha sum_l k_un(c,l) s_un(t-l),
/// held up to `sample_rate_hz`, then sigma * unit Gaussian noise per raw sample.
/// With background_sigma > 0 one white source, scaled per channel by a gain
/// near 1, is added to every non-EOG channel as well.
/// Samples before the trial start count as zero.
inline Trial generate_synthetic(const SynthSpec& spec, const Eigen::VectorXd& attended,
                                const Eigen::VectorXd& unattended, Side attended_side,
                                Condition condition = Condition::fixation) {
  spec.validate();
  if (attended.size() != unattended.size()) throw DataError("synthetic: envelopes differ in length");
  const Index n = attended.size();
  const Index c = spec.n_channels();
  const Index hold = dsp::decimation_factor(spec.sample_rate_hz, kEnvelopeRateHz);

  Eigen::MatrixXd slow = Eigen::MatrixXd::Zero(n, c);
  for (Index ch = 0; ch < c; ++ch) {
    for (Index l = 0; l < spec.lags; ++l) {
      const double ka = spec.kernel_att(ch, l);
      const double ku = spec.unattended_gain * spec.kernel_un(ch, l);
      if (ka == 0.0 && ku == 0.0) continue;
      for (Index t = l; t < n; ++t) slow(t, ch) += ka * attended(t - l) + ku * unattended(t - l);
    }
  }

  Trial trial;
  trial.sample_rate_hz = spec.sample_rate_hz;
  trial.envelope_rate_hz = kEnvelopeRateHz;
  trial.attended_side = attended_side;
  trial.condition = condition;
  trial.attended_envelope = attended;
  trial.unattended_envelope = unattended;
  trial.eeg.resize(n * hold, c);
  for (Index t = 0; t < n * hold; ++t) trial.eeg.row(t) = slow.row(t / hold);
  if (spec.noise_sigma > 0.0) {
    GaussianNoise noise(spec.seed);
    for (Index ch = 0; ch < c; ++ch) {
      for (Index t = 0; t < trial.eeg.rows(); ++t) trial.eeg(t, ch) += spec.noise_sigma * noise();
    }
  }
  if (spec.background_sigma > 0.0) {
    GaussianNoise bg(mix_seed(spec.seed, 0xB6));
    Eigen::VectorXd gain(c);
    for (Index ch = 0; ch < c; ++ch) gain(ch) = 1.0 + 0.25 * bg();
    Eigen::VectorXd src(trial.eeg.rows());
    for (Index t = 0; t < src.size(); ++t) src(t) = spec.background_sigma * bg();
    for (Index ch = 0; ch < c; ++ch) {
      if (spec.montage.channels[static_cast<size_t>(ch)].tag != SetupTag::eog) trial.eeg.col(ch) += gain(ch) * src;
    }
  }
  return trial;
}

/// Speech-like surrogate envelope: white Gaussian noise bandpassed into
/// `band` at the envelope rate, then standardised.
inline Eigen::VectorXd synthetic_envelope(Index n, std::uint64_t seed, const dsp::BandpassSpec& band = {1.0, 9.0, 4, true}) {
  GaussianNoise noise(seed);
  Eigen::VectorXd w(n);
  for (Index i = 0; i < n; ++i) w(i) = noise();
  return dsp::standardize(dsp::butter_bandpass_zero_phase(w, band, kEnvelopeRateHz));
}

/// Everything needed to produce a synthetic multi-participant dataset.
struct SynthDatasetSpec {
  int participants{1};
  double trial_duration_s{600.0};
  Montage montage;
  std::vector<std::string> signal_channels;  // empty: every non-EOG channel carries signal
  double unattended_gain{0.5};
  double noise_sigma{0.0};
  double background_sigma{0.0};
  std::uint64_t seed{1};
  Index lags{9};
  double sample_rate_hz{kEnvelopeRateHz};
  dsp::BandpassSpec envelope_band{1.0, 9.0, 4, true};
  bool per_participant_kernels{false};
  std::vector<double> coupling_sign;  // optional per-participant multiplier on the attended kernel
};

/// Random temporal kernels for the channels listed in `active`, zero elsewhere.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> random_kernels(const Montage& m,
                                                                  const std::vector<std::string>& active,
                                                                  Index lags, std::uint64_t seed) {
  GaussianNoise g(seed);
  Eigen::MatrixXd ka = Eigen::MatrixXd::Zero(m.size(), lags);
  Eigen::MatrixXd ku = Eigen::MatrixXd::Zero(m.size(), lags);
  std::set<Index> on;
  if (active.empty()) {
    for (Index c = 0; c < m.size(); ++c) {
      if (m.channels[static_cast<size_t>(c)].tag != SetupTag::eog) on.insert(c);
    }
  } else {
    for (const auto& l : active) on.insert(m.index_of(l));
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(lags));
  for (Index c = 0; c < m.size(); ++c) {
    for (Index l = 0; l < lags; ++l) {
      const double a = g() * scale;
      const double u = g() * scale;
      if (on.count(c)) {
        ka(c, l) = a;
        ku(c, l) = u;
      }
    }
  }
  return {ka, ku};
}

/// Balanced six-trial protocol: sides alternate, conditions crossed 3/3.
inline std::pair<Side, Condition> protocol_slot(int k) {
  static constexpr std::array<std::pair<Side, Condition>, 6> slots{{
      {Side::left, Condition::video},
      {Side::right, Condition::fixation},
      {Side::left, Condition::fixation},
      {Side::right, Condition::video},
      {Side::left, Condition::video},
      {Side::right, Condition::fixation},
  }};
  return slots[static_cast<size_t>(k % 6)];
}

inline Recording make_synthetic_recording(const SynthDatasetSpec& ds, int participant) {
  if (ds.participants < 1) throw ConfigError("synthetic: participants must be >= 1");
  const std::uint64_t pseed = mix_seed(ds.seed, static_cast<std::uint64_t>(participant) + 1000);
  auto [ka, ku] = random_kernels(ds.montage, ds.signal_channels, ds.lags,
                                 ds.per_participant_kernels ? mix_seed(pseed, 1) : mix_seed(ds.seed, 1));
  if (static_cast<size_t>(participant) < ds.coupling_sign.size()) ka *= ds.coupling_sign[static_cast<size_t>(participant)];

  SynthSpec spec{ds.montage, ka, ku, ds.unattended_gain, ds.noise_sigma, 0, ds.lags, ds.sample_rate_hz,
                 ds.background_sigma};
  const Index n_env = static_cast<Index>(std::llround(ds.trial_duration_s * kEnvelopeRateHz));
  Recording rec;
  rec.participant_id = participant_dir_name(participant + 1);
  rec.montage = ds.montage;
  rec.sample_rate_hz = ds.sample_rate_hz;
  for (int k = 0; k < kTrialsPerRecording; ++k) {
    const auto tseed = mix_seed(pseed, static_cast<std::uint64_t>(10 + k));
    const Eigen::VectorXd att = synthetic_envelope(n_env, mix_seed(tseed, 1), ds.envelope_band);
    const Eigen::VectorXd un = synthetic_envelope(n_env, mix_seed(tseed, 2), ds.envelope_band);
    spec.seed = mix_seed(tseed, 3);
    const auto [side, cond] = protocol_slot(k);
    rec.trials.push_back(generate_synthetic(spec, att, un, side, cond));
  }
  return rec;
}

inline std::vector<Recording> make_synthetic_dataset(const SynthDatasetSpec& ds) {
  std::vector<Recording> out;
  for (int p = 0; p < ds.participants; ++p) out.push_back(make_synthetic_recording(ds, p));
  return out;
}

/// Scalp-only montage with the first n labels of the standard layout,
/// extended with generic labels beyond 29.
inline Montage scalp_montage(Index n) {
  const Montage full = standard_montage();
  Montage m;
  for (Index i = 0; i < n; ++i) {
    if (i < 29) {
      m.channels.push_back(full.channels[static_cast<size_t>(i)]);
    } else {
      m.channels.push_back({"S" + std::to_string(i + 1), SetupTag::scalp});
    }
  }
  return m;
}

/// Reads a synthetic dataset description. Fields (all optional):
/// participants, trial_duration_s, montage ("standard" | "scalp" | explicit
/// {channel_labels, setup_tags}), n_channels (scalp montage), signal_channels,
/// alpha, sigma, background, seed, lags, sample_rate_hz, envelope_band_hz [lo, hi],
/// per_participant_kernels, coupling_sign [..].
inline SynthDatasetSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthDatasetSpec ds;
  try {
    ds.participants = j.value("participants", 1);
    ds.trial_duration_s = j.value("trial_duration_s", 600.0);
    const auto& m = j.contains("montage") ? j.at("montage") : nlohmann::json("scalp");
    if (m.is_string()) {
      const auto kind = m.get<std::string>();
      if (kind == "standard") {
        ds.montage = standard_montage();
      } else if (kind == "scalp") {
        ds.montage = scalp_montage(j.value("n_channels", 16));
      } else {
        throw ConfigError("synthetic: unknown montage '" + kind + "'");
      }
    } else {
      ds.montage = montage_from_json(m, "synthetic montage");
    }
    ds.signal_channels = j.value("signal_channels", std::vector<std::string>{});
    ds.unattended_gain = j.value("alpha", 0.5);
    ds.noise_sigma = j.value("sigma", 0.0);
    ds.background_sigma = j.value("background", 0.0);
    ds.seed = j.value("seed", std::uint64_t{1});
    ds.lags = j.value("lags", Index{9});
    ds.sample_rate_hz = j.value("sample_rate_hz", kEnvelopeRateHz);
    if (j.contains("envelope_band_hz")) {
      const auto b = j.at("envelope_band_hz").get<std::vector<double>>();
      if (b.size() != 2) throw ConfigError("synthetic: envelope_band_hz needs [low, high]");
      ds.envelope_band.low_hz = b[0];
      ds.envelope_band.high_hz = b[1];
    }
    ds.per_participant_kernels = j.value("per_participant_kernels", false);
    ds.coupling_sign = j.value("coupling_sign", std::vector<double>{});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  } catch (const DataError& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  }
  for (const auto& l : ds.signal_channels) {
    if (!ds.montage.find(l)) throw ConfigError("synthetic: signal channel '" + l + "' not in montage");
  }
  if (ds.participants < 1) throw ConfigError("synthetic: participants must be >= 1");
  if (!(ds.trial_duration_s > 0.0)) throw ConfigError("synthetic: trial_duration_s must be > 0");
  return ds;
}

}  // namespace aad
