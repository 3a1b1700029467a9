#include "aad/experiment.hpp"

#include "helpers.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <iterator>

using namespace aad;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  f << s;
}

/// Small standard-montage spec: 2 participants, 2-minute trials.
fs::path write_spec(const fs::path& dir, int participants = 2) {
  fs::create_directories(dir);
  const auto p = dir / "spec.json";
  spit(p, R"({"participants": )" + std::to_string(participants) +
              R"(, "trial_duration_s": 120, "montage": "standard", "alpha": 0.5,
                 "sigma": 20, "background": 30, "seed": 3, "sample_rate_hz": 20})");
  return p;
}

ExperimentConfig config(const fs::path& spec, const fs::path& out) {
  return ExperimentConfig::from({{"synthetic", spec.string()}, {"out", out.string()}});
}

int cli(const std::string& args) {
  const std::string cmd = std::string(AAD_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::string> data_lines(const fs::path& csv) {
  std::ifstream f(csv);
  std::vector<std::string> out;
  std::string line;
  int n = 0;
  while (std::getline(f, line)) {
    if (++n > 2) out.push_back(line);
  }
  return out;
}

}  // namespace

TEST(KeyValues, ParsesCommentsAndWhitespace) {
  const auto kv = parse_key_values("# header\n  seed = 12  # trailing\n\nwindows=1, 5\n");
  EXPECT_EQ(kv.size(), 2U);
  EXPECT_EQ(kv.at("seed"), "12");
  EXPECT_EQ(kv.at("windows"), "1, 5");
  EXPECT_THROW(parse_key_values("seed 12"), ConfigError);
  EXPECT_THROW(parse_key_values("= 3"), ConfigError);
}

TEST(Config, UnknownKeyListsValidKeys) {
  try {
    ExperimentConfig::from({{"sede", "1"}});
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("sede"), std::string::npos);
    EXPECT_NE(msg.find("seed"), std::string::npos);
  }
  EXPECT_THROW(ExperimentConfig::from({{"seed", "x"}}), ConfigError);
  EXPECT_THROW(ExperimentConfig::from({{"cv", "kfold"}}), ConfigError);
}

TEST(Config, StaticValidation) {
  auto base = [] { return ExperimentConfig::from({{"synthetic", "s.json"}}); };
  EXPECT_NO_THROW(base().validate_static());
  EXPECT_THROW(ExperimentConfig::from({}).validate_static(), ConfigError);
  EXPECT_THROW(ExperimentConfig::from({{"synthetic", "s"}, {"dataset", "d"}}).validate_static(), ConfigError);
  EXPECT_THROW(ExperimentConfig::from({{"synthetic", "s"}, {"windows", "5,1"}}).validate_static(), ConfigError);
  EXPECT_THROW(ExperimentConfig::from({{"synthetic", "s"}, {"reference", "same_ear"}}).validate_static(), ConfigError);
  EXPECT_NO_THROW(
      ExperimentConfig::from({{"synthetic", "s"}, {"setups", "in_ear"}, {"reference.in_ear", "same_ear"}}).validate_static());
  EXPECT_THROW(ExperimentConfig::from({{"synthetic", "s"}, {"alpha", "1.5"}}).validate_static(), ConfigError);
}

TEST(Config, CombinedSetupForcesSharedFp1) {
  const auto c = ExperimentConfig::from({{"synthetic", "s"}, {"setups", "around_ear+in_ear"}});
  EXPECT_NO_THROW(c.validate_static());
  const auto p = c.pipeline_for(c.setups[0]);
  EXPECT_EQ(p.reference.at(Setup::in_ear).kind, ReferenceScheme::Kind::shared_fp1);
  EXPECT_EQ(p.reference.at(Setup::around_ear).kind, ReferenceScheme::Kind::shared_fp1);
  EXPECT_THROW(ExperimentConfig::from({{"synthetic", "s"}, {"setups", "around_ear+in_ear"}, {"reference", "car"}})
                   .validate_static(),
               ConfigError);
  EXPECT_NO_THROW(ExperimentConfig::from({{"synthetic", "s"}, {"setups", "in_ear+scalp"}, {"reference", "fp1"}})
                      .validate_static());
}

TEST(Config, HashTracksSettingsButNotOutput) {
  const auto a = ExperimentConfig::from({{"synthetic", "s"}, {"out", "x"}});
  const auto b = ExperimentConfig::from({{"synthetic", "s"}, {"out", "y"}});
  const auto c = ExperimentConfig::from({{"synthetic", "s"}, {"seed", "2"}});
  const auto d = ExperimentConfig::from({{"synthetic", "s"}, {"rejection_k", "4"}});
  EXPECT_EQ(a.canonical("run"), b.canonical("run"));
  EXPECT_NE(fnv1a64(a.canonical("run")), fnv1a64(c.canonical("run")));
  EXPECT_NE(fnv1a64(a.canonical("run")), fnv1a64(d.canonical("run")));
  EXPECT_NE(fnv1a64(a.canonical("run")), fnv1a64(a.canonical("node-select")));
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Run, CurveShapeHashAndDeterminism) {
  const auto dir = testutil::temp_dir("exp_run");
  const auto spec = write_spec(dir);
  for (const char* out : {"a", "b"}) {
    RunContext ctx("run", config(spec, dir / out));
    run_decoding(ctx);
    ctx.manifest("v");
  }
  for (const char* f : {"accuracy.csv", "correlations.csv", "manifest.json"}) {
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }
  const auto hash = RunContext("run", config(spec, dir / "a")).config_hash;
  EXPECT_EQ(slurp(dir / "a" / "accuracy.csv").rfind("# config_hash=" + hash + "\n", 0), 0U);
  EXPECT_EQ(slurp(dir / "a" / "correlations.csv").rfind("# config_hash=" + hash + "\n", 0), 0U);
  const auto rows = data_lines(dir / "a" / "accuracy.csv");
  // (2 participants + pooled) x 3 setups x 8 windows
  EXPECT_EQ(rows.size(), 3U * 3U * 8U);
  EXPECT_EQ(rows.front().rfind("P01,scalp,car,loto,1,", 0), 0U) << rows.front();
  const auto m = io::read_json(dir / "a" / "manifest.json", "test");
  EXPECT_EQ(m.at("config_hash"), hash);
  EXPECT_EQ(m.at("seed"), 1);
}

TEST(Run, SeedChangesOutput) {
  const auto dir = testutil::temp_dir("exp_seed");
  const auto spec = write_spec(dir, 1);
  auto c1 = config(spec, dir / "a");
  auto c2 = config(spec, dir / "b");
  c2.apply("seed", "99");
  c1.windows = c2.windows = {60};
  RunContext x("run", c1), y("run", c2);
  run_decoding(x);
  run_decoding(y);
  EXPECT_NE(slurp(dir / "a" / "correlations.csv"), slurp(dir / "b" / "correlations.csv"));
}

TEST(Run, LopoAndCombinedSetup) {
  const auto dir = testutil::temp_dir("exp_lopo");
  auto c = config(write_spec(dir), dir / "o");
  c.apply("cv", "lopo");
  c.apply("setups", "in_ear,around_ear+in_ear");
  c.apply("windows", "30,60");
  RunContext ctx("run", c);
  run_decoding(ctx);
  const auto rows = data_lines(dir / "o" / "accuracy.csv");
  EXPECT_EQ(rows.size(), 3U * 2U * 2U);
  bool combined = false;
  for (const auto& r : rows) combined = combined || r.find("around_ear+in_ear,fp1+fp1,lopo") != std::string::npos;
  EXPECT_TRUE(combined);
}

TEST(ReferenceSweep, OneRowPerScalpElectrode) {
  const auto dir = testutil::temp_dir("exp_sweep");
  auto c = config(write_spec(dir, 1), dir / "o");
  RunContext ctx("reference-sweep", c);
  run_reference_sweep(ctx);
  EXPECT_EQ(data_lines(dir / "o" / "reference_sweep.csv").size(), 29U);
  EXPECT_EQ(data_lines(dir / "o" / "reference_heatmap.csv").size(), 29U);
}

TEST(NodeSelect, WritesTracesAndWeights) {
  const auto dir = testutil::temp_dir("exp_nodes");
  auto c = config(write_spec(dir, 1), dir / "o");
  c.apply("candidates", "Cz,Pz,around_ear");
  c.apply("n_reps", "2");
  RunContext ctx("node-select", c);
  run_node_select(ctx);
  EXPECT_EQ(data_lines(dir / "o" / "selection_traces.csv").size(), 6U * 3U);
  const auto acc = data_lines(dir / "o" / "selection_accuracy.csv");
  EXPECT_EQ(acc.size(), 4U);
  double total = 0.0;
  for (const auto& line : data_lines(dir / "o" / "importance_weights.csv")) total += std::stod(split(line, ',').back());
  EXPECT_NEAR(total, 100.0, 1e-4);
}

TEST(Stats, SignificanceAndPairwise) {
  const auto dir = testutil::temp_dir("exp_stats");
  auto c = config(write_spec(dir), dir / "run");
  c.apply("windows", "60");
  RunContext run("run", c);
  run_decoding(run);
  auto s = ExperimentConfig::from({{"input", (dir / "run" / "accuracy.csv").string()}, {"out", (dir / "st").string()}});
  RunContext ctx("stats", s);
  run_stats(ctx);
  const auto sig = data_lines(dir / "st" / "significance.csv");
  EXPECT_EQ(sig.size(), 3U * 3U);
  EXPECT_EQ(sig.front(), "scalp,P01,12,1.000000,0.750000,1");
  EXPECT_EQ(data_lines(dir / "st" / "pairwise.csv").size(), 3U);
}

TEST(Ingest, ExportRoundTrip) {
  const auto dir = testutil::temp_dir("exp_ingest");
  SynthDatasetSpec s;
  s.montage = scalp_montage(3);
  s.trial_duration_s = 10;
  s.noise_sigma = 1.0;
  s.sample_rate_hz = 40;
  const Recording rec = make_synthetic_recording(s, 0);
  nlohmann::json trials = nlohmann::json::array();
  for (size_t k = 0; k < rec.trials.size(); ++k) {
    const auto& t = rec.trials[k];
    const std::string stem = "t" + std::to_string(k);
    // sample-major for even trials, channel-major for odd ones
    const bool sm = k % 2 == 0;
    std::vector<float> eeg;
    if (sm) {
      for (Index r = 0; r < t.eeg.rows(); ++r) {
        for (Index ch = 0; ch < t.eeg.cols(); ++ch) eeg.push_back(static_cast<float>(t.eeg(r, ch)));
      }
    } else {
      for (Index ch = 0; ch < t.eeg.cols(); ++ch) {
        for (Index r = 0; r < t.eeg.rows(); ++r) eeg.push_back(static_cast<float>(t.eeg(r, ch)));
      }
    }
    io::write_f32(dir / (stem + "_eeg.f32"), eeg.data(), eeg.size());
    const Eigen::VectorXf a = t.attended_envelope.cast<float>(), u = t.unattended_envelope.cast<float>();
    io::write_f32(dir / (stem + "_a.f32"), a.data(), static_cast<size_t>(a.size()));
    io::write_f32(dir / (stem + "_u.f32"), u.data(), static_cast<size_t>(u.size()));
    trials.push_back({{"eeg", stem + "_eeg.f32"},
                      {"layout", sm ? "sample_major" : "channel_major"},
                      {"n_samples", t.eeg.rows()},
                      {"sample_rate_hz", 40},
                      {"attended_side", to_string(t.attended_side)},
                      {"condition", to_string(t.condition)},
                      {"envelope_attended", stem + "_a.f32"},
                      {"envelope_unattended", stem + "_u.f32"}});
  }
  nlohmann::json participant{{"id", "P01"}, {"trials", trials}};
  nlohmann::json ex{{"version", "export-1"},
                    {"montage", montage_json(rec.montage)},
                    {"participants", nlohmann::json::array({participant})}};
  io::write_json(dir / "export.json", ex);

  EXPECT_EQ(cli("ingest " + dir.string() + " -o " + (dir / "ds").string()), 0);
  const auto loaded = load_dataset(dir / "ds");
  ASSERT_EQ(loaded.size(), 1U);
  EXPECT_EQ(dataset_version(dir / "ds"), "export-1");
  for (size_t k = 0; k < 6; ++k) {
    EXPECT_EQ(loaded[0].trials[k].eeg.cast<float>(), rec.trials[k].eeg.cast<float>()) << k;
    EXPECT_EQ(loaded[0].trials[k].attended_side, rec.trials[k].attended_side);
  }

  ex["participants"][0]["trials"][0]["layout"] = "diagonal";
  io::write_json(dir / "export.json", ex);
  EXPECT_EQ(cli("ingest " + dir.string() + " -o " + (dir / "ds2").string()), 2);
  ex["participants"][0]["trials"][0]["layout"] = "sample_major";
  ex["participants"][0]["trials"][1]["n_samples"] = 399;
  io::write_json(dir / "export.json", ex);
  EXPECT_EQ(cli("ingest " + dir.string() + " -o " + (dir / "ds3").string()), 3);
}

TEST(Cli, ExitCodes) {
  const auto dir = testutil::temp_dir("exp_cli");
  const auto spec = write_spec(dir, 1);
  const std::string syn = "--synthetic " + spec.string();
  EXPECT_EQ(cli("--help"), 0);
  EXPECT_EQ(cli(""), 2);
  EXPECT_EQ(cli("run --no-such-flag"), 2);
  EXPECT_EQ(cli("run " + syn + " --set sede=1 -o " + (dir / "x").string()), 2);
  EXPECT_EQ(cli("run " + syn + " --setup around_ear+in_ear --reference car -o " + (dir / "x").string()), 2);
  EXPECT_EQ(cli("run " + syn + " --reference electrode:Nope -o " + (dir / "x").string()), 2);
  EXPECT_EQ(cli("run --dataset " + (dir / "missing").string() + " -o " + (dir / "x").string()), 3);
  EXPECT_EQ(cli("run " + syn + " --windows 60 --setup in_ear -o " + (dir / "ok").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "ok" / "manifest.json"));
}

TEST(Cli, SynthThenRunFromDisk) {
  const auto dir = testutil::temp_dir("exp_synth");
  const auto spec = write_spec(dir, 1);
  ASSERT_EQ(cli("synth --synthetic " + spec.string() + " -o " + (dir / "ds").string()), 0);
  ASSERT_EQ(cli("run --dataset " + (dir / "ds").string() + " --windows 60 -o " + (dir / "r").string()), 0);
  const auto m = io::read_json(dir / "r" / "manifest.json", "test");
  EXPECT_EQ(m.at("dataset_version").get<std::string>().rfind("synthetic-", 0), 0U);
  EXPECT_EQ(data_lines(dir / "r" / "accuracy.csv").size(), 3U);
}

TEST(Cli, ConfigFileAndDemo) {
  const auto dir = testutil::temp_dir("exp_cfg");
  const auto spec = write_spec(dir, 1);
  spit(dir / "e.cfg", "synthetic = " + spec.string() + "\nsetups = in_ear\nwindows = 30, 60\n");
  ASSERT_EQ(cli("run -c " + (dir / "e.cfg").string() + " -o " + (dir / "r").string()), 0);
  EXPECT_EQ(data_lines(dir / "r" / "accuracy.csv").size(), 2U);
  const auto kv = read_key_values(fs::path(AAD_SOURCE_DIR) / "demos" / "experiment.cfg");
  EXPECT_NO_THROW(ExperimentConfig::from(kv).validate_static());
}
