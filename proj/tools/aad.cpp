// aad: batch front end for the decoding pipeline.
//
// Every subcommand takes an optional key-value --config file; flags and
// --set key=value override it. Exit codes: 0 ok, 2 config, 3 data,
// 4 numerical.

#include "aad/experiment.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  aad::KeyValues flags;
};

// Registers a flag that writes straight into the key-value overrides.
void kv_option(CLI::App* app, Common& c, const std::string& flag, const std::string& key, const std::string& help) {
  app->add_option_function<std::string>(flag, [&c, key](const std::string& v) { c.flags[key] = v; }, help);
}

void common_options(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config, "key-value config file");
  app->add_option("--set", c.sets, "override: key=value (repeatable)");
  kv_option(app, c, "--dataset", "dataset", "canonical dataset root");
  kv_option(app, c, "--synthetic", "synthetic", "synthetic dataset spec (JSON)");
  kv_option(app, c, "--seed", "seed", "root seed");
  kv_option(app, c, "-o,--out", "out", "output directory");
  kv_option(app, c, "--participants", "participants", "comma-separated participant ids");
}

void pipeline_options(CLI::App* app, Common& c) {
  kv_option(app, c, "--reference", "reference", "car | same_ear | other_ear | fp1 | electrode:<label>");
  kv_option(app, c, "--windows", "windows", "comma-separated decision windows in seconds");
  kv_option(app, c, "--rejection-k", "rejection_k", "window rejection threshold (robust z)");
  app->add_flag_callback("--no-artifact-removal", [&c] { c.flags["artifact_removal"] = "false"; },
                         "skip EOG regression, bad channels, ASR slot and window rejection");
}

aad::ExperimentConfig resolve(const Common& c) {
  aad::KeyValues kv;
  if (!c.config.empty()) kv = aad::read_key_values(c.config);
  for (const auto& [k, v] : c.flags) kv[k] = v;
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw aad::ConfigError("--set expects key=value, got '" + s + "'");
    kv[aad::trim(s.substr(0, eq))] = aad::trim(s.substr(eq + 1));
  }
  return aad::ExperimentConfig::from(kv);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEG auditory attention decoding pipeline"};
  app.require_subcommand(1);

  Common c;
  std::string export_dir;

  auto* ingest = app.add_subcommand("ingest", "convert an export directory into the canonical dataset layout");
  ingest->add_option("export", export_dir, "directory containing export.json")->required();
  kv_option(ingest, c, "-o,--out", "out", "output dataset root");

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset in the canonical layout");
  common_options(synth, c);

  auto* pre = app.add_subcommand("preprocess", "run the cleaning pipeline and write a per-trial report");
  common_options(pre, c);
  pipeline_options(pre, c);
  kv_option(pre, c, "--setup", "setups", "setups, comma-separated; join with + to combine");

  auto* run = app.add_subcommand("run", "cross-validated accuracy curves and correlation samples");
  common_options(run, c);
  pipeline_options(run, c);
  kv_option(run, c, "--setup", "setups", "setups, comma-separated; join with + to combine");
  kv_option(run, c, "--cv", "cv", "loto | lopo");

  auto* sweep = app.add_subcommand("reference-sweep", "accuracy per scalp reference electrode");
  common_options(sweep, c);
  pipeline_options(sweep, c);
  kv_option(sweep, c, "--setup", "sweep_setup", "setup to re-reference");
  kv_option(sweep, c, "--window", "sweep_window_s", "decision window in seconds");

  auto* nodes = app.add_subcommand("node-select", "greedy node selection against a random-order baseline");
  common_options(nodes, c);
  pipeline_options(nodes, c);
  kv_option(nodes, c, "--base", "base", "base node (around_ear | in_ear | electrode label)");
  kv_option(nodes, c, "--candidates", "candidates", "comma-separated candidate nodes");
  kv_option(nodes, c, "--n-reps", "n_reps", "random baseline repetitions");
  kv_option(nodes, c, "--half-life", "half_life_nodes", "importance weight half-life in nodes");

  auto* stats = app.add_subcommand("stats", "significance and pairwise tests from an accuracy CSV");
  stats->add_option("-c,--config", c.config, "key-value config file");
  stats->add_option("--set", c.sets, "override: key=value (repeatable)");
  kv_option(stats, c, "-i,--input", "input", "accuracy.csv from `run`");
  kv_option(stats, c, "--window", "stats_window_s", "decision window in seconds");
  kv_option(stats, c, "--alpha", "alpha", "significance level");
  kv_option(stats, c, "-o,--out", "out", "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    aad::RunContext ctx(name, resolve(c));
    if (name == "ingest") {
      aad::run_ingest(ctx, export_dir);
    } else if (name == "synth") {
      aad::run_synth(ctx);
    } else if (name == "preprocess") {
      aad::run_preprocess_report(ctx);
    } else if (name == "run") {
      aad::run_decoding(ctx);
    } else if (name == "reference-sweep") {
      aad::run_reference_sweep(ctx);
    } else if (name == "node-select") {
      aad::run_node_select(ctx);
    } else if (name == "stats") {
      aad::run_stats(ctx);
    }
    for (const auto& w : ctx.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << name << ": wrote " << ctx.files.size() << " output(s) to " << ctx.out.string()
              << " (config " << ctx.config_hash << ")\n";
    return 0;
  } catch (const aad::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const aad::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const aad::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  }
}
