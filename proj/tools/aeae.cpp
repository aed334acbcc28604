#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "aeae/commands.hpp"

namespace {

// Errors leave as one line: "aeae: error: <kind>: <message>".
int fail(const char* kind, std::string message, int code) {
  for (char& c : message)
    if (c == '\n' || c == '\r') c = ' ';
  std::fprintf(stderr, "aeae: error: %s: %s\n", kind, message.c_str());
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial-example detection with an autoencoder and an isolation forest"};
  app.set_version_flag("--version", std::string(aeae::kToolVersion));
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out, input;
  std::vector<std::string> overrides;
  bool verbose = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "Override [experiment] seed");
    cmd->add_option("--out", out, "Override [experiment] out directory");
    cmd->add_option("--set", overrides, "Override a config key: section.key=value")->take_all();
    cmd->add_flag("-v,--verbose", verbose, "Progress on stderr");
  };

  const std::map<std::string, std::string> blurbs = {
      {"train-classifier", "Train the target classifier on the train split"},
      {"train-autoencoder", "Train the autoencoder on benign train images"},
      {"attack", "Generate adversarial sets from correctly classified attack images"},
      {"fit-detector", "Fit the isolation forest on benign (MSE, PD) features"},
      {"detect", "Score images and write per-image verdicts"},
      {"evaluate", "Recall, precision, F1 and FPR per adversarial set"},
      {"scatter", "Export (MSE, PD) points per adversarial set"},
      {"timing", "Per-image latency and model size report"}};
  std::vector<CLI::App*> commands;
  for (const auto& name : aeae::kCommandNames) {
    CLI::App* cmd = app.add_subcommand(name, blurbs.at(name));
    add_common(cmd);
    if (name == "detect") cmd->add_option("--input", input, "IDX images to score (default: held-out benign split)");
    commands.push_back(cmd);
  }
  CLI::App* pipeline = app.add_subcommand("pipeline", "Run all eight commands in order");
  add_common(pipeline);
  std::string init_path;
  CLI::App* init = app.add_subcommand("init-config", "Write the built-in desk config");
  init->add_option("path", init_path, "Destination file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return fail("usage", e.what(), 2);
  }

  try {
    if (init->parsed()) {
      std::ofstream f(init_path, std::ios::trunc);
      f << aeae::default_config_text();
      if (!f) return fail("io", "cannot write " + init_path, 1);
      return 0;
    }
    aeae::ConfigFile file = aeae::ConfigFile::load(config_path);
    if (seed) file.set("experiment", "seed", std::to_string(*seed));
    if (out) file.set("experiment", "out", *out);
    for (const auto& o : overrides) file.apply_override(o);
    aeae::CommandContext ctx = aeae::CommandContext::from_file(file);
    ctx.verbose = verbose;

    std::vector<aeae::CommandResult> results;
    if (pipeline->parsed()) {
      for (const auto& name : aeae::kCommandNames) {
        results.push_back(aeae::run_command(name, ctx));
        std::printf("%s: %s\n", name.c_str(), results.back().summary.c_str());
      }
    } else {
      for (CLI::App* cmd : commands) {
        if (!cmd->parsed()) continue;
        auto r = aeae::run_command(cmd->get_name(), ctx, input);
        std::printf("%s: %s\n", cmd->get_name().c_str(), r.summary.c_str());
      }
    }
    return 0;
  } catch (const aeae::ConfigError& e) {
    return fail("config", e.what(), 2);
  } catch (const aeae::MissingArtifactError& e) {
    return fail("missing-artifact", e.what(), 3);
  } catch (const aeae::CheckpointError& e) {
    return fail("checkpoint", e.what(), 4);
  } catch (const aeae::IdxError& e) {
    return fail("dataset", e.what(), 4);
  } catch (const std::exception& e) {
    return fail("runtime", e.what(), 1);
  }
}
