#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "aeae/config.hpp"
#include "aeae/dataset.hpp"

namespace aeae {

/// A command needs an artifact an earlier command should have produced.
class MissingArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommandContext {
  ExperimentConfig config;
  std::string config_text;  ///< canonical config, hashed into manifests
  bool verbose = false;

  static CommandContext from_file(const ConfigFile& file);
};

struct CommandResult {
  std::vector<std::string> outputs;  ///< paths relative to the output directory
  std::string summary;               ///< one line for the terminal
};

/// The benign images every command works from, all derived from the config seed.
struct Splits {
  Dataset train;      ///< classifier and autoencoder training
  Dataset fit;        ///< detector fitting
  Dataset attack;     ///< test images offered to the attacks
  Dataset benign;     ///< held-out test images for detection metrics
};
Splits load_splits(const ExperimentConfig& config);

inline const std::vector<std::string> kCommandNames = {
    "train-classifier", "train-autoencoder", "attack",  "fit-detector",
    "detect",           "evaluate",          "scatter", "timing"};

CommandResult cmd_train_classifier(const CommandContext& ctx);
CommandResult cmd_train_autoencoder(const CommandContext& ctx);
CommandResult cmd_attack(const CommandContext& ctx);
CommandResult cmd_fit_detector(const CommandContext& ctx);
/// Scores `input` (IDX images) or, by default, the held-out benign split.
CommandResult cmd_detect(const CommandContext& ctx,
                         const std::optional<std::string>& input = std::nullopt);
CommandResult cmd_evaluate(const CommandContext& ctx);
CommandResult cmd_scatter(const CommandContext& ctx);
CommandResult cmd_timing(const CommandContext& ctx);

CommandResult run_command(const std::string& name, const CommandContext& ctx,
                          const std::optional<std::string>& input = std::nullopt);
/// All eight commands in pipeline order.
std::vector<CommandResult> run_pipeline(const CommandContext& ctx);

inline constexpr const char* kToolVersion = "aeae 1.0.0";

}  // namespace aeae
