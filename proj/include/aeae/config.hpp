#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "aeae/attacks.hpp"
#include "aeae/detector.hpp"
#include "aeae/models.hpp"

namespace aeae {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat `key = value` text grouped under `[section]` headers. `#` starts a
/// comment. Section and key order is preserved for the canonical form.
class ConfigFile {
 public:
  static ConfigFile parse(const std::string& text, const std::string& origin = "<string>");
  static ConfigFile load(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;
  std::optional<std::string> get(const std::string& section, const std::string& key) const;
  void set(const std::string& section, const std::string& key, const std::string& value);
  /// Applies `section.key=value`; the section part may itself contain dots.
  void apply_override(const std::string& assignment);

  std::vector<std::string> sections() const;
  const std::vector<std::pair<std::string, std::string>>& entries(const std::string& section) const;

  /// Normalised text: one `[section]` block per section, `key = value` lines.
  std::string canonical() const;

 private:
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>> data_;
};

struct DataSpec {
  std::string source = "synth";  ///< synth | idx
  std::string kind = "shapes";
  std::size_t size = 16;
  std::size_t classes = 10;
  double noise = 0.02;
  double contrast = 0.15;
  std::size_t train_count = 2000;  ///< classifier and autoencoder training
  std::size_t fit_count = 600;     ///< benign images the detector is fitted on
  std::size_t test_count = 600;    ///< held-out benign images; attacks draw from these
  std::string train_images, train_labels, test_images, test_labels;  ///< idx source
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "aeae-out";
  DataSpec data;
  ClassifierArch classifier;
  TrainConfig classifier_training{.learning_rate = 0.01, .batch_size = 64, .epochs = 10};
  std::size_t autoencoder_filters = 32;
  TrainConfig autoencoder_training{.learning_rate = 0.01, .batch_size = 64, .epochs = 10};
  std::size_t attack_count = 200;  ///< test images offered to each attack
  std::vector<AttackConfig> attacks;
  DetectorParams detector;

  /// Parses and checks every key; unknown sections or keys are errors.
  static ExperimentConfig from_file(const ConfigFile& file);
  void validate() const;
};

/// Built-in desk configuration, written out by `aeae init-config`.
std::string default_config_text();

}  // namespace aeae
