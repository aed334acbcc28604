#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "aeae/config.hpp"

namespace aeae {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text, const std::string& origin) {
  ConfigFile cfg;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(where + "empty section name");
      for (const auto& [name, unused] : cfg.data_) {
        (void)unused;
        if (name == section) throw ConfigError(where + "duplicate section [" + section + "]");
      }
      cfg.data_.push_back({section, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside any section");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where + "empty key");
    if (cfg.has(section, key)) throw ConfigError(where + "duplicate key '" + key + "'");
    cfg.set(section, key, trim(line.substr(eq + 1)));
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  return get(section, key).has_value();
}

std::optional<std::string> ConfigFile::get(const std::string& section,
                                           const std::string& key) const {
  for (const auto& [name, kv] : data_) {
    if (name != section) continue;
    for (const auto& [k, v] : kv)
      if (k == key) return v;
  }
  return std::nullopt;
}

void ConfigFile::set(const std::string& section, const std::string& key, const std::string& value) {
  auto it = std::find_if(data_.begin(), data_.end(), [&](const auto& s) { return s.first == section; });
  if (it == data_.end()) {
    data_.push_back({section, {}});
    it = std::prev(data_.end());
  }
  for (auto& [k, v] : it->second) {
    if (k == key) {
      v = value;
      return;
    }
  }
  it->second.push_back({key, value});
}

void ConfigFile::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  const std::string lhs = trim(assignment.substr(0, eq));
  const auto dot = lhs.rfind('.');
  if (eq == std::string::npos || dot == std::string::npos || dot == 0 || dot + 1 == lhs.size()) {
    throw ConfigError("override '" + assignment + "' is not section.key=value");
  }
  set(lhs.substr(0, dot), lhs.substr(dot + 1), trim(assignment.substr(eq + 1)));
}

std::vector<std::string> ConfigFile::sections() const {
  std::vector<std::string> out;
  for (const auto& s : data_) out.push_back(s.first);
  return out;
}

const std::vector<std::pair<std::string, std::string>>& ConfigFile::entries(
    const std::string& section) const {
  static const std::vector<std::pair<std::string, std::string>> kEmpty;
  for (const auto& s : data_)
    if (s.first == section) return s.second;
  return kEmpty;
}

std::string ConfigFile::canonical() const {
  std::string out;
  for (const auto& [name, kv] : data_) {
    out += "[" + name + "]\n";
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  }
  return out;
}

namespace {

// Reads typed values out of one section and remembers which keys were used,
// so leftovers can be reported as schema violations.
class SectionReader {
 public:
  SectionReader(const ConfigFile& file, std::string section)
      : file_(file), section_(std::move(section)) {}

  template <typename T>
  void read(const std::string& key, T& target) {
    used_.insert(key);
    const auto raw = file_.get(section_, key);
    if (!raw) return;
    target = convert<T>(key, *raw);
  }

  void finish() const {
    for (const auto& [k, v] : file_.entries(section_)) {
      (void)v;
      if (!used_.count(k)) throw ConfigError("config: unknown key '" + k + "' in [" + section_ + "]");
    }
  }

 private:
  template <typename T>
  T convert(const std::string& key, const std::string& raw) const {
    const std::string where = "config: [" + section_ + "] " + key + ": ";
    if constexpr (std::is_same_v<T, std::string>) {
      return raw;
    } else if constexpr (std::is_same_v<T, double>) {
      double v = 0;
      auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
      if (ec != std::errc() || p != raw.data() + raw.size()) throw ConfigError(where + "expected a number, got '" + raw + "'");
      return v;
    } else {
      std::uint64_t v = 0;
      auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
      if (ec != std::errc() || p != raw.data() + raw.size()) {
        throw ConfigError(where + "expected a non-negative integer, got '" + raw + "'");
      }
      return static_cast<T>(v);
    }
  }

  const ConfigFile& file_;
  std::string section_;
  std::set<std::string> used_;
};

void read_training(SectionReader& r, TrainConfig& cfg) {
  r.read("learning_rate", cfg.learning_rate);
  r.read("batch_size", cfg.batch_size);
  r.read("epochs", cfg.epochs);
}

AttackConfig read_attack(const ConfigFile& file, const std::string& section, const std::string& name) {
  SectionReader r(file, section);
  AttackConfig a;
  a.name = name;
  std::string method;
  r.read("method", method);
  if (method.empty()) throw ConfigError("config: [" + section + "] needs a method");
  try {
    a.method = parse_attack_method(method);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("config: [" + section + "] " + e.what());
  }
  // Per-method defaults before explicit keys.
  if (a.method == AttackMethod::PGD) {
    a.alpha = 0.01;
    a.iterations = 40;
  } else if (a.method == AttackMethod::DeepFool) {
    a.iterations = 50;
  }
  r.read("epsilon", a.epsilon);
  r.read("alpha", a.alpha);
  r.read("iterations", a.iterations);
  r.read("overshoot", a.overshoot);
  r.read("confidence", a.confidence);
  r.read("initial_c", a.initial_c);
  r.read("search_steps", a.search_steps);
  r.read("steps", a.cw_steps);
  r.read("learning_rate", a.cw_learning_rate);
  std::string target;
  r.read("target", target);
  if (!target.empty() && target != "none") {
    std::size_t t = 0;
    auto [p, ec] = std::from_chars(target.data(), target.data() + target.size(), t);
    if (ec != std::errc() || p != target.data() + target.size()) {
      throw ConfigError("config: [" + section + "] target must be a class index or none");
    }
    a.target = t;
  }
  r.finish();
  return a;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_file(const ConfigFile& file) {
  ExperimentConfig cfg;
  static const std::set<std::string> kSections = {"experiment", "data", "classifier", "autoencoder",
                                                  "attacks", "detector"};
  for (const auto& s : file.sections()) {
    if (!kSections.count(s) && s.rfind("attack.", 0) != 0) {
      throw ConfigError("config: unknown section [" + s + "]");
    }
  }
  {
    SectionReader r(file, "experiment");
    if (!file.has("experiment", "seed")) throw ConfigError("config: [experiment] seed is required");
    r.read("seed", cfg.seed);
    r.read("out", cfg.out_dir);
    r.finish();
  }
  {
    SectionReader r(file, "data");
    DataSpec& d = cfg.data;
    r.read("source", d.source);
    r.read("kind", d.kind);
    r.read("size", d.size);
    r.read("classes", d.classes);
    r.read("noise", d.noise);
    r.read("contrast", d.contrast);
    r.read("train_count", d.train_count);
    r.read("fit_count", d.fit_count);
    r.read("test_count", d.test_count);
    r.read("train_images", d.train_images);
    r.read("train_labels", d.train_labels);
    r.read("test_images", d.test_images);
    r.read("test_labels", d.test_labels);
    r.finish();
  }
  {
    SectionReader r(file, "classifier");
    r.read("conv1_filters", cfg.classifier.conv1_filters);
    r.read("conv2_filters", cfg.classifier.conv2_filters);
    read_training(r, cfg.classifier_training);
    r.finish();
  }
  {
    SectionReader r(file, "autoencoder");
    r.read("filters", cfg.autoencoder_filters);
    read_training(r, cfg.autoencoder_training);
    r.finish();
  }
  {
    SectionReader r(file, "attacks");
    r.read("count", cfg.attack_count);
    r.finish();
  }
  {
    SectionReader r(file, "detector");
    std::string mode = "auto";
    r.read("contamination", cfg.detector.contamination);
    r.read("pd_mode", mode);
    r.read("kl_floor", cfg.detector.kl_floor);
    r.read("trees", cfg.detector.forest.trees);
    r.read("subsample", cfg.detector.forest.subsample);
    r.finish();
    if (mode != "auto") {
      try {
        cfg.detector.pd_mode = parse_pd_mode(mode);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: [detector] ") + e.what());
      }
    }
  }
  for (const auto& s : file.sections()) {
    if (s.rfind("attack.", 0) == 0) cfg.attacks.push_back(read_attack(file, s, s.substr(7)));
  }
  cfg.validate();
  return cfg;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("config: " + what); };
  if (data.source != "synth" && data.source != "idx") fail("[data] source must be synth or idx");
  if (data.source == "idx") {
    for (const auto* p : {&data.train_images, &data.train_labels, &data.test_images, &data.test_labels}) {
      if (p->empty()) fail("[data] idx source needs train_images, train_labels, test_images, test_labels");
      if (!std::filesystem::exists(*p)) fail("[data] file not found: " + *p);
    }
  } else {
    if (data.size < 8 || data.size % 4 != 0) fail("[data] size must be a multiple of 4, >= 8");
    if (data.classes < 2 || data.classes > 10) fail("[data] classes must be in 2..10");
    if (data.noise < 0) fail("[data] noise must be >= 0");
    if (data.train_count < 1) fail("[data] train_count must be >= 1");
  }
  if (data.fit_count < kMinDetectorTrainingImages) {
    fail("[data] fit_count must be >= " + std::to_string(kMinDetectorTrainingImages));
  }
  if (data.test_count < 1) fail("[data] test_count must be >= 1");
  try {
    classifier_training.validate();
    autoencoder_training.validate();
    for (const auto& a : attacks) a.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (classifier.conv1_filters == 0 || classifier.conv2_filters == 0) fail("[classifier] filters must be >= 1");
  if (autoencoder_filters == 0) fail("[autoencoder] filters must be >= 1");
  if (attack_count < 1) fail("[attacks] count must be >= 1");
  std::set<std::string> names;
  for (const auto& a : attacks) {
    if (!names.insert(a.name).second) fail("duplicate attack name " + a.name);
  }
  if (!(detector.contamination > 0.0 && detector.contamination < 0.5)) {
    fail("[detector] contamination must be in (0, 0.5)");
  }
  if (!(detector.kl_floor > 0.0)) fail("[detector] kl_floor must be > 0");
  if (detector.forest.trees < 1 || detector.forest.subsample < 2) {
    fail("[detector] trees must be >= 1 and subsample >= 2");
  }
}

std::string default_config_text() {
  return R"(# Desk-scale detection experiment on synthetic 16x16 shapes.
[experiment]
seed = 1
out = aeae-out

[data]
source = synth
kind = shapes
size = 16
classes = 10
noise = 0.02
contrast = 0.15
train_count = 2000
fit_count = 600
test_count = 600

[classifier]
conv1_filters = 8
conv2_filters = 16
learning_rate = 0.01
batch_size = 64
epochs = 10

[autoencoder]
filters = 32
learning_rate = 0.01
batch_size = 64
epochs = 10

[attacks]
count = 200

[attack.fgsm_0.1]
method = fgsm
epsilon = 0.1

[attack.fgsm_0.2]
method = fgsm
epsilon = 0.2

[attack.fgsm_0.3]
method = fgsm
epsilon = 0.3

[attack.bim_0.1]
method = bim
epsilon = 0.1
alpha = 0.00392156862745098
iterations = 100

[attack.bim_0.2]
method = bim
epsilon = 0.2
alpha = 0.00392156862745098
iterations = 100

[attack.bim_0.3]
method = bim
epsilon = 0.3
alpha = 0.00392156862745098
iterations = 100

[attack.pgd_0.1]
method = pgd
epsilon = 0.1
alpha = 0.01
iterations = 40

[attack.pgd_0.2]
method = pgd
epsilon = 0.2
alpha = 0.01
iterations = 40

[attack.pgd_0.3]
method = pgd
epsilon = 0.3
alpha = 0.01
iterations = 40

[attack.deepfool]
method = deepfool
iterations = 50
overshoot = 0.02

[attack.cw]
method = cw_l2
confidence = 0
initial_c = 1
search_steps = 5
steps = 200
learning_rate = 0.01

[detector]
contamination = 0.10
pd_mode = auto
kl_floor = 1e-12
trees = 100
subsample = 256
)";
}

}  // namespace aeae
