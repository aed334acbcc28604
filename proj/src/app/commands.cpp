#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "aeae/binary_io.hpp"
#include "aeae/commands.hpp"
#include "aeae/csv.hpp"
#include "aeae/seeding.hpp"

namespace fs = std::filesystem;

namespace aeae {

CommandContext CommandContext::from_file(const ConfigFile& file) {
  CommandContext ctx;
  ctx.config = ExperimentConfig::from_file(file);
  ctx.config_text = file.canonical();
  return ctx;
}

Splits load_splits(const ExperimentConfig& config) {
  const DataSpec& d = config.data;
  if (d.test_count <= config.attack_count) {
    throw ConfigError("config: [data] test_count must exceed [attacks] count so benign "
                      "evaluation images stay disjoint from attacked ones");
  }
  Splits s;
  Dataset test;
  if (d.source == "synth") {
    SynthOptions opts{.size = d.size, .classes = d.classes, .noise = d.noise, .contrast = d.contrast};
    s.train = synth_dataset(d.kind, d.train_count, derive_seed(config.seed, "data/train"), opts);
    s.fit = synth_dataset(d.kind, d.fit_count, derive_seed(config.seed, "data/fit"), opts);
    test = synth_dataset(d.kind, d.test_count, derive_seed(config.seed, "data/test"), opts);
  } else {
    Dataset train = load_idx(d.train_images, d.train_labels);
    test = load_idx(d.test_images, d.test_labels);
    if (train.size() < d.fit_count + 1) throw ConfigError("idx training file too small for fit_count");
    const std::size_t n_train = std::min(d.train_count, train.size() - d.fit_count);
    s.train = train.head(n_train);
    s.fit = train.slice(train.size() - d.fit_count, train.size());
    test = test.head(d.test_count);
    if (test.size() <= config.attack_count) throw ConfigError("idx test file too small for attacks count");
  }
  s.train.name = "train";
  s.fit.name = "fit";
  s.attack = test.head(config.attack_count);
  s.attack.name = "attack";
  s.benign = test.slice(config.attack_count, test.size());
  s.benign.name = "benign";
  return s;
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

std::uint64_t text_digest(const std::string& s) {
  return fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

fs::path out_dir(const CommandContext& ctx) { return fs::path(ctx.config.out_dir); }

fs::path artifact(const CommandContext& ctx, const std::string& rel) { return out_dir(ctx) / rel; }

fs::path require_artifact(const CommandContext& ctx, const std::string& rel, const char* producer) {
  fs::path p = artifact(ctx, rel);
  if (!fs::exists(p)) {
    throw MissingArtifactError("missing artifact " + p.string() + "; run '" + producer + "' first");
  }
  return p;
}

ImageShape data_shape(const Splits& s) { return s.train.shape; }

void log(const CommandContext& ctx, const std::string& line) {
  if (ctx.verbose) std::fprintf(stderr, "%s\n", line.c_str());
}

// Records what a command read and wrote, with digests, beside its outputs.
void write_manifest(const CommandContext& ctx, const std::string& command,
                    const std::vector<std::pair<std::string, std::uint64_t>>& seeds,
                    const std::vector<std::string>& inputs, const std::vector<std::string>& outputs) {
  std::string text;
  text += "command = " + command + "\n";
  text += "version = " + std::string(kToolVersion) + "\n";
  text += "config_digest = " + hex64(text_digest(ctx.config_text)) + "\n";
  text += "seed = " + std::to_string(ctx.config.seed) + "\n";
  for (const auto& [purpose, seed] : seeds) text += "derived_seed." + purpose + " = " + std::to_string(seed) + "\n";
  auto file_line = [&](const char* kind, const std::string& rel) {
    const fs::path p = artifact(ctx, rel);
    const std::string digest = fs::exists(p) ? hex64(fnv1a64(read_file_bytes(p.string()))) : "absent";
    text += std::string(kind) + " = " + rel + " fnv1a64:" + digest + "\n";
  };
  for (const auto& in : inputs) file_line("input", in);
  for (const auto& o : outputs) file_line("output", o);
  text += "\n[config]\n" + ctx.config_text;
  const auto bytes = std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size());
  write_file_bytes(artifact(ctx, "manifest." + command + ".txt").string(), bytes);
}

TrainConfig seeded(TrainConfig cfg, std::uint64_t seed) {
  cfg.seed = seed;
  return cfg;
}

AttackConfig seeded_attack(const CommandContext& ctx, AttackConfig a) {
  a.seed = derive_seed(ctx.config.seed, "attack/" + a.name);
  return a;
}

std::string attack_csv(const std::string& name) { return "attacks/" + name + ".csv"; }
std::string attack_images(const std::string& name) { return "attacks/" + name + "-images.idx"; }
std::string attack_labels(const std::string& name) { return "attacks/" + name + "-labels.idx"; }

DetectorModel load_detector(const CommandContext& ctx) {
  return DetectorModel::load(require_artifact(ctx, "detector.ckpt", "fit-detector").string());
}

struct AdversarialSet {
  std::string name;
  Dataset data;
};

std::vector<AdversarialSet> load_adversarial_sets(const CommandContext& ctx) {
  std::vector<AdversarialSet> sets;
  for (const auto& a : ctx.config.attacks) {
    const fs::path images = require_artifact(ctx, attack_images(a.name), "attack");
    Dataset d = load_idx(images.string());
    if (d.size() == 0) continue;
    sets.push_back({a.name, std::move(d)});
  }
  if (sets.empty()) throw MissingArtifactError("no attack produced a successful adversarial example");
  return sets;
}

}  // namespace

CommandResult cmd_train_classifier(const CommandContext& ctx) {
  const auto& cfg = ctx.config;
  fs::create_directories(out_dir(ctx));
  const Splits s = load_splits(cfg);
  ClassifierArch arch = cfg.classifier;
  arch.input = data_shape(s);
  arch.classes = std::max(s.train.class_count(), cfg.data.source == "synth" ? cfg.data.classes : 0);
  const std::uint64_t init_seed = derive_seed(cfg.seed, "classifier/init");
  const std::uint64_t shuffle_seed = derive_seed(cfg.seed, "classifier/shuffle");
  ClassifierModel model = ClassifierModel::build(arch, init_seed);
  log(ctx, "training classifier on " + std::to_string(s.train.size()) + " images");
  const TrainHistory h =
      train_classifier(model, s.train.images, s.train.labels, seeded(cfg.classifier_training, shuffle_seed));
  save_model(model, artifact(ctx, "classifier.ckpt").string());

  CsvWriter hist(artifact(ctx, "classifier_history.csv").string(), {"epoch", "loss", "accuracy"});
  for (std::size_t e = 0; e < h.loss.size(); ++e) hist.cell(e + 1).cell(h.loss[e]).cell(h.accuracy[e]).end_row();
  hist.close();

  Dataset test = s.attack;
  test.images.insert(test.images.end(), s.benign.images.begin(), s.benign.images.end());
  test.labels.insert(test.labels.end(), s.benign.labels.begin(), s.benign.labels.end());
  const double test_acc = classification_accuracy(model, test.images, test.labels);
  CsvWriter rep(artifact(ctx, "classifier_report.csv").string(), {"metric", "value"});
  rep.cell("parameters").cell(model.parameter_count()).end_row();
  rep.cell("train_accuracy").cell(h.accuracy.back()).end_row();
  rep.cell("test_accuracy").cell(test_acc).end_row();
  rep.close();

  std::vector<std::string> outputs = {"classifier.ckpt", "classifier_history.csv", "classifier_report.csv"};
  write_manifest(ctx, "train-classifier", {{"classifier/init", init_seed}, {"classifier/shuffle", shuffle_seed}},
                 {}, outputs);
  return {outputs, "classifier test accuracy " + format_real(test_acc)};
}

CommandResult cmd_train_autoencoder(const CommandContext& ctx) {
  const auto& cfg = ctx.config;
  fs::create_directories(out_dir(ctx));
  const Splits s = load_splits(cfg);
  const std::uint64_t init_seed = derive_seed(cfg.seed, "autoencoder/init");
  const std::uint64_t shuffle_seed = derive_seed(cfg.seed, "autoencoder/shuffle");
  AutoencoderModel model = AutoencoderModel::build(data_shape(s), cfg.autoencoder_filters, init_seed);
  log(ctx, "training autoencoder on " + std::to_string(s.train.size()) + " benign images");
  const TrainHistory h = train_autoencoder(model, s.train.images, seeded(cfg.autoencoder_training, shuffle_seed));
  save_model(model, artifact(ctx, "autoencoder.ckpt").string());

  CsvWriter hist(artifact(ctx, "autoencoder_history.csv").string(), {"epoch", "loss"});
  for (std::size_t e = 0; e < h.loss.size(); ++e) hist.cell(e + 1).cell(h.loss[e]).end_row();
  hist.close();
  const double test_mse = mean_reconstruction_mse(model, s.benign.images);
  CsvWriter rep(artifact(ctx, "autoencoder_report.csv").string(), {"metric", "value"});
  rep.cell("parameters").cell(model.parameter_count()).end_row();
  rep.cell("train_mse").cell(h.loss.back()).end_row();
  rep.cell("test_mse").cell(test_mse).end_row();
  rep.close();

  std::vector<std::string> outputs = {"autoencoder.ckpt", "autoencoder_history.csv", "autoencoder_report.csv"};
  write_manifest(ctx, "train-autoencoder",
                 {{"autoencoder/init", init_seed}, {"autoencoder/shuffle", shuffle_seed}}, {}, outputs);
  return {outputs, "autoencoder benign test MSE " + format_real(test_mse)};
}

CommandResult cmd_attack(const CommandContext& ctx) {
  const auto& cfg = ctx.config;
  if (cfg.attacks.empty()) throw ConfigError("config: no [attack.NAME] sections");
  const ClassifierModel model =
      load_classifier(require_artifact(ctx, "classifier.ckpt", "train-classifier").string());
  const Splits s = load_splits(cfg);
  fs::create_directories(artifact(ctx, "attacks"));

  // Only correctly classified images are attacked.
  std::vector<Tensor> images;
  std::vector<std::size_t> labels, index;
  for (std::size_t i = 0; i < s.attack.size(); ++i) {
    if (model.predict_label(s.attack.images[i]) != s.attack.labels[i]) continue;
    images.push_back(s.attack.images[i]);
    labels.push_back(s.attack.labels[i]);
    index.push_back(i);
  }
  if (images.empty()) throw std::runtime_error("attack: classifier gets every attack image wrong");

  std::vector<AttackConfig> configs;
  std::vector<std::pair<std::string, std::uint64_t>> seeds;
  for (const auto& a : cfg.attacks) {
    configs.push_back(seeded_attack(ctx, a));
    seeds.push_back({"attack/" + a.name, configs.back().seed});
  }
  std::vector<std::string> outputs;
  AttackSuite suite;
  for (const auto& config : configs) {
    log(ctx, "attack " + config.name + " on " + std::to_string(images.size()) + " images");
    AttackSuite one = generate_suite(model, images, labels, std::span(&config, 1));
    suite.runs.push_back(std::move(one.runs.front()));
    suite.summary.insert(suite.summary.end(), one.summary.begin(), one.summary.end());
    suite.warnings.insert(suite.warnings.end(), one.warnings.begin(), one.warnings.end());
  }

  for (const AttackRun& run : suite.runs) {
    const std::string& name = run.config.name;
    CsvWriter csv(artifact(ctx, attack_csv(name)).string(), {"index", "success", "l0_fraction", "l2", "linf"});
    Dataset adv{name, "attack:" + name, s.attack.shape, {}, {}};
    for (std::size_t k = 0; k < run.results.size(); ++k) {
      const AdversarialResult& r = run.results[k];
      csv.cell(index[run.source_index[k]]).cell(std::size_t{r.success ? 1u : 0u});
      csv.cell(r.norms.l0_fraction).cell(r.norms.l2).cell(r.norms.linf).end_row();
      if (r.success) {
        adv.images.push_back(r.adversarial);
        adv.labels.push_back(labels[run.source_index[k]]);
      }
    }
    csv.close();
    save_idx(adv, IdxPixels::Float64, artifact(ctx, attack_images(name)).string(),
             artifact(ctx, attack_labels(name)).string());
    outputs.insert(outputs.end(), {attack_csv(name), attack_images(name), attack_labels(name)});
  }

  CsvWriter summary(artifact(ctx, "attack_summary.csv").string(),
                    {"attack", "method", "attempted", "succeeded", "success_rate", "mean_l0_fraction",
                     "mean_l2", "mean_linf"});
  for (const auto& row : suite.summary) {
    summary.cell(row.name).cell(to_string(row.method)).cell(row.attempted).cell(row.succeeded);
    summary.cell(row.success_rate).cell(row.mean_norms.l0_fraction).cell(row.mean_norms.l2);
    summary.cell(row.mean_norms.linf).end_row();
  }
  summary.close();
  std::ofstream warn(artifact(ctx, "attack_warnings.txt"), std::ios::trunc);
  for (const auto& w : suite.warnings) warn << w << '\n';
  warn.close();
  outputs.insert(outputs.end(), {"attack_summary.csv", "attack_warnings.txt"});
  write_manifest(ctx, "attack", seeds, {"classifier.ckpt"}, outputs);
  return {outputs, std::to_string(suite.summary.size()) + "/" + std::to_string(configs.size()) +
                       " attacks produced adversarial examples from " + std::to_string(images.size()) +
                       " images"};
}

CommandResult cmd_fit_detector(const CommandContext& ctx) {
  const auto& cfg = ctx.config;
  AutoencoderModel ae = load_autoencoder(require_artifact(ctx, "autoencoder.ckpt", "train-autoencoder").string());
  ClassifierModel clf = load_classifier(require_artifact(ctx, "classifier.ckpt", "train-classifier").string());
  const Splits s = load_splits(cfg);
  DetectorParams params = cfg.detector;
  params.forest.seed = derive_seed(cfg.seed, "detector/forest");
  log(ctx, "fitting detector on " + std::to_string(s.fit.size()) + " benign images");
  const DetectorModel det = DetectorModel::fit(std::move(ae), std::move(clf), s.fit.images, params);
  det.save(artifact(ctx, "detector.ckpt").string());

  std::size_t flagged = 0;
  for (const auto& img : s.fit.images) flagged += det.detect(img).adversarial ? 1 : 0;
  const double train_fpr = static_cast<double>(flagged) / static_cast<double>(s.fit.size());
  CsvWriter rep(artifact(ctx, "detector_report.csv").string(), {"metric", "value"});
  rep.cell("fit_images").cell(s.fit.size()).end_row();
  rep.cell("pd_mode").cell(to_string(det.pd_mode())).end_row();
  rep.cell("threshold").cell(det.score_model().threshold()).end_row();
  rep.cell("contamination").cell(det.score_model().contamination()).end_row();
  rep.cell("training_fpr").cell(train_fpr).end_row();
  rep.close();

  std::vector<std::string> outputs = {"detector.ckpt", "detector_report.csv"};
  write_manifest(ctx, "fit-detector", {{"detector/forest", params.forest.seed}},
                 {"autoencoder.ckpt", "classifier.ckpt"}, outputs);
  return {outputs, "detector threshold " + format_real(det.score_model().threshold()) + ", training FPR " +
                       format_real(train_fpr)};
}

CommandResult cmd_detect(const CommandContext& ctx, const std::optional<std::string>& input) {
  const DetectorModel det = load_detector(ctx);
  Dataset data;
  if (input) {
    data = load_idx(*input);
  } else {
    data = load_splits(ctx.config).benign;
  }
  std::size_t flagged = 0;
  CsvWriter csv(artifact(ctx, "detections.csv").string(), {"index", "verdict", "mse", "pd", "score"});
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Detection d = det.detect(data.images[i]);
    flagged += d.adversarial ? 1 : 0;
    csv.cell(i).cell(d.adversarial ? "adversarial" : "benign").cell(d.feature.mse).cell(d.feature.pd);
    csv.cell(d.score).end_row();
  }
  csv.close();
  std::vector<std::string> outputs = {"detections.csv"};
  write_manifest(ctx, "detect", {}, {"detector.ckpt"}, outputs);
  return {outputs, std::to_string(flagged) + "/" + std::to_string(data.size()) + " images flagged adversarial"};
}

CommandResult cmd_evaluate(const CommandContext& ctx) {
  const DetectorModel det = load_detector(ctx);
  const auto sets = load_adversarial_sets(ctx);
  const Splits s = load_splits(ctx.config);
  std::vector<NamedImageSet> named;
  std::vector<std::string> inputs = {"detector.ckpt"};
  for (const auto& set : sets) {
    named.push_back({set.name, set.data.images});
    inputs.push_back(attack_images(set.name));
  }
  log(ctx, "evaluating on " + std::to_string(s.benign.size()) + " benign images and " +
               std::to_string(sets.size()) + " adversarial sets");
  const EvalReport report = evaluate(det, s.benign.images, named);
  CsvWriter csv(artifact(ctx, "metrics.csv").string(),
                {"set", "tp", "fp", "tn", "fn", "recall", "precision", "f1", "tpr", "fpr"});
  auto row = [&](const std::string& name, const DetectionMetrics& m) {
    csv.cell(name).cell(m.counts.tp).cell(m.counts.fp).cell(m.counts.tn).cell(m.counts.fn);
    csv.cell(m.recall).cell(m.precision).cell(m.f1).cell(m.tpr).cell(m.fpr).end_row();
  };
  for (const auto& r : report.per_attack) row(r.attack, r.metrics);
  row("overall", report.overall);
  csv.close();
  std::vector<std::string> outputs = {"metrics.csv"};
  write_manifest(ctx, "evaluate", {}, inputs, outputs);
  return {outputs, "overall recall " + format_real(report.overall.recall) + ", precision " +
                       format_real(report.overall.precision) + ", F1 " + format_real(report.overall.f1) +
                       ", FPR " + format_real(report.overall.fpr)};
}

CommandResult cmd_scatter(const CommandContext& ctx) {
  const DetectorModel det = load_detector(ctx);
  const auto sets = load_adversarial_sets(ctx);
  const Splits s = load_splits(ctx.config);
  fs::create_directories(artifact(ctx, "scatter"));
  std::vector<std::string> outputs, inputs = {"detector.ckpt"};
  for (const auto& set : sets) {
    const std::string rel = "scatter/" + set.name + ".csv";
    export_scatter(det, s.benign.images, set.data.images, artifact(ctx, rel).string());
    outputs.push_back(rel);
    inputs.push_back(attack_images(set.name));
  }
  write_manifest(ctx, "scatter", {}, inputs, outputs);
  return {outputs, "wrote " + std::to_string(outputs.size()) + " scatter files"};
}

CommandResult cmd_timing(const CommandContext& ctx) {
  const DetectorModel det = load_detector(ctx);
  const Splits s = load_splits(ctx.config);
  const TimingReport t = timing_report(det, s.benign.images);
  const auto on_disk = fs::file_size(artifact(ctx, "detector.ckpt"));
  CsvWriter csv(artifact(ctx, "timing.csv").string(), {"metric", "value"});
  csv.cell("images").cell(t.images).end_row();
  csv.cell("feature_seconds_per_image").cell(t.feature_seconds).end_row();
  csv.cell("scoring_seconds_per_image").cell(t.scoring_seconds).end_row();
  csv.cell("total_seconds_per_image").cell(t.total_seconds).end_row();
  csv.cell("scoring_fraction").cell(t.total_seconds > 0 ? t.scoring_seconds / t.total_seconds : 0.0).end_row();
  csv.cell("autoencoder_bytes").cell(t.autoencoder_bytes).end_row();
  csv.cell("classifier_bytes").cell(t.classifier_bytes).end_row();
  csv.cell("forest_bytes").cell(t.forest_bytes).end_row();
  csv.cell("checkpoint_bytes").cell(t.checkpoint_bytes).end_row();
  csv.cell("checkpoint_bytes_on_disk").cell(static_cast<std::size_t>(on_disk)).end_row();
  csv.cell("autoencoder_parameters").cell(t.autoencoder_parameters).end_row();
  csv.cell("forest_trees").cell(t.forest_trees).end_row();
  csv.cell("max_tree_nodes").cell(t.max_tree_nodes).end_row();
  csv.close();
  std::vector<std::string> outputs = {"timing.csv"};
  write_manifest(ctx, "timing", {}, {"detector.ckpt"}, outputs);
  char line[160];
  std::snprintf(line, sizeof line, "detect %.3g s/image (features %.3g s, forest %.3g s), checkpoint %zu bytes",
                t.total_seconds, t.feature_seconds, t.scoring_seconds, t.checkpoint_bytes);
  return {outputs, line};
}

CommandResult run_command(const std::string& name, const CommandContext& ctx,
                          const std::optional<std::string>& input) {
  if (name == "train-classifier") return cmd_train_classifier(ctx);
  if (name == "train-autoencoder") return cmd_train_autoencoder(ctx);
  if (name == "attack") return cmd_attack(ctx);
  if (name == "fit-detector") return cmd_fit_detector(ctx);
  if (name == "detect") return cmd_detect(ctx, input);
  if (name == "evaluate") return cmd_evaluate(ctx);
  if (name == "scatter") return cmd_scatter(ctx);
  if (name == "timing") return cmd_timing(ctx);
  throw std::invalid_argument("unknown command '" + name + "'");
}

std::vector<CommandResult> run_pipeline(const CommandContext& ctx) {
  std::vector<CommandResult> results;
  for (const auto& name : kCommandNames) results.push_back(run_command(name, ctx));
  return results;
}

}  // namespace aeae
