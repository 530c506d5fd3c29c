#pragma once

// The `accor` command line: gen-synth, import, train, eval, ablate,
// selfcheck and rerun.
//
// Every command resolves one flat configuration (defaults, then --config
// file, then flags), runs from it, and writes it back as manifest.ini next
// to its outputs together with the input/output paths. `rerun` replays a
// manifest without consulting the original config file.

#include "accor/dataio.hpp"
#include "accor/selfcheck.hpp"
#include "accor/signal.hpp"
#include "accor/trainer.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace accor::cli {

inline constexpr const char* kToolVersion = "1.0.0";

struct Streams {
  std::ostream& out = std::cout;
  std::ostream& err = std::cerr;
};

// ---------------------------------------------------------------------------
// Configuration keys

inline const std::set<std::string>& synth_keys() {
  static const std::set<std::string> keys{"synth.per_class",     "synth.seed",          "synth.band",
                                          "synth.snr_db",        "synth.attenuation",   "synth.position_sigma",
                                          "synth.reflectivity_log_sigma", "synth.n_tx", "synth.n_rx",
                                          "synth.n_samples",     "synth.bandwidth"};
  return keys;
}

inline const std::set<std::string>& experiment_keys() {
  static const std::set<std::string> keys{
      "train.epochs",   "train.batch_size", "train.learning_rate", "train.optimizer",    "train.beta1",
      "train.beta2",    "train.epsilon",    "train.momentum",      "train.seed",         "train.shuffle",      "train.schedule",
      "train.runs",     "loss.alpha",       "loss.tau",            "loss.class_weights", "split.train_fraction",
      "split.stratified", "ablate.alphas",  "eval.subset",         "model.conv_channels", "model.kernel_size",
      "model.input_channels", "model.range_bins", "model.embed_dim", "model.attention_heads", "model.n_classes",
      "model.token_mode", "model.conv_mode", "model.grid_rows",    "model.grid_cols",    "model.pool_window",
      "model.bn_epsilon", "model.bn_momentum"};
  return keys;
}

inline KeyValueConfig synth_defaults() {
  KeyValueConfig c;
  c.set("synth.per_class", "200");
  c.set("synth.seed", "0");
  c.set("synth.band", "64");
  c.set("synth.snr_db", "20");
  c.set("synth.attenuation", "0.7");
  c.set("synth.position_sigma", "0.01");
  c.set("synth.reflectivity_log_sigma", "0.1");
  c.set("synth.n_tx", "20");
  c.set("synth.n_rx", "20");
  c.set("synth.n_samples", "100");
  c.set("synth.bandwidth", "4e9");
  return c;
}

inline KeyValueConfig experiment_defaults() {
  KeyValueConfig c;
  ModelConfig{}.store(c);
  const TrainConfig t;
  c.set("train.epochs", std::to_string(t.epochs));
  c.set("train.batch_size", std::to_string(t.batch_size));
  c.set("train.learning_rate", format_double(t.optimizer.learning_rate));
  c.set("train.optimizer", "adam");
  c.set("train.beta1", format_double(t.optimizer.beta1));
  c.set("train.beta2", format_double(t.optimizer.beta2));
  c.set("train.epsilon", format_double(t.optimizer.epsilon));
  c.set("train.momentum", format_double(t.optimizer.momentum));
  c.set("train.seed", "0");
  c.set("train.shuffle", "true");
  c.set("train.schedule", t.schedule == LrSchedule::cosine ? "cosine" : "constant");
  c.set("train.runs", "1");
  c.set("loss.alpha", format_double(t.loss.alpha));
  c.set("loss.tau", format_double(t.loss.tau));
  c.set("loss.class_weights", "uniform");
  c.set("split.train_fraction", "0.8");
  c.set("split.stratified", "true");
  c.set("ablate.alphas", "0.6,0.5,0.4,0.3,0.2,0.1,0");
  c.set("eval.subset", "test");
  return c;
}

/// defaults <- file <- flag overrides, with unknown keys rejected by name.
inline KeyValueConfig resolve(KeyValueConfig base, const std::string& config_path,
                              const std::map<std::string, std::string>& overrides, const std::set<std::string>& allowed,
                              const std::set<std::string>& prefixes = {}) {
  if (!config_path.empty()) {
    const auto file = KeyValueConfig::load(config_path);
    file.check_keys(allowed, prefixes);
    for (const auto& [k, v] : file.entries()) base.set(k, KeyValueConfig::trim(v));
  }
  for (const auto& [k, v] : overrides) base.set(k, v);
  base.check_keys(allowed, prefixes);
  return base;
}

inline std::vector<double> parse_doubles(const std::string& key, const std::string& text) {
  std::vector<double> out;
  for (const auto& item : KeyValueConfig::split(text, ',')) out.push_back(KeyValueConfig::to_double(key, item));
  if (out.empty()) throw ConfigError("key '" + key + "': empty list");
  return out;
}

inline Band parse_band(const std::string& key, const std::string& text) {
  const double ghz = KeyValueConfig::to_double(key, text);
  if (ghz != 64.0 && ghz != 67.0) throw ConfigError("key '" + key + "': band must be 64 or 67");
  return band_from_ghz(ghz);
}

// ---------------------------------------------------------------------------
// Scenes

inline std::string format_scatterers(const std::vector<Scatterer>& pts) {
  std::string s;
  for (const auto& p : pts) {
    if (!s.empty()) s += "; ";
    s += format_double(p.position.x) + " " + format_double(p.position.y) + " " + format_double(p.position.z) + " " +
         format_double(p.reflectivity.real()) + " " + format_double(p.reflectivity.imag());
  }
  return s;
}

inline std::vector<Scatterer> parse_scatterers(const std::string& key, const std::string& text) {
  std::vector<Scatterer> out;
  for (const auto& item : KeyValueConfig::split(text, ';')) {
    std::istringstream is(item);
    std::vector<std::string> fields;
    for (std::string f; is >> f;) fields.push_back(f);
    if (fields.size() != 4 && fields.size() != 5) {
      throw ConfigError("key '" + key + "': scatterer '" + item + "' needs x y z re [im]");
    }
    Scatterer s;
    s.position = {KeyValueConfig::to_double(key, fields[0]), KeyValueConfig::to_double(key, fields[1]),
                  KeyValueConfig::to_double(key, fields[2])};
    s.reflectivity = {KeyValueConfig::to_double(key, fields[3]),
                      fields.size() == 5 ? KeyValueConfig::to_double(key, fields[4]) : 0.0};
    out.push_back(s);
  }
  return out;
}

/// Writes the default objects as explicit template.* entries.
inline void materialize_default_templates(KeyValueConfig& cfg) {
  for (const auto& t : default_object_templates(std::nullopt, 1.0)) {
    cfg.set("template." + t.name + ".label", std::to_string(t.class_label));
    cfg.set("template." + t.name + ".scatterers", format_scatterers(t.scatterers));
  }
}

inline std::vector<SceneConfig> templates_from(const KeyValueConfig& cfg) {
  std::map<std::string, SceneConfig> by_name;
  const double attenuation = cfg.get_double("synth.attenuation", 0.7);
  const std::string snr = KeyValueConfig::trim(cfg.require("synth.snr_db"));
  const std::optional<double> snr_db =
      snr == "none" ? std::nullopt : std::optional<double>(KeyValueConfig::to_double("synth.snr_db", snr));
  for (const auto& [key, value] : cfg.entries()) {
    if (key.rfind("template.", 0) != 0) continue;
    const auto rest = key.substr(9);
    const auto dot = rest.rfind('.');
    if (dot == std::string::npos) throw ConfigError("unknown config key '" + key + "'");
    const auto name = rest.substr(0, dot), field = rest.substr(dot + 1);
    auto& scene = by_name[name];
    scene.name = name;
    scene.box_attenuation = attenuation;
    scene.noise_snr_db = snr_db;
    if (field == "label") {
      scene.class_label = cfg.get_int<std::size_t>(key, 0);
    } else if (field == "scatterers") {
      scene.scatterers = parse_scatterers(key, value);
    } else if (field == "attenuation") {
      scene.box_attenuation = KeyValueConfig::to_double(key, value);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  for (auto& [name, scene] : by_name) {
    if (!cfg.has("template." + name + ".label")) throw ConfigError("missing required key 'template." + name + ".label'");
    if (cfg.has("template." + name + ".attenuation")) {
      scene.box_attenuation = cfg.get_double("template." + name + ".attenuation", attenuation);
    }
  }
  std::vector<SceneConfig> out;
  for (auto& [name, scene] : by_name) out.push_back(std::move(scene));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.class_label < b.class_label; });
  return out;
}

// ---------------------------------------------------------------------------
// Experiment configuration

inline Experiment experiment_from(const KeyValueConfig& cfg) {
  Experiment e;
  e.model = ModelConfig::load(cfg);
  e.train.epochs = cfg.get_int<std::size_t>("train.epochs", e.train.epochs);
  e.train.batch_size = cfg.get_int<std::size_t>("train.batch_size", e.train.batch_size);
  e.train.optimizer.learning_rate = cfg.get_double("train.learning_rate", e.train.optimizer.learning_rate);
  const auto opt = KeyValueConfig::trim(cfg.get_string("train.optimizer", "adam"));
  if (opt == "adam") e.train.optimizer.kind = OptimizerKind::adam;
  else if (opt == "sgd") e.train.optimizer.kind = OptimizerKind::sgd;
  else throw ConfigError("key 'train.optimizer': unknown optimizer '" + opt + "' (adam or sgd)");
  e.train.optimizer.beta1 = cfg.get_double("train.beta1", e.train.optimizer.beta1);
  e.train.optimizer.beta2 = cfg.get_double("train.beta2", e.train.optimizer.beta2);
  e.train.optimizer.epsilon = cfg.get_double("train.epsilon", e.train.optimizer.epsilon);
  e.train.optimizer.momentum = cfg.get_double("train.momentum", e.train.optimizer.momentum);
  e.train.seed = cfg.get_int<std::uint64_t>("train.seed", 0);
  e.train.shuffle = cfg.get_bool("train.shuffle", true);
  const auto schedule = KeyValueConfig::trim(cfg.get_string("train.schedule", "cosine"));
  if (schedule == "cosine") e.train.schedule = LrSchedule::cosine;
  else if (schedule == "constant") e.train.schedule = LrSchedule::constant;
  else throw ConfigError("key 'train.schedule': unknown schedule '" + schedule + "' (cosine or constant)");
  e.train.loss.alpha = cfg.get_double("loss.alpha", e.train.loss.alpha);
  e.train.loss.tau = cfg.get_double("loss.tau", e.train.loss.tau);
  e.split.train_fraction = cfg.get_double("split.train_fraction", e.split.train_fraction);
  e.split.stratified = cfg.get_bool("split.stratified", true);
  try {
    e.train.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what());
  }
  return e;
}

/// "uniform", "inverse_frequency" or an explicit comma list.
inline std::vector<double> class_weights_from(const KeyValueConfig& cfg, const Dataset& ds) {
  const auto v = KeyValueConfig::trim(cfg.get_string("loss.class_weights", "uniform"));
  if (v == "uniform") return {};
  if (v == "inverse_frequency") return inverse_frequency_weights(ds.labels(), ds.header.n_classes);
  auto w = parse_doubles("loss.class_weights", v);
  if (w.size() != ds.header.n_classes) throw ConfigError("key 'loss.class_weights': need one weight per class");
  return w;
}

/// Fills the dataset-dependent model keys so the manifest shows what ran.
inline void bind_dataset(KeyValueConfig& cfg, const Dataset& ds) {
  cfg.set("model.n_classes", std::to_string(ds.header.n_classes));
  cfg.set("model.input_channels", std::to_string(ds.header.channels()));
  cfg.set("model.range_bins", std::to_string(ds.header.n_samples_per_channel));
}

inline void check_band(const KeyValueConfig& cfg, const Dataset& ds) {
  if (!cfg.has("run.band")) return;
  const Band want = parse_band("band", cfg.require("run.band"));
  if (band_from_ghz(ds.header.band_ghz) != want) {
    throw ConfigError("--band " + cfg.require("run.band") + " does not match the dataset band (" +
                      format_double(ds.header.band_ghz) + " GHz)");
  }
}

// ---------------------------------------------------------------------------
// Output helpers

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os << text;
  if (!os.flush()) throw std::runtime_error("write to '" + path.string() + "' failed");
}

inline std::filesystem::path prepare_dir(const std::string& out) {
  if (out.empty()) throw ConfigError("--out is required");
  std::filesystem::create_directories(out);
  return out;
}

inline EpochCallback progress(std::ostream& err, const std::string& tag) {
  return [&err, tag](std::size_t epoch, double loss) {
    err << tag << " epoch " << epoch + 1 << " loss " << format_double(loss) << '\n';
  };
}

inline std::string loss_history_csv(std::span<const RunRecord> runs) {
  std::ostringstream os;
  os << "run_id,epoch,loss\n";
  for (const auto& r : runs)
    for (std::size_t e = 0; e < r.metrics.loss_history.size(); ++e)
      os << r.run_id << ',' << e + 1 << ',' << format_double(r.metrics.loss_history[e]) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Commands. Each takes the resolved configuration, whose run.* and path.*
// keys carry the command name and file locations.

inline int exec_gen_synth(KeyValueConfig cfg, Streams io) {
  const auto out = cfg.require("path.out");
  const Band band = parse_band("synth.band", cfg.require("synth.band"));
  ChirpParams chirp = ChirpParams::for_band(band);
  chirp.n_samples = cfg.get_int<std::size_t>("synth.n_samples", 100);
  chirp.bandwidth = cfg.get_double("synth.bandwidth", 4e9);
  const auto array =
      AntennaArray::for_band(band, cfg.get_int<std::size_t>("synth.n_tx", 20), cfg.get_int<std::size_t>("synth.n_rx", 20));
  JitterSpec jitter;
  jitter.position_sigma = cfg.get_double("synth.position_sigma", jitter.position_sigma);
  jitter.reflectivity_log_sigma = cfg.get_double("synth.reflectivity_log_sigma", jitter.reflectivity_log_sigma);
  bool has_templates = false;
  for (const auto& [k, v] : cfg.entries()) has_templates = has_templates || k.rfind("template.", 0) == 0;
  if (!has_templates) materialize_default_templates(cfg);
  const auto templates = templates_from(cfg);
  const Dataset ds = generate_dataset(templates, cfg.get_int<std::size_t>("synth.per_class", 200), jitter, chirp, array,
                                      cfg.get_int<std::uint64_t>("synth.seed", 0));
  write_dataset(ds, out);
  write_text(out + ".manifest.ini", cfg.to_string());
  const auto counts = ds.class_counts();
  io.out << "wrote " << ds.size() << " frames to " << out << '\n';
  for (std::size_t c = 0; c < counts.size(); ++c) io.out << "  " << c << " " << ds.header.class_names[c] << ": " << counts[c] << '\n';
  return 0;
}

inline int exec_import(KeyValueConfig cfg, Streams io) {
  const auto out = cfg.require("path.out");
  KeyValueConfig layout_cfg;
  for (const auto& [k, v] : cfg.entries())
    if (k.rfind("layout.", 0) == 0) layout_cfg.set(k.substr(7), v);
  const auto layout = ImportLayout::parse(layout_cfg);
  const std::size_t n_tx = cfg.get_int<std::size_t>("import.n_tx", 20), n_rx = cfg.get_int<std::size_t>("import.n_rx", 20);
  const Dataset ds = import_external(cfg.require("path.input"), layout, n_tx, n_rx);
  write_dataset(ds, out);
  write_text(out + ".manifest.ini", cfg.to_string());
  io.out << "imported " << ds.size() << " frames into " << out << '\n';
  const auto counts = ds.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) io.out << "  " << c << " " << ds.header.class_names[c] << ": " << counts[c] << '\n';
  return 0;
}

inline int exec_train(KeyValueConfig cfg, Streams io) {
  const auto dir = prepare_dir(cfg.require("path.out"));
  const Dataset ds = read_dataset(cfg.require("path.dataset"));
  check_band(cfg, ds);
  bind_dataset(cfg, ds);
  Experiment e = experiment_from(cfg);
  e.train.loss.class_weights = class_weights_from(cfg, ds);
  const std::size_t runs = cfg.get_int<std::size_t>("train.runs", 1);
  if (runs == 0) throw ConfigError("key 'train.runs': must be >= 1");
  write_text(dir / "manifest.ini", cfg.to_string());

  std::vector<RunRecord> records;
  for (std::size_t i = 0; i < runs; ++i) {
    Experiment run = e;
    run.train.seed = e.train.seed + i;
    AccorNetwork net(run.model, 0);
    records.push_back(run_experiment(ds, run, i, progress(io.err, "run " + std::to_string(i)), &net));
    save_checkpoint(net, dir / ("model_run" + std::to_string(i) + ".ckpt"));
  }
  std::ostringstream report;
  report << accuracy_table(records) << '\n' << confusion_table(records.front().metrics, ds.header.class_names);
  write_text(dir / "report.txt", report.str());
  write_text(dir / "metrics.csv", runs_csv(records));
  write_text(dir / "loss_history.csv", loss_history_csv(records));
  io.out << report.str();
  return 0;
}

inline int exec_eval(KeyValueConfig cfg, Streams io) {
  const auto dir = prepare_dir(cfg.require("path.out"));
  const Dataset ds = read_dataset(cfg.require("path.dataset"));
  check_band(cfg, ds);
  bind_dataset(cfg, ds);
  Experiment e = experiment_from(cfg);
  const auto checkpoint = cfg.get_string("path.checkpoint", "");
  std::optional<AccorNetwork> net;
  if (checkpoint.empty()) {
    io.err << "no --checkpoint given: evaluating a freshly initialised network\n";
    net.emplace(e.model, derive_seed(e.train.seed, "model"));
  } else {
    net.emplace(load_checkpoint(checkpoint));
    if (net->config().n_classes != ds.header.n_classes || net->config().input_channels != ds.header.channels() ||
        net->config().range_bins != ds.header.n_samples_per_channel) {
      throw ConfigError("checkpoint '" + checkpoint + "' does not match the dataset geometry");
    }
  }
  const auto subset = KeyValueConfig::trim(cfg.get_string("eval.subset", "test"));
  std::vector<std::size_t> ids;
  if (subset == "all") {
    ids.resize(ds.size());
    std::iota(ids.begin(), ids.end(), 0);
  } else if (subset == "test") {
    e.split.seed = derive_seed(e.train.seed, "split");
    ids = split_train_test(ds, e.split).test;
  } else {
    throw ConfigError("key 'eval.subset': expected test or all");
  }
  write_text(dir / "manifest.ini", cfg.to_string());
  RunRecord record{0, e.train.loss.alpha, e.train.seed, ds.header.band_ghz, evaluate(*net, ds, ids)};
  std::ostringstream report;
  report << accuracy_table(std::span(&record, 1)) << '\n' << confusion_table(record.metrics, ds.header.class_names);
  write_text(dir / "report.txt", report.str());
  write_text(dir / "metrics.csv", runs_csv(std::span(&record, 1)));
  io.out << report.str();
  return 0;
}

inline int exec_ablate(KeyValueConfig cfg, Streams io) {
  const auto dir = prepare_dir(cfg.require("path.out"));
  const Dataset ds = read_dataset(cfg.require("path.dataset"));
  check_band(cfg, ds);
  bind_dataset(cfg, ds);
  Experiment e = experiment_from(cfg);
  e.train.loss.class_weights = class_weights_from(cfg, ds);
  const auto alphas = parse_doubles("ablate.alphas", cfg.require("ablate.alphas"));
  for (double a : alphas)
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("key 'ablate.alphas': alpha " + format_double(a) + " outside [0, 1]");
  const std::size_t runs = cfg.get_int<std::size_t>("train.runs", 1);
  if (runs == 0) throw ConfigError("key 'train.runs': must be >= 1");
  write_text(dir / "manifest.ini", cfg.to_string());

  // Table rows carry the seed-mean accuracy per alpha; the CSV keeps every run.
  std::vector<RunRecord> all, rows;
  std::size_t run_id = 0;
  for (double a : alphas) {
    Experiment ea = e;
    ea.train.loss.alpha = a;
    std::vector<double> acc;
    for (std::size_t i = 0; i < runs; ++i) {
      ea.train.seed = e.train.seed + i;
      all.push_back(run_experiment(ds, ea, run_id++, progress(io.err, "alpha " + format_double(a) + " seed " +
                                                                             std::to_string(ea.train.seed))));
      acc.push_back(all.back().metrics.overall_accuracy);
    }
    RunRecord row = all.back();
    row.metrics.overall_accuracy = mean_stddev(acc).mean;
    rows.push_back(row);
  }
  const std::string table = alpha_table(rows);
  write_text(dir / "ablation.txt", table);
  write_text(dir / "metrics.csv", runs_csv(all));
  io.out << table;
  return 0;
}

inline int exec_selfcheck(const KeyValueConfig&, Streams io) {
  return report_selfcheck(run_selfcheck(), io.out) ? 0 : 1;
}

inline int execute(const KeyValueConfig& cfg, Streams io) {
  const auto command = cfg.require("run.command");
  if (command == "gen-synth") return exec_gen_synth(cfg, io);
  if (command == "import") return exec_import(cfg, io);
  if (command == "train") return exec_train(cfg, io);
  if (command == "eval") return exec_eval(cfg, io);
  if (command == "ablate") return exec_ablate(cfg, io);
  if (command == "selfcheck") return exec_selfcheck(cfg, io);
  throw ConfigError("manifest names unknown command '" + command + "'");
}

// ---------------------------------------------------------------------------
// Argument parsing

inline int run(int argc, const char* const* argv, Streams io = {}) {
  CLI::App app{"ACCOR: complex-valued attention network for occluded-object radar classification", "accor"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  std::string config_path, out, dataset, checkpoint, manifest, layout_path, input;
  std::map<std::string, std::string> overrides;
  auto bind = [&](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
    sub->add_option_function<std::string>(flag, [&overrides, key](const std::string& v) { overrides[key] = v; }, help);
  };

  auto* gen = app.add_subcommand("gen-synth", "Synthesise a labelled IQ dataset from scene templates");
  gen->add_option("--config", config_path, "Scene configuration file");
  gen->add_option("--out", out, "Output dataset file")->required();
  bind(gen, "--seed", "synth.seed", "Master seed");
  bind(gen, "--band", "synth.band", "Band in GHz (64 or 67)");
  bind(gen, "--per-class", "synth.per_class", "Frames per class");
  bind(gen, "--snr", "synth.snr_db", "SNR in dB, or 'none'");
  bind(gen, "--position-sigma", "synth.position_sigma", "Scatterer position jitter (m)");

  auto* imp = app.add_subcommand("import", "Convert external IQ recordings into the dataset format");
  imp->add_option("--layout", layout_path, "Layout descriptor file")->required();
  imp->add_option("--input", input, "Input file or directory")->required();
  imp->add_option("--out", out, "Output dataset file")->required();
  bind(imp, "--band", "layout.band", "Band in GHz (64 or 67)");

  auto* train_cmd = app.add_subcommand("train", "Train and evaluate on a stratified split");
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint (or a fresh network)");
  auto* ablate_cmd = app.add_subcommand("ablate", "Sweep the loss weight alpha");
  for (auto* sub : {train_cmd, eval_cmd, ablate_cmd}) {
    sub->add_option("--config", config_path, "Experiment configuration file");
    sub->add_option("--dataset", dataset, "Dataset file")->required();
    sub->add_option("--out", out, "Output directory")->required();
    bind(sub, "--seed", "train.seed", "Seed for split, initialisation and batch order");
    bind(sub, "--alpha", "loss.alpha", "Loss weight alpha in [0, 1]");
    bind(sub, "--tau", "loss.tau", "Contrastive temperature");
    bind(sub, "--band", "run.band", "Expected dataset band (64 or 67)");
    bind(sub, "--epochs", "train.epochs", "Training epochs");
    bind(sub, "--batch-size", "train.batch_size", "Mini-batch size");
    bind(sub, "--lr", "train.learning_rate", "Learning rate");
    bind(sub, "--runs", "train.runs", "Number of consecutive seeds");
  }
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file");
  bind(eval_cmd, "--subset", "eval.subset", "test (default) or all");
  bind(ablate_cmd, "--alphas", "ablate.alphas", "Comma-separated alpha values");

  auto* self = app.add_subcommand("selfcheck", "Gradient, DFT and loss-identity checks");
  auto* rerun = app.add_subcommand("rerun", "Repeat a run from its manifest");
  rerun->add_option("--manifest", manifest, "manifest.ini of an earlier run")->required();
  rerun->add_option("--out", out, "Redirect outputs (file for gen-synth/import, directory otherwise)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, io.out, io.err);
  }

  try {
    KeyValueConfig cfg;
    if (gen->parsed()) {
      cfg = resolve(synth_defaults(), config_path, overrides, synth_keys(), {"template."});
      cfg.set("run.command", "gen-synth");
      cfg.set("path.out", out);
    } else if (imp->parsed()) {
      cfg = KeyValueConfig::load(layout_path);
      KeyValueConfig prefixed;
      for (const auto& [k, v] : cfg.entries()) prefixed.set("layout." + k, KeyValueConfig::trim(v));
      for (const auto& [k, v] : overrides) prefixed.set(k, v);
      cfg = prefixed;
      cfg.set("run.command", "import");
      cfg.set("path.input", input);
      cfg.set("path.out", out);
    } else if (self->parsed()) {
      cfg.set("run.command", "selfcheck");
    } else if (rerun->parsed()) {
      cfg = KeyValueConfig::load(manifest);
      if (!out.empty()) cfg.set("path.out", out);
      if (cfg.get_string("run.tool_version", kToolVersion) != kToolVersion) {
        io.err << "warning: manifest written by accor " << cfg.require("run.tool_version") << '\n';
      }
    } else {
      CLI::App* sub = train_cmd->parsed() ? train_cmd : eval_cmd->parsed() ? eval_cmd : ablate_cmd;
      std::map<std::string, std::string> flags;
      for (const auto& [k, v] : overrides)
        if (k != "run.band") flags[k] = v;
      cfg = resolve(experiment_defaults(), config_path, flags, experiment_keys());
      if (overrides.count("run.band")) cfg.set("run.band", overrides.at("run.band"));
      cfg.set("run.command", sub->get_name());
      cfg.set("path.dataset", dataset);
      cfg.set("path.out", out);
      if (!checkpoint.empty()) cfg.set("path.checkpoint", checkpoint);
    }
    cfg.set("run.tool_version", kToolVersion);
    return execute(cfg, io);
  } catch (const std::exception& e) {
    io.err << "accor: error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace accor::cli
