#pragma once

// Training and evaluation loops, metrics, the alpha sweep and multi-seed
// runs, plus their text/CSV reports.

#include "accor/dataio.hpp"
#include "accor/loss.hpp"
#include "accor/model.hpp"
#include "accor/optim.hpp"

#include <functional>
#include <iomanip>
#include <numbers>

namespace accor {

enum class LrSchedule { constant, cosine };

struct TrainConfig {
  std::size_t epochs = 60;
  std::size_t batch_size = 32;
  OptimizerConfig optimizer;
  // cosine: lr * (1 + cos(pi * epoch / epochs)) / 2, per epoch.
  LrSchedule schedule = LrSchedule::cosine;
  LossConfig loss;
  std::uint64_t seed = 0;
  bool shuffle = true;
  // Abort once the batch loss exceeds this (or is not finite).
  double divergence_limit = 1e6;

  void validate() const {
    if (batch_size < 2) throw std::invalid_argument("batch_size must be >= 2");
    if (!(optimizer.learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be >= 0");
    loss.validate();
  }
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Metrics {
  double overall_accuracy = 0;
  std::vector<double> per_class_accuracy;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<double> loss_history;
};

/// Index of the largest real part; ties go to the lowest index.
inline std::size_t argmax_lowest(std::span<const Complex> row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < row.size(); ++c)
    if (row[c].real() > row[best].real()) best = c;
  return best;
}

inline Metrics metrics_from_predictions(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                                        std::size_t n_classes) {
  if (truth.size() != predicted.size() || truth.empty()) throw std::invalid_argument("metrics need matching, non-empty sets");
  Metrics m;
  m.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++m.confusion.at(truth[i]).at(predicted[i]);
    correct += truth[i] == predicted[i];
  }
  m.overall_accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  m.per_class_accuracy.assign(n_classes, 0.0);
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::size_t row = 0;
    for (auto v : m.confusion[c]) row += v;
    if (row) m.per_class_accuracy[c] = static_cast<double>(m.confusion[c][c]) / static_cast<double>(row);
  }
  return m;
}

/// Mini-batch order for one epoch. A trailing batch of one frame is merged
/// into its predecessor (batch norm and the contrastive term need two).
inline double scheduled_learning_rate(const TrainConfig& config, std::size_t epoch) {
  const double lr = config.optimizer.learning_rate;
  if (config.schedule == LrSchedule::constant || config.epochs == 0) return lr;
  return 0.5 * lr * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(config.epochs)));
}

inline std::vector<std::vector<std::size_t>> epoch_batches(std::span<const std::size_t> ids, const TrainConfig& config,
                                                           std::size_t epoch) {
  std::vector<std::size_t> order(ids.begin(), ids.end());
  if (config.shuffle) {
    Rng rng(derive_seed(config.seed, "shuffle", epoch));
    shuffle(order, rng);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::size_t end = std::min(order.size(), start + config.batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

/// Mini-batch training on hybrid_loss. Returns the per-epoch mean loss.
inline std::vector<double> train(AccorNetwork& net, const Dataset& ds, std::span<const std::size_t> train_ids,
                                 const TrainConfig& config, const EpochCallback& on_epoch = {}) {
  config.validate();
  if (train_ids.size() < config.batch_size) {
    throw std::invalid_argument("training set (" + std::to_string(train_ids.size()) + " frames) is smaller than batch_size " +
                                std::to_string(config.batch_size));
  }
  if (net.config().n_classes != ds.header.n_classes) {
    throw std::invalid_argument("network predicts " + std::to_string(net.config().n_classes) + " classes, dataset has " +
                                std::to_string(ds.header.n_classes));
  }
  std::vector<Tensor> params;
  for (const auto& [name, t] : net.parameters()) params.push_back(t);
  Optimizer optimizer(params, config.optimizer);
  net.set_training(true);

  std::vector<double> history;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double total = 0;
    std::size_t seen = 0;
    optimizer.set_learning_rate(scheduled_learning_rate(config, epoch));
    const auto batches = epoch_batches(train_ids, config, epoch);
    for (std::size_t step = 0; step < batches.size(); ++step) {
      const auto& ids = batches[step];
      std::vector<std::size_t> labels;
      for (auto i : ids) labels.push_back(ds.frames[i].label);
      optimizer.zero_grad();
      const auto out = net.forward(batch_profiles(ds, ids));
      const Tensor loss = hybrid_loss(out.logits, out.embeddings, labels, config.loss);
      const double value = loss.item().real();
      if (!std::isfinite(value) || value > config.divergence_limit) {
        std::ostringstream os;
        os << "training diverged at epoch " << epoch << ", step " << step << ": loss " << value
           << " (alpha " << config.loss.alpha << ", lr " << optimizer.config().learning_rate << ", seed " << config.seed
           << ")";
        throw DivergenceError(os.str());
      }
      backward(loss);
      optimizer.step();
      total += value * static_cast<double>(ids.size());
      seen += ids.size();
    }
    history.push_back(total / static_cast<double>(seen));
    if (on_epoch) on_epoch(epoch, history.back());
  }
  return history;
}

/// Inference-mode predictions for the selected frames.
inline std::vector<std::size_t> predict(AccorNetwork& net, const Dataset& ds, std::span<const std::size_t> ids,
                                        std::size_t batch_size = 64) {
  const bool was_training = net.training();
  net.set_training(false);
  NoGradGuard no_grad;
  std::vector<std::size_t> out;
  for (std::size_t start = 0; start < ids.size(); start += batch_size) {
    const auto chunk = ids.subspan(start, std::min(batch_size, ids.size() - start));
    const Tensor logits = net.forward(batch_profiles(ds, chunk)).logits;
    const std::size_t classes = logits.dim(1);
    for (std::size_t b = 0; b < chunk.size(); ++b) out.push_back(argmax_lowest(logits.data().subspan(b * classes, classes)));
  }
  net.set_training(was_training);
  return out;
}

inline Metrics evaluate(AccorNetwork& net, const Dataset& ds, std::span<const std::size_t> ids) {
  if (ids.empty()) throw std::invalid_argument("evaluate: empty test set");
  const auto predicted = predict(net, ds, ids);
  std::vector<std::size_t> truth;
  for (auto i : ids) truth.push_back(ds.frames.at(i).label);
  return metrics_from_predictions(truth, predicted, ds.header.n_classes);
}

// ---------------------------------------------------------------------------
// Experiments

struct Experiment {
  ModelConfig model;
  TrainConfig train;
  SplitSpec split;
};

struct RunRecord {
  std::size_t run_id = 0;
  double alpha = 0;
  std::uint64_t seed = 0;
  double band_ghz = 0;
  Metrics metrics;
};

/// One train + evaluate. The run seed drives the split, initialisation and
/// batch order.
inline RunRecord run_experiment(const Dataset& ds, Experiment e, std::size_t run_id = 0,
                                const EpochCallback& on_epoch = {}, AccorNetwork* trained = nullptr) {
  e.model.n_classes = ds.header.n_classes;
  e.model.input_channels = ds.header.channels();
  e.model.range_bins = ds.header.n_samples_per_channel;
  e.split.seed = derive_seed(e.train.seed, "split");
  const Split split = split_train_test(ds, e.split);
  AccorNetwork net(e.model, derive_seed(e.train.seed, "model"));
  RunRecord record{run_id, e.train.loss.alpha, e.train.seed, ds.header.band_ghz, {}};
  const auto history = train(net, ds, split.train, e.train, on_epoch);
  record.metrics = evaluate(net, ds, split.test);
  record.metrics.loss_history = history;
  if (trained) *trained = std::move(net);
  return record;
}

/// One run per alpha, otherwise identical (same seed, so the same split).
inline std::vector<RunRecord> ablate_alpha(const Dataset& ds, const Experiment& base, std::span<const double> alphas,
                                           const EpochCallback& on_epoch = {}) {
  if (alphas.empty()) throw std::invalid_argument("ablate_alpha: no alpha values");
  std::vector<RunRecord> rows;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    Experiment e = base;
    e.train.loss.alpha = alphas[i];
    rows.push_back(run_experiment(ds, e, i, on_epoch));
  }
  return rows;
}

struct MeanStd {
  double mean = 0;
  double stddev = 0;  // sample (n - 1) standard deviation; 0 for n = 1
};

inline MeanStd mean_stddev(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mean_stddev: no values");
  MeanStd out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

struct MultiSeedResult {
  std::vector<RunRecord> runs;
  MeanStd accuracy;
};

/// Runs seeds seed, seed + 1, ..., seed + n_runs - 1.
inline MultiSeedResult multi_seed_run(const Dataset& ds, const Experiment& base, std::size_t n_runs,
                                      const EpochCallback& on_epoch = {}) {
  if (n_runs == 0) throw std::invalid_argument("multi_seed_run: n_runs must be >= 1");
  MultiSeedResult result;
  std::vector<double> acc;
  for (std::size_t i = 0; i < n_runs; ++i) {
    Experiment e = base;
    e.train.seed = base.train.seed + i;
    result.runs.push_back(run_experiment(ds, e, i, on_epoch));
    acc.push_back(result.runs.back().metrics.overall_accuracy);
  }
  result.accuracy = mean_stddev(acc);
  return result;
}

// ---------------------------------------------------------------------------
// Reports

inline std::string percent(double fraction) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << 100.0 * fraction << "%";
  return os.str();
}

/// Rows of "alpha | accuracy" in the order given, alpha = 0 labelled as
/// cross-entropy only.
inline std::string alpha_table(std::span<const RunRecord> rows) {
  std::ostringstream os;
  os << std::left << std::setw(22) << "Loss weight" << "Overall accuracy\n";
  os << std::string(38, '-') << '\n';
  for (const auto& r : rows) {
    std::ostringstream label;
    label << "alpha = " << format_double(r.alpha);
    if (r.alpha == 0.0) label << " (only CE)";
    os << std::left << std::setw(22) << label.str() << percent(r.metrics.overall_accuracy) << '\n';
  }
  return os.str();
}

/// Model / band / accuracy rows, one per run plus a mean +- std line.
inline std::string accuracy_table(std::span<const RunRecord> runs, const std::string& model_name = "ACCOR") {
  std::ostringstream os;
  os << std::left << std::setw(10) << "Model" << std::setw(8) << "Run" << std::setw(8) << "Seed" << std::setw(8) << "Band"
     << "Overall accuracy\n";
  os << std::string(50, '-') << '\n';
  std::vector<double> acc;
  for (const auto& r : runs) {
    os << std::left << std::setw(10) << model_name << std::setw(8) << r.run_id << std::setw(8) << r.seed << std::setw(8)
       << (format_double(r.band_ghz) + " GHz").substr(0, 7) << percent(r.metrics.overall_accuracy) << '\n';
    acc.push_back(r.metrics.overall_accuracy);
  }
  if (!acc.empty()) {
    const auto s = mean_stddev(acc);
    os << std::string(50, '-') << '\n'
       << std::left << std::setw(34) << "mean +- std" << percent(s.mean) << " +- " << percent(s.stddev) << '\n';
  }
  return os.str();
}

inline std::string runs_csv(std::span<const RunRecord> runs) {
  std::ostringstream os;
  const std::size_t classes = runs.empty() ? 0 : runs.front().metrics.per_class_accuracy.size();
  os << "run_id,alpha,seed,band,overall_accuracy";
  for (std::size_t c = 0; c < classes; ++c) os << ",per_class_" << c;
  os << '\n';
  for (const auto& r : runs) {
    os << r.run_id << ',' << format_double(r.alpha) << ',' << r.seed << ',' << format_double(r.band_ghz) << ','
       << format_double(r.metrics.overall_accuracy);
    for (double a : r.metrics.per_class_accuracy) os << ',' << format_double(a);
    os << '\n';
  }
  return os.str();
}

inline std::string confusion_table(const Metrics& m, const std::vector<std::string>& names = {}) {
  std::ostringstream os;
  const std::size_t c = m.confusion.size();
  os << "true \\ predicted";
  for (std::size_t j = 0; j < c; ++j) os << std::setw(6) << j;
  os << "   accuracy\n";
  for (std::size_t i = 0; i < c; ++i) {
    std::string label = std::to_string(i);
    if (i < names.size()) label += " " + names[i];
    os << std::left << std::setw(16) << label.substr(0, 16) << std::right;
    for (std::size_t j = 0; j < c; ++j) os << std::setw(6) << m.confusion[i][j];
    os << "   " << percent(m.per_class_accuracy[i]) << '\n';
  }
  os << "overall " << percent(m.overall_accuracy) << '\n';
  return os.str();
}

}  // namespace accor
