#include "stegcl/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "stegcl/errors.hpp"
#include "stegcl/parallel.hpp"
#include "stegcl/rng.hpp"
#include "stegcl/serialization.hpp"

namespace stegcl {

namespace {

// Stream identifiers for mix_seed; each consumer of randomness gets its own.
constexpr std::uint64_t kCoverStream = 0xC0;
constexpr std::uint64_t kSchemeStream = 0xE0;
constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kShuffleStream = 0x5A0;
constexpr std::uint64_t kImportanceStream = 0x1A0;

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string checkpoint_name(std::size_t task) {
  char name[48];
  std::snprintf(name, sizeof name, "model_task_%03zu.ckpt", task);
  return name;
}

/// Inputs of every image of a task, converted once.
struct TaskInputs {
  std::vector<double> values;
  std::size_t pixels = 0;
  std::size_t height = 0, width = 0;

  explicit TaskInputs(const TaskDataset& task)
      : values(task.images.size() * task.height * task.width),
        pixels(task.height * task.width),
        height(task.height),
        width(task.width) {
    for (std::size_t k = 0; k < task.images.size(); ++k) {
      image_to_input(task.images[k], std::span<double>(values).subspan(k * pixels, pixels));
    }
  }

  Tensor gather(std::span<const std::size_t> indices) const {
    std::vector<double> v(indices.size() * pixels);
    for (std::size_t k = 0; k < indices.size(); ++k) {
      std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(indices[k] * pixels), pixels,
                  v.begin() + static_cast<std::ptrdiff_t>(k * pixels));
    }
    return Tensor({indices.size(), height, width}, std::move(v));
  }
};

double split_accuracy(const Network& net, const ParamVector& params, const TaskDataset& task,
                      const TaskInputs& inputs, Split split) {
  const auto idx = task.image_indices(split);
  return accuracy(net, params.values, inputs.gather(idx), label_batch(task, idx));
}

struct Scores {
  double accuracy = 0.0;
  double loss = 0.0;
};

Scores validation_scores(const Network& net, std::span<const double> params, const Tensor& batch,
                         const LabelVector& labels) {
  const Tensor logits = net.forward(params, batch);
  const auto predicted = predict(logits);
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::size_t correct = 0;
  double loss = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    correct += predicted[s] == labels.labels[s];
    double mx = logits[s * k];
    for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, logits[s * k + c]);
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(logits[s * k + c] - mx);
    loss += mx + std::log(z) - logits[s * k + labels.labels[s]];
  }
  return {static_cast<double>(correct) / static_cast<double>(n), loss / static_cast<double>(n)};
}

}  // namespace

TrainResult train_task(ParamVector params, const TaskDataset& task, const RunConfig& raw_cfg, std::size_t task_index,
                       const ImportanceHistory* history) {
  const RunConfig cfg = raw_cfg.resolved();
  const Network net(cfg.model);
  if (params.size() != net.param_count()) throw ShapeError("parameter vector does not fit the model");
  const bool wants_history = is_regularized(cfg.mode) && task_index > 0;
  const bool has_history = history != nullptr && !history->empty();
  if (wants_history != has_history) {
    throw ConfigError("task " + std::to_string(task_index) + " in mode " + std::string(to_string(cfg.mode)) +
                      (wants_history ? " needs" : " must not have") + " an importance history");
  }
  std::optional<QuadraticPenalty> penalty;
  if (has_history) penalty.emplace(*history, cfg.regularizer);

  const TaskInputs inputs(task);
  const auto train_idx = task.image_indices(Split::Train);
  const auto val_idx = task.image_indices(Split::Validation);
  const Tensor val_batch = inputs.gather(val_idx);
  const LabelVector val_labels = label_batch(task, val_idx);
  const double lr = task_index == 0 ? cfg.training.lr_initial : cfg.training.lr_initial * cfg.training.lr_later_factor;
  const std::size_t bs = cfg.training.batch_size;

  TrainResult result;
  std::optional<Scores> best_scores;
  ParamVector best = params;
  std::vector<double> grad(params.size());
  std::vector<std::size_t> order = train_idx;
  const std::uint64_t task_seed = mix_seed(cfg.seed, kShuffleStream + task_index);

  for (std::size_t epoch = 0; epoch < cfg.training.epochs; ++epoch) {
    order = train_idx;
    Rng rng(mix_seed(task_seed, epoch));
    rng.shuffle(std::span(order));
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bs, ++batches) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(bs, order.size() - start));
      double loss = 0.0;
      try {
        loss = net.loss_grad(params.values, inputs.gather(idx), label_batch(task, idx), grad);
        if (penalty) penalty->add_gradient(params.values, grad);
      } catch (const NumericError& e) {
        throw NumericError("training diverged on task " + std::to_string(task_index) + ", epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(batches) + ": " + e.what());
      }
      loss_sum += loss;
      for (std::size_t i = 0; i < grad.size(); ++i) params.values[i] -= lr * grad[i];
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(batches);
    log.penalty = penalty ? penalty->value(params.values) : 0.0;
    if (!std::isfinite(log.penalty)) {
      throw NumericError("anchor penalty diverged on task " + std::to_string(task_index) + ", epoch " +
                         std::to_string(epoch));
    }
    const Scores scores = validation_scores(net, params.values, val_batch, val_labels);
    log.validation_accuracy = scores.accuracy;
    log.validation_loss = scores.loss;
    result.log.push_back(log);
    // Ties on accuracy go to the lower validation loss.
    if (!best_scores || scores.accuracy > best_scores->accuracy ||
        (scores.accuracy == best_scores->accuracy && scores.loss < best_scores->loss)) {
      best_scores = scores;
      best = params;
      result.selected_epoch = epoch;
    }
  }

  if (cfg.training.selection == CheckpointSelection::BestValidation) {
    result.params = std::move(best);
  } else {
    result.params = std::move(params);
    result.selected_epoch = cfg.training.epochs - 1;
  }
  return result;
}

void AccuracyMatrix::set(std::size_t after, std::size_t task, double value) {
  if (!(value >= 0.0 && value <= 1.0)) throw NumericError("accuracy outside [0, 1]");
  cells_.at(after).at(task) = value;
}

double AccuracyMatrix::value(std::size_t after, std::size_t task) const {
  const auto v = at(after, task);
  if (!v) {
    throw ConfigError("accuracy matrix has no entry for task " + std::to_string(task) + " after task " +
                      std::to_string(after));
  }
  return *v;
}

std::vector<double> AccuracyMatrix::final_row() const {
  std::vector<double> row;
  for (std::size_t j = 0; j < tasks(); ++j) row.push_back(value(tasks() - 1, j));
  return row;
}

std::vector<double> AccuracyMatrix::diagonal() const {
  std::vector<double> d;
  for (std::size_t j = 0; j < tasks(); ++j) d.push_back(value(j, j));
  return d;
}

std::string AccuracyMatrix::to_csv() const {
  std::string s = "after_task";
  for (std::size_t j = 0; j < tasks(); ++j) s += ",task_" + std::to_string(j);
  s += '\n';
  for (std::size_t t = 0; t < tasks(); ++t) {
    s += std::to_string(t);
    for (std::size_t j = 0; j < tasks(); ++j) {
      s += ',';
      if (cells_[t][j]) s += fmt(*cells_[t][j]);
    }
    s += '\n';
  }
  return s;
}

ForgettingMetrics forgetting_metrics(const AccuracyMatrix& matrix) {
  const std::size_t t = matrix.tasks();
  if (t == 0) throw ConfigError("accuracy matrix is empty");
  ForgettingMetrics m;
  const auto final_row = matrix.final_row();
  for (std::size_t j = 0; j < t; ++j) {
    m.avg_final_accuracy += final_row[j];
    m.per_task_drop.push_back(matrix.value(j, j) - final_row[j]);
  }
  m.avg_final_accuracy /= static_cast<double>(t);
  if (t > 1) {
    for (std::size_t j = 0; j + 1 < t; ++j) {
      m.avg_forgetting += m.per_task_drop[j];
      m.retained_accuracy += final_row[j];
    }
    m.avg_forgetting /= static_cast<double>(t - 1);
    m.retained_accuracy /= static_cast<double>(t - 1);
  } else {
    m.retained_accuracy = m.avg_final_accuracy;
  }
  return m;
}

std::string ForgettingMetrics::to_csv() const {
  std::string s = "metric,value\n";
  s += "avg_final_accuracy," + fmt(avg_final_accuracy) + '\n';
  s += "avg_forgetting," + fmt(avg_forgetting) + '\n';
  s += "retained_accuracy," + fmt(retained_accuracy) + '\n';
  for (std::size_t j = 0; j < per_task_drop.size(); ++j) {
    s += "drop_task_" + std::to_string(j) + ',' + fmt(per_task_drop[j]) + '\n';
  }
  return s;
}

std::vector<TaskDataset> build_task_sequence(const RunConfig& cfg) {
  std::vector<TaskDataset> tasks;
  const std::uint64_t cover_seed = mix_seed(cfg.seed, kCoverStream);
  for (std::size_t t = 0; t < cfg.tasks.schemes.size(); ++t) {
    EmbedScheme scheme = cfg.tasks.schemes[t];
    scheme.seed = mix_seed(cfg.seed, kSchemeStream + t);
    tasks.push_back(build_task(t, scheme, cfg.tasks.pair_count, cfg.tasks.height, cfg.tasks.width, cover_seed,
                               cfg.tasks.smoothing_passes));
  }
  return tasks;
}

namespace {

std::vector<Tensor> importance_samples(const RunConfig& cfg, const TaskDataset& task, std::size_t task_index) {
  const auto train_idx = task.image_indices(Split::Train);
  const std::size_t k = std::min(cfg.n_importance, train_idx.size());
  Rng rng(mix_seed(cfg.seed, kImportanceStream + task_index));
  std::vector<Tensor> samples;
  samples.reserve(k);
  for (std::size_t pick : rng.sample_without_replacement(train_idx.size(), k)) {
    samples.push_back(image_tensor(task.images[train_idx[pick]]));
  }
  return samples;
}

std::string training_log_csv(const std::vector<std::vector<EpochLog>>& logs) {
  std::string s = "task,epoch,train_loss,penalty,validation_accuracy,validation_loss\n";
  for (std::size_t t = 0; t < logs.size(); ++t) {
    for (const EpochLog& e : logs[t]) {
      s += std::to_string(t) + ',' + std::to_string(e.epoch) + ',' + fmt(e.train_loss, "%.9g") + ',' +
           fmt(e.penalty, "%.9g") + ',' + fmt(e.validation_accuracy) + ',' + fmt(e.validation_loss, "%.9g") + '\n';
    }
  }
  return s;
}

RunResult run_sequence_impl(const RunConfig& cfg, const std::filesystem::path& out) {
  const auto tasks = build_task_sequence(cfg);
  const std::size_t T = tasks.size();
  const Network net(cfg.model);
  std::vector<TaskInputs> inputs;
  for (const TaskDataset& task : tasks) inputs.emplace_back(task);

  if (!out.empty()) {
    nlohmann::ordered_json manifest;
    manifest["config"] = to_json(cfg);
    nlohmann::ordered_json generated = nlohmann::ordered_json::array();
    for (const TaskDataset& task : tasks) {
      generated.push_back({{"task", task.task_id},
                           {"kind", to_string(task.scheme.kind)},
                           {"window", task.scheme.window},
                           {"rate", task.scheme.rate},
                           {"scheme_seed", task.scheme.seed},
                           {"changed_pixels", task.changed_pixels},
                           {"clamped_noops", task.clamped_noops}});
    }
    manifest["tasks"] = generated;
    write_text(out / "run_manifest.json", manifest.dump(2) + '\n');
  }

  RunResult result;
  result.matrix = AccuracyMatrix(T);
  ParamVector params = init_params(cfg.model, mix_seed(cfg.seed, kInitStream));

  for (std::size_t t = 0; t < T; ++t) {
    if (cfg.mode == Mode::Reference) {
      params = init_params(cfg.model, mix_seed(cfg.seed, kInitStream + t));
      TrainResult trained = train_task(std::move(params), tasks[t], cfg, 0, nullptr);
      params = std::move(trained.params);
      result.logs.push_back(std::move(trained.log));
      const double acc = split_accuracy(net, params, tasks[t], inputs[t], Split::Test);
      result.matrix.set(t, t, acc);
      // The final row reports each task's own from-scratch accuracy.
      result.matrix.set(T - 1, t, acc);
    } else {
      const ImportanceHistory* history = is_regularized(cfg.mode) && t > 0 ? &result.history : nullptr;
      TrainResult trained = train_task(std::move(params), tasks[t], cfg, t, history);
      params = std::move(trained.params);
      result.logs.push_back(std::move(trained.log));
      for (std::size_t j = 0; j <= t; ++j) {
        result.matrix.set(t, j, split_accuracy(net, params, tasks[j], inputs[j], Split::Test));
      }
      if (is_regularized(cfg.mode)) {
        const auto samples = importance_samples(cfg, tasks[t], t);
        ImportanceOptions opts;
        opts.source_task = t;
        opts.workers = cfg.workers;
        result.history.push(estimator_for(cfg.mode) == Estimator::Apie
                                ? apie_importance(params, cfg.model, samples, cfg.hessian, opts)
                                : mas_importance(params, cfg.model, samples, opts));
        result.history.set_anchor(params);
        if (!out.empty()) {
          save_importance(out / importance_file_name(t), result.history.per_task().back());
          save_checkpoint(out / "anchor.ckpt", cfg.model, params);
        }
      }
    }
    if (!out.empty()) save_checkpoint(out / checkpoint_name(t), cfg.model, params);
  }

  result.metrics = forgetting_metrics(result.matrix);
  result.final_params = std::move(params);
  if (!out.empty()) {
    write_text(out / "accuracy_matrix.csv", result.matrix.to_csv());
    write_text(out / "metrics.csv", result.metrics.to_csv());
    write_text(out / "training_log.csv", training_log_csv(result.logs));
  }
  return result;
}

}  // namespace

RunResult run_sequence(const RunConfig& raw_cfg) {
  const RunConfig cfg = raw_cfg.resolved();
  cfg.validate();
  const std::filesystem::path out = cfg.output_dir;
  if (!out.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec) throw IoError("cannot create output directory " + out.string() + ": " + ec.message());
    std::filesystem::remove(out / "FAILED", ec);
  }
  try {
    return run_sequence_impl(cfg, out);
  } catch (const std::exception& e) {
    if (!out.empty()) {
      std::ofstream marker(out / "FAILED");
      marker << e.what() << '\n';
    }
    throw;
  }
}

std::vector<Mode> ablation_modes() {
  return {Mode::Mas, Mode::ApieCurvatureOnly, Mode::ApiePeakweightOnly, Mode::ApieFull};
}

namespace {

std::string row_csv(const AblationRow& r, bool with_seed) {
  std::string s(to_string(r.mode));
  if (with_seed) s += ',' + std::to_string(r.seed);
  for (double a : r.final_accuracy) s += ',' + fmt(a);
  s += ',' + fmt(r.mean);
  if (with_seed) s += ',' + fmt(r.retained);
  return s + '\n';
}

}  // namespace

std::string AblationTable::to_csv() const {
  std::string s = "mode";
  for (std::size_t j = 0; j < tasks; ++j) s += ",task_" + std::to_string(j);
  s += ",mean\n";
  for (const AblationRow& r : per_mode) s += row_csv(r, false);
  return s;
}

std::string AblationTable::per_seed_csv() const {
  std::string s = "mode,seed";
  for (std::size_t j = 0; j < tasks; ++j) s += ",task_" + std::to_string(j);
  s += ",mean,retained\n";
  for (const AblationRow& r : per_seed) s += row_csv(r, true);
  return s;
}

const AblationRow& AblationTable::row(Mode mode, std::uint64_t seed) const {
  for (const AblationRow& r : per_seed) {
    if (r.mode == mode && r.seed == seed) return r;
  }
  throw ConfigError("ablation table has no row for " + std::string(to_string(mode)) + " seed " +
                    std::to_string(seed));
}

AblationTable run_ablation(const RunConfig& base, std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  base.validate();
  AblationTable table;
  table.modes = ablation_modes();
  table.tasks = base.tasks.schemes.size();
  const std::size_t jobs = table.modes.size() * seeds.size();
  table.per_seed.resize(jobs);
  parallel_for(jobs, base.workers, [&](std::size_t job) {
    RunConfig cfg = base;
    cfg.mode = table.modes[job / seeds.size()];
    cfg.seed = seeds[job % seeds.size()];
    cfg.workers = 1;
    if (!base.output_dir.empty()) {
      cfg.output_dir = base.output_dir / (std::string(to_string(cfg.mode)) + "_seed" + std::to_string(cfg.seed));
    }
    const RunResult r = run_sequence(cfg);
    AblationRow& row = table.per_seed[job];
    row.mode = cfg.mode;
    row.seed = cfg.seed;
    row.final_accuracy = r.matrix.final_row();
    row.mean = r.metrics.avg_final_accuracy;
    row.retained = r.metrics.retained_accuracy;
  });

  for (std::size_t m = 0; m < table.modes.size(); ++m) {
    AblationRow avg;
    avg.mode = table.modes[m];
    avg.final_accuracy.assign(table.tasks, 0.0);
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const AblationRow& r = table.per_seed[m * seeds.size() + s];
      for (std::size_t j = 0; j < table.tasks; ++j) avg.final_accuracy[j] += r.final_accuracy[j];
      avg.mean += r.mean;
      avg.retained += r.retained;
    }
    const double inv = 1.0 / static_cast<double>(seeds.size());
    for (double& a : avg.final_accuracy) a *= inv;
    avg.mean *= inv;
    avg.retained *= inv;
    table.per_mode.push_back(std::move(avg));
  }

  if (!base.output_dir.empty()) {
    write_text(base.output_dir / "ablation.csv", table.to_csv());
    write_text(base.output_dir / "ablation_per_seed.csv", table.per_seed_csv());
  }
  return table;
}

}  // namespace stegcl
