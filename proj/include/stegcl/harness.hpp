#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stegcl/config.hpp"
#include "stegcl/consolidation.hpp"
#include "stegcl/models.hpp"
#include "stegcl/tasks.hpp"

namespace stegcl {

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean task loss over the epoch's batches
  double penalty = 0.0;     // anchor penalty after the epoch
  double validation_accuracy = 0.0;
  double validation_loss = 0.0;
};

struct TrainResult {
  ParamVector params;
  std::vector<EpochLog> log;
  std::size_t selected_epoch = 0;
};

/// Minibatch SGD on mean cross-entropy plus, when `history` is given, the
/// importance-weighted anchor penalty. Learning rate is lr_initial for task
/// 0 and lr_initial * lr_later_factor afterwards. Batch order is seeded by
/// (cfg.seed, task_index, epoch).
TrainResult train_task(ParamVector params, const TaskDataset& task, const RunConfig& cfg, std::size_t task_index,
                       const ImportanceHistory* history);

/// A[t][j] = test accuracy on task j after training through task t.
class AccuracyMatrix {
 public:
  AccuracyMatrix() = default;
  explicit AccuracyMatrix(std::size_t tasks) : cells_(tasks, std::vector<std::optional<double>>(tasks)) {}

  std::size_t tasks() const { return cells_.size(); }
  void set(std::size_t after, std::size_t task, double value);
  std::optional<double> at(std::size_t after, std::size_t task) const { return cells_.at(after).at(task); }
  /// Throws if missing.
  double value(std::size_t after, std::size_t task) const;
  std::vector<double> final_row() const;
  std::vector<double> diagonal() const;

  /// Header "after_task,task_0,..."; unset cells are empty.
  std::string to_csv() const;

  friend bool operator==(const AccuracyMatrix&, const AccuracyMatrix&) = default;

 private:
  std::vector<std::vector<std::optional<double>>> cells_;
};

struct ForgettingMetrics {
  double avg_final_accuracy = 0.0;
  double avg_forgetting = 0.0;
  /// Mean final accuracy over every task but the last (all tasks when T = 1).
  double retained_accuracy = 0.0;
  std::vector<double> per_task_drop;

  std::string to_csv() const;
};

ForgettingMetrics forgetting_metrics(const AccuracyMatrix& matrix);

struct RunResult {
  AccuracyMatrix matrix;
  ForgettingMetrics metrics;
  ImportanceHistory history;
  ParamVector final_params;
  std::vector<std::vector<EpochLog>> logs;
};

/// Task datasets for a run; covers and splits are shared across tasks.
std::vector<TaskDataset> build_task_sequence(const RunConfig& cfg);

/// Trains through the task sequence. When cfg.output_dir is non-empty,
/// writes accuracy_matrix.csv, metrics.csv, training_log.csv,
/// run_manifest.json, model_task_NNN.ckpt and, for regularized modes,
/// task_NNN.imp and anchor.ckpt. On failure a FAILED marker is left next to
/// the partial artifacts and the exception propagates.
RunResult run_sequence(const RunConfig& cfg);

struct AblationRow {
  Mode mode = Mode::Mas;
  std::uint64_t seed = 0;
  std::vector<double> final_accuracy;
  double mean = 0.0;
  double retained = 0.0;
};

struct AblationTable {
  std::vector<Mode> modes;
  std::size_t tasks = 0;
  std::vector<AblationRow> per_seed;  // mode-major, seeds in input order
  std::vector<AblationRow> per_mode;  // averaged over seeds

  /// "mode,task_0,...,mean", one row per mode.
  std::string to_csv() const;
  std::string per_seed_csv() const;
  const AblationRow& row(Mode mode, std::uint64_t seed) const;
};

/// The four modes compared by run_ablation, in table order.
std::vector<Mode> ablation_modes();

/// Runs every ablation mode for every seed on identical task data; runs
/// execute on cfg.workers threads into <output_dir>/<mode>_seed<S>/. When
/// output_dir is non-empty, ablation.csv and ablation_per_seed.csv are
/// written there.
AblationTable run_ablation(const RunConfig& base, std::span<const std::uint64_t> seeds);

}  // namespace stegcl
