#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "stegcl/autodiff.hpp"
#include "stegcl/consolidation.hpp"
#include "stegcl/importance.hpp"
#include "stegcl/model_spec.hpp"
#include "stegcl/tasks.hpp"

namespace stegcl {

enum class Mode { Finetune, Reference, Mas, ApieFull, ApieCurvatureOnly, ApiePeakweightOnly };

std::string_view to_string(Mode mode);
Mode mode_from_string(std::string_view name);

/// Whether a mode trains against the importance-weighted anchor penalty.
bool is_regularized(Mode mode);
Estimator estimator_for(Mode mode);
Accumulation accumulation_for(Mode mode);

enum class CheckpointSelection { BestValidation, Last };

std::string_view to_string(CheckpointSelection s);
CheckpointSelection checkpoint_selection_from_string(std::string_view name);

struct TaskSequenceConfig {
  /// Scheme seeds are ignored here; each run derives them from its seed.
  std::vector<EmbedScheme> schemes;
  std::size_t pair_count = 2000;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t smoothing_passes = kDefaultSmoothingPasses;

  /// pm1-adaptive (3x3), pm1-uniform, pm1-adaptive (5x5), hf-noise at 0.4 bpp.
  static std::vector<EmbedScheme> default_schemes(double rate = 0.4);
};

struct TrainingConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr_initial = 0.01;
  double lr_later_factor = 0.2;
  CheckpointSelection selection = CheckpointSelection::BestValidation;
};

struct RunConfig {
  Mode mode = Mode::ApieFull;
  ModelSpec model = ModelSpec::default_mini_cnn();
  TaskSequenceConfig tasks{TaskSequenceConfig::default_schemes()};
  TrainingConfig training;
  /// accumulation is resolved from the mode by resolved().
  RegularizerConfig regularizer;
  std::size_t n_importance = 256;
  HessianMethod hessian = HessianMethod::Exact;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  /// Threads for importance estimation and ablation runs; 0 = all cores.
  std::size_t workers = 1;

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;
  /// Copy with mode-derived fields filled in.
  RunConfig resolved() const;
};

nlohmann::ordered_json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const RunConfig& cfg);
/// Missing keys keep their defaults; unknown keys and ill-typed values
/// throw ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace stegcl
