#pragma once

#include <map>
#include <optional>
#include <string_view>
#include <vector>

#include "stegcl/importance.hpp"
#include "stegcl/tensor.hpp"

namespace stegcl {

enum class Accumulation { MasSum, PeakWeight };

std::string_view to_string(Accumulation a);
Accumulation accumulation_from_string(std::string_view name);

/// Importance vectors of completed tasks, in training order, plus the
/// parameter snapshot taken after the latest task.
class ImportanceHistory {
 public:
  /// Appends the next task's importance. Layout and estimator must match
  /// earlier entries.
  void push(ImportanceVector importance);
  void set_anchor(ParamVector anchor);

  bool empty() const { return per_task_.empty(); }
  std::size_t size() const { return per_task_.size(); }
  const std::vector<ImportanceVector>& per_task() const { return per_task_; }
  const std::optional<ParamVector>& anchor() const { return anchor_; }

 private:
  std::vector<ImportanceVector> per_task_;
  std::optional<ParamVector> anchor_;
};

struct RegularizerConfig {
  std::map<LambdaGroup, double> lambda_per_group{{LambdaGroup::Feature, 1.2}, {LambdaGroup::Head, 1.0}};
  double alpha = 0.5;
  double beta = 0.5;
  Accumulation accumulation = Accumulation::PeakWeight;

  /// Throws ConfigError on negative or non-finite coefficients.
  void validate() const;
  double lambda(LambdaGroup g) const;
};

/// Elementwise sum over tasks.
ImportanceVector accumulate_mas(const ImportanceHistory& history);

/// alpha * elementwise max over tasks + beta * elementwise mean over tasks.
ImportanceVector peak_weight(const ImportanceHistory& history, double alpha, double beta);

/// accumulate_mas or peak_weight, per cfg.accumulation.
ImportanceVector effective_importance(const ImportanceHistory& history, const RegularizerConfig& cfg);

/// The quadratic anchor term sum_i w_i (theta_i - anchor_i)^2 with
/// w_i = lambda_group(i) * Omega_eff,i, resolved once so a training loop can
/// evaluate it per step.
class QuadraticPenalty {
 public:
  QuadraticPenalty(const ImportanceHistory& history, const RegularizerConfig& cfg);

  double value(std::span<const double> theta) const;
  /// grad += d(value)/d(theta).
  void add_gradient(std::span<const double> theta, std::span<double> grad) const;
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& anchor() const { return anchor_; }

 private:
  void check(std::span<const double> theta) const;

  std::vector<double> weights_;
  std::vector<double> anchor_;
};

double penalty(const ParamVector& theta, const ImportanceHistory& history, const RegularizerConfig& cfg);
GradVector penalty_grad(const ParamVector& theta, const ImportanceHistory& history, const RegularizerConfig& cfg);

}  // namespace stegcl
