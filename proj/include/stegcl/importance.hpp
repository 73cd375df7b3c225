#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "stegcl/autodiff.hpp"
#include "stegcl/model_spec.hpp"
#include "stegcl/tensor.hpp"

namespace stegcl {

enum class Estimator { Mas, Apie };

std::string_view to_string(Estimator e);
Estimator estimator_from_string(std::string_view name);

/// Non-negative per-parameter importance weights in ParamVector layout.
struct ImportanceVector {
  std::vector<double> values;
  std::size_t source_task = 0;
  Estimator estimator = Estimator::Mas;
  std::size_t n_samples = 0;

  std::size_t size() const { return values.size(); }
  /// Throws NumericError on negative or non-finite entries.
  void validate() const;

  friend bool operator==(const ImportanceVector&, const ImportanceVector&) = default;
};

/// Curvature of the output function along one parameter:
/// |h| / (1 + g^2)^(3/2).
double curvature(double g, double h);

/// Curvature-weighted gradient magnitude: (ln(1 + kappa) + 1) |g|.
double combined_importance(double g, double kappa);

struct ImportanceOptions {
  std::size_t source_task = 0;
  /// Threads for per-sample derivative evaluation; 0 = hardware concurrency.
  /// The result does not depend on this value.
  std::size_t workers = 1;
};

/// Mean over samples of |d||F(x)||^2 / dtheta_i|.
ImportanceVector mas_importance(const ParamVector& params, const ModelSpec& spec, std::span<const Tensor> samples,
                                const ImportanceOptions& options = {});

/// Mean over samples of combined_importance(g_i, curvature(g_i, h_i)), where
/// g and h are the gradient and diagonal Hessian of ||F(x)||^2.
ImportanceVector apie_importance(const ParamVector& params, const ModelSpec& spec, std::span<const Tensor> samples,
                                 HessianMethod hess_method, const ImportanceOptions& options = {});

}  // namespace stegcl
