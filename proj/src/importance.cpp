#include "stegcl/importance.hpp"

#include <cmath>
#include <string>

#include "stegcl/errors.hpp"
#include "stegcl/parallel.hpp"

namespace stegcl {

std::string_view to_string(Estimator e) { return e == Estimator::Mas ? "mas" : "apie"; }

Estimator estimator_from_string(std::string_view name) {
  if (name == "mas") return Estimator::Mas;
  if (name == "apie") return Estimator::Apie;
  throw ConfigError("unknown importance estimator '" + std::string(name) + "'");
}

void ImportanceVector::validate() const {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]) || values[i] < 0.0) {
      throw NumericError("importance entry " + std::to_string(i) + " is not a finite non-negative value");
    }
  }
}

double curvature(double g, double h) { return std::abs(h) / std::pow(1.0 + g * g, 1.5); }

double combined_importance(double g, double kappa) { return (std::log1p(kappa) + 1.0) * std::abs(g); }

namespace {

/// Per-sample contributions are stored row by row and reduced in sample
/// order afterwards.
template <typename PerSample>
ImportanceVector average_over_samples(const Network& net, std::span<const Tensor> samples,
                                      const ImportanceOptions& options, Estimator estimator, PerSample&& per_sample) {
  if (samples.empty()) throw ConfigError("importance estimation needs at least one sample");
  const std::size_t p = net.param_count();
  std::vector<double> rows(samples.size() * p);
  parallel_for(samples.size(), options.workers,
               [&](std::size_t k) { per_sample(samples[k], std::span(rows).subspan(k * p, p)); });

  ImportanceVector out;
  out.values.assign(p, 0.0);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const double* row = rows.data() + k * p;
    for (std::size_t i = 0; i < p; ++i) out.values[i] += row[i];
  }
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  for (double& v : out.values) v *= inv_n;
  out.source_task = options.source_task;
  out.estimator = estimator;
  out.n_samples = samples.size();
  out.validate();
  return out;
}

}  // namespace

ImportanceVector mas_importance(const ParamVector& params, const ModelSpec& spec, std::span<const Tensor> samples,
                                const ImportanceOptions& options) {
  const Network net(spec);
  return average_over_samples(net, samples, options, Estimator::Mas, [&](const Tensor& x, std::span<double> row) {
    net.output_l2sq_grad(params.values, x, row);
    for (double& v : row) v = std::abs(v);
  });
}

ImportanceVector apie_importance(const ParamVector& params, const ModelSpec& spec, std::span<const Tensor> samples,
                                 HessianMethod hess_method, const ImportanceOptions& options) {
  const Network net(spec);
  const std::size_t p = net.param_count();
  return average_over_samples(net, samples, options, Estimator::Apie, [&](const Tensor& x, std::span<double> row) {
    std::vector<double> h(p);
    if (hess_method == HessianMethod::Exact) {
      net.output_l2sq_grad_and_exact_hessian(params.values, x, row, h);
    } else {
      net.output_l2sq_grad(params.values, x, row);
      net.output_l2sq_diag_hessian(params.values, x, hess_method, h);
    }
    for (std::size_t i = 0; i < p; ++i) row[i] = combined_importance(row[i], curvature(row[i], h[i]));
  });
}

}  // namespace stegcl
