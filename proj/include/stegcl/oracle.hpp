#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stegcl/consolidation.hpp"
#include "stegcl/model_spec.hpp"
#include "stegcl/tensor.hpp"

/// Finite-difference references for the analytic derivatives. Everything
/// here is built from forward evaluations (Network::forward, penalty values)
/// and never calls a reverse pass.
namespace stegcl::oracle {

using ScalarFn = std::function<double(std::span<const double>)>;

/// |a - b| / max(|a|, |b|, floor).
double relative_error(double a, double b, double floor = 1e-8);

/// Central differences with per-coordinate step rel_step * (1 + |x_i|).
std::vector<double> central_gradient(const ScalarFn& f, std::span<const double> x, double rel_step);

/// (f(x + e) - 2 f(x) + f(x - e)) / e^2 per coordinate, e = rel_step * (1 + |x_i|).
std::vector<double> second_difference_diagonal(const ScalarFn& f, std::span<const double> x, double rel_step);

/// Mean softmax cross-entropy from forward logits only.
double cross_entropy_from_forward(const ModelSpec& spec, std::span<const double> params, const Tensor& batch,
                                  const LabelVector& labels);

/// ||F(x)||^2 from a forward pass only.
double output_l2sq_from_forward(const ModelSpec& spec, std::span<const double> params, const Tensor& sample);

/// Random small classifier problem (<= 500 parameters).
struct Problem {
  ModelSpec spec;
  ParamVector params;
  Tensor batch;
  LabelVector labels;
};

/// Alternates Mlp and MiniCnn architectures depending on `index`.
Problem random_problem(std::uint64_t seed, std::size_t index);

/// Random history + config + theta for penalty checks.
struct PenaltyProblem {
  ParamVector theta;
  ImportanceHistory history;
  RegularizerConfig cfg;
};
PenaltyProblem random_penalty_problem(std::uint64_t seed, std::size_t index);

struct CheckResult {
  std::string name;
  std::size_t cases = 0;
  std::size_t coordinates = 0;
  /// Coordinates left out because the finite-difference stencil crosses a
  /// ReLU kink (second differences at step e and e/2 disagree).
  std::size_t skipped = 0;
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_relative_error <= tolerance; }
};

/// loss_grad vs central differences (step 1e-6 (1 + |theta|)), tolerance 1e-5.
CheckResult check_loss_grad(std::uint64_t seed, std::size_t cases);
/// output_l2sq_grad vs central differences of ||F||^2, tolerance 1e-5.
CheckResult check_output_grad(std::uint64_t seed, std::size_t cases);
/// grad-fd Hessian diagonal vs second differences of ||F||^2 (step
/// 1e-4 (1 + |theta|)) on coordinates with |h| > 1e-6, tolerance 1e-3.
CheckResult check_hessian_diagonal(std::uint64_t seed, std::size_t cases);
/// exact Hessian diagonal vs the same second differences, tolerance 1e-3.
CheckResult check_exact_hessian(std::uint64_t seed, std::size_t cases);
/// penalty_grad vs central differences of penalty, tolerance 1e-8.
CheckResult check_penalty_grad(std::uint64_t seed, std::size_t cases);

}  // namespace stegcl::oracle
