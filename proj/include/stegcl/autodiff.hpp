#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stegcl/model_spec.hpp"
#include "stegcl/tensor.hpp"

namespace stegcl {

enum class LossKind { CrossEntropy };

/// How the diagonal of the Hessian of ||F(x)||^2 is obtained.
enum class HessianMethod {
  /// Central difference of the reverse-mode gradient, one coordinate at a
  /// time, with step 1e-4 * (1 + |theta_i|).
  GradFd,
  /// 2 * sum_c (dF_c/dtheta_i)^2 from one reverse pass per output. Exact for
  /// these models away from ReLU kinks: every parameter enters a single
  /// affine map and everything downstream is piecewise linear, so each F_c
  /// is piecewise linear in any one parameter and d2F_c/dtheta_i^2 = 0.
  Exact,
  /// All-zero curvature. Turns APIE importance into MAS importance.
  Zero,
};

std::string_view to_string(HessianMethod method);
HessianMethod hessian_method_from_string(std::string_view name);

/// Reverse-mode evaluator for a ModelSpec.
///
/// Batches have shape [N] + input_shape (an Mlp also accepts [N, features]).
/// Parameters are read from a flat span laid out as segment_table(spec).
/// Every method is single-threaded, allocation-local and const, so one
/// Network may be shared by concurrent callers.
class Network {
 public:
  explicit Network(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  std::size_t param_count() const { return param_count_; }
  std::size_t input_size() const { return input_size_; }
  std::size_t output_size() const { return spec_.num_classes; }

  /// Logits, shape [N, num_classes].
  Tensor forward(std::span<const double> params, const Tensor& batch) const;

  /// Mean cross-entropy over the batch. Writes its gradient into `grad`.
  double loss_grad(std::span<const double> params, const Tensor& batch, const LabelVector& labels,
                   std::span<double> grad) const;

  /// ||F(x)||^2 for a single sample.
  double output_l2sq(std::span<const double> params, const Tensor& sample) const;
  /// Gradient of ||F(x)||^2; returns the scalar as well.
  double output_l2sq_grad(std::span<const double> params, const Tensor& sample, std::span<double> grad) const;
  /// Diagonal of the Hessian of ||F(x)||^2.
  void output_l2sq_diag_hessian(std::span<const double> params, const Tensor& sample, HessianMethod method,
                                std::span<double> diag) const;

  /// Gradient of ||F||^2 and the exact diagonal Hessian from the same
  /// forward pass. Cheaper than calling both separately.
  void output_l2sq_grad_and_exact_hessian(std::span<const double> params, const Tensor& sample,
                                          std::span<double> grad, std::span<double> diag) const;

 private:
  struct Workspace {
    std::vector<std::vector<double>> acts;  // acts[0] = input, acts[l + 1] = output of layer l
    std::size_t batch = 0;
  };

  std::size_t check_batch(const Tensor& batch) const;
  std::size_t check_sample(const Tensor& sample) const;
  void check_params(std::span<const double> params) const;
  void run_forward(std::span<const double> params, std::span<const double> input, std::size_t batch,
                   Workspace& ws) const;
  /// Accumulates d(objective)/d(params) into grad given d(objective)/d(logits).
  void run_backward(std::span<const double> params, const Workspace& ws, std::vector<double> upstream,
                    std::span<double> grad) const;
  void check_gradient(std::span<const double> grad) const;

  ModelSpec spec_;
  std::vector<LayerPlan> plan_;
  std::vector<std::string> labels_;  // display names used in diagnostics
  std::size_t param_count_ = 0;
  std::size_t input_size_ = 0;
};

// Free-function forms operating on ParamVector.

Tensor forward(const ParamVector& params, const ModelSpec& spec, const Tensor& batch);

struct LossGrad {
  double loss = 0.0;
  GradVector grad;
};

LossGrad loss_grad(const ParamVector& params, const ModelSpec& spec, const Tensor& batch, const LabelVector& labels,
                   LossKind loss = LossKind::CrossEntropy);

double output_l2sq(const ParamVector& params, const ModelSpec& spec, const Tensor& sample);
GradVector output_l2sq_grad(const ParamVector& params, const ModelSpec& spec, const Tensor& sample);
GradVector output_l2sq_diag_hessian(const ParamVector& params, const ModelSpec& spec, const Tensor& sample,
                                    HessianMethod method);

}  // namespace stegcl
