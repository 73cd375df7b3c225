#pragma once

#include <cstdint>

#include "stegcl/autodiff.hpp"
#include "stegcl/model_spec.hpp"
#include "stegcl/tensor.hpp"

namespace stegcl {

/// Scaled-uniform initialization: weights of a layer with fan-in n are drawn
/// from U(-sqrt(3) s, sqrt(3) s) with s = sqrt(2 / n); biases start at zero.
/// A pure function of (spec, seed).
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

/// Predicted class per row of `logits`; ties resolve to the lowest class.
std::vector<std::size_t> predict(const Tensor& logits);

/// Fraction of samples whose predicted class equals the label.
double accuracy(const ParamVector& params, const ModelSpec& spec, const Tensor& batch, const LabelVector& labels);
double accuracy(const Network& net, std::span<const double> params, const Tensor& batch, const LabelVector& labels);

}  // namespace stegcl
