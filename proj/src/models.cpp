#include "stegcl/models.hpp"

#include <cmath>

#include "stegcl/errors.hpp"
#include "stegcl/rng.hpp"

namespace stegcl {

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  ParamVector p;
  p.segments = segment_table(spec);
  p.values.assign(parameter_count(spec), 0.0);
  std::uint64_t stream = 0;
  for (const LayerPlan& l : plan_layers(spec)) {
    if (l.weight_count == 0) continue;
    // Each layer draws from its own stream so adding a layer leaves the
    // others unchanged.
    Rng rng(mix_seed(seed, stream++));
    const double bound = std::sqrt(3.0) * std::sqrt(2.0 / static_cast<double>(l.fan_in));
    for (std::size_t i = 0; i < l.weight_count; ++i) {
      p.values[l.weight_offset + i] = rng.uniform(-bound, bound);
    }
  }
  p.validate();
  return p;
}

std::vector<std::size_t> predict(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("logits must have shape [N, classes]");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<std::size_t> out(n, 0);
  for (std::size_t s = 0; s < n; ++s) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (logits[s * k + c] > logits[s * k + best]) best = c;
    }
    out[s] = best;
  }
  return out;
}

double accuracy(const Network& net, std::span<const double> params, const Tensor& batch, const LabelVector& labels) {
  if (labels.size() == 0) throw ConfigError("accuracy of an empty split is undefined");
  if (batch.dim(0) != labels.size()) {
    throw ShapeError("accuracy: " + std::to_string(labels.size()) + " labels for " + std::to_string(batch.dim(0)) +
                     " samples");
  }
  const auto predicted = predict(net.forward(params, batch));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == labels.labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double accuracy(const ParamVector& params, const ModelSpec& spec, const Tensor& batch, const LabelVector& labels) {
  return accuracy(Network(spec), params.values, batch, labels);
}

}  // namespace stegcl
