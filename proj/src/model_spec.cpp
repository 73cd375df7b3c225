#include "stegcl/model_spec.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "stegcl/errors.hpp"

namespace stegcl {

std::string_view to_string(ModelKind kind) { return kind == ModelKind::Mlp ? "mlp" : "mini-cnn"; }

ModelKind model_kind_from_string(std::string_view name) {
  if (name == "mlp") return ModelKind::Mlp;
  if (name == "mini-cnn") return ModelKind::MiniCnn;
  throw ConfigError("unknown model kind '" + std::string(name) + "' (expected mlp or mini-cnn)");
}

namespace {

std::vector<LayerPlan> build_plan(const ModelSpec& spec) {
  if (spec.input_shape.empty()) throw ConfigError("model input_shape is empty");
  for (std::size_t d : spec.input_shape) {
    if (d == 0) throw ConfigError("model input_shape has a zero dimension");
  }
  if (spec.num_classes == 0) throw ConfigError("model num_classes must be positive");
  for (std::size_t w : spec.hidden_widths) {
    if (w == 0) throw ConfigError("hidden layer width must be positive");
  }

  std::vector<LayerPlan> plan;
  std::size_t offset = 0;
  auto place_params = [&](LayerPlan& layer) {
    layer.weight_offset = offset;
    offset += layer.weight_count;
    layer.bias_offset = offset;
    offset += layer.bias_count;
  };

  std::size_t features = 0;
  if (spec.kind == ModelKind::MiniCnn) {
    if (spec.input_shape.size() != 2) throw ConfigError("mini-cnn input_shape must be {height, width}");
    if (spec.conv_channels.empty()) throw ConfigError("mini-cnn needs at least one convolution layer");
    std::size_t c = 1, h = spec.input_shape[0], w = spec.input_shape[1];
    for (std::size_t i = 0; i < spec.conv_channels.size(); ++i) {
      const std::size_t oc = spec.conv_channels[i];
      if (oc == 0) throw ConfigError("convolution channel count must be positive");
      if (h < 4 || w < 4) {
        throw ConfigError("spatial size " + std::to_string(h) + "x" + std::to_string(w) + " too small for conv" +
                          std::to_string(i + 1) + " followed by pooling");
      }
      LayerPlan conv;
      conv.kind = LayerKind::Conv3x3;
      conv.name = "conv" + std::to_string(i + 1);
      conv.in_channels = c, conv.in_height = h, conv.in_width = w;
      conv.out_channels = oc, conv.out_height = h - 2, conv.out_width = w - 2;
      conv.fan_in = c * 9;
      conv.weight_count = oc * c * 9;
      conv.bias_count = spec.bias ? oc : 0;
      place_params(conv);
      plan.push_back(conv);

      LayerPlan relu;
      relu.kind = LayerKind::Relu;
      relu.in_channels = relu.out_channels = oc;
      relu.in_height = relu.out_height = h - 2;
      relu.in_width = relu.out_width = w - 2;
      plan.push_back(relu);

      LayerPlan pool;
      pool.kind = LayerKind::MeanPool2;
      pool.in_channels = pool.out_channels = oc;
      pool.in_height = h - 2, pool.in_width = w - 2;
      pool.out_height = (h - 2) / 2, pool.out_width = (w - 2) / 2;
      plan.push_back(pool);

      c = oc, h = pool.out_height, w = pool.out_width;
    }
    features = c * h * w;
  } else {
    if (!spec.conv_channels.empty()) throw ConfigError("mlp models take no conv_channels");
    features = std::accumulate(spec.input_shape.begin(), spec.input_shape.end(), std::size_t{1},
                               std::multiplies<>());
  }

  std::vector<std::size_t> widths = spec.hidden_widths;
  widths.push_back(spec.num_classes);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    LayerPlan dense;
    dense.kind = LayerKind::Dense;
    dense.name = "dense" + std::to_string(i + 1);
    dense.in_features = features;
    dense.out_features = widths[i];
    dense.fan_in = features;
    dense.weight_count = widths[i] * features;
    dense.bias_count = spec.bias ? widths[i] : 0;
    place_params(dense);
    plan.push_back(dense);
    if (i + 1 < widths.size()) {
      LayerPlan relu;
      relu.kind = LayerKind::Relu;
      relu.in_features = relu.out_features = widths[i];
      relu.in_channels = relu.out_channels = 1;
      relu.in_height = relu.out_height = 1;
      relu.in_width = relu.out_width = widths[i];
      plan.push_back(relu);
    }
    features = widths[i];
  }
  return plan;
}

std::vector<std::string> parametric_layer_names(const std::vector<LayerPlan>& plan) {
  std::vector<std::string> names;
  for (const LayerPlan& l : plan) {
    if (!l.name.empty()) names.push_back(l.name);
  }
  return names;
}

}  // namespace

std::vector<LayerPlan> plan_layers(const ModelSpec& spec) { return build_plan(spec); }

void ModelSpec::validate() const {
  const auto plan = build_plan(*this);
  const auto names = parametric_layer_names(plan);
  for (const auto& [layer, group] : lambda_groups) {
    if (std::find(names.begin(), names.end(), layer) == names.end()) {
      throw ConfigError("lambda group assigned to unknown layer '" + layer + "'");
    }
  }
  if (!lambda_groups.empty()) {
    for (const std::string& n : names) {
      if (!lambda_groups.contains(n)) throw ConfigError("layer '" + n + "' has no lambda group");
    }
  }
}

void ModelSpec::validate_classifier() const {
  validate();
  if (num_classes != 2) {
    throw ConfigError("cover/stego classifiers need num_classes == 2, got " + std::to_string(num_classes));
  }
}

ModelSpec ModelSpec::default_mini_cnn(std::size_t height, std::size_t width) {
  ModelSpec s;
  s.kind = ModelKind::MiniCnn;
  s.conv_channels = {8, 16};
  s.hidden_widths = {32};
  s.input_shape = {height, width};
  return s;
}

ModelSpec ModelSpec::default_mlp(std::size_t height, std::size_t width) {
  ModelSpec s;
  s.kind = ModelKind::Mlp;
  s.hidden_widths = {32};
  s.input_shape = {height, width};
  return s;
}

std::map<std::string, LambdaGroup> resolved_lambda_groups(const ModelSpec& spec) {
  spec.validate();
  if (!spec.lambda_groups.empty()) return spec.lambda_groups;
  const auto plan = build_plan(spec);
  std::map<std::string, LambdaGroup> groups;
  std::string last_dense;
  for (const LayerPlan& l : plan) {
    if (l.name.empty()) continue;
    if (l.kind == LayerKind::Conv3x3) {
      groups[l.name] = LambdaGroup::Feature;
    } else {
      groups[l.name] = spec.kind == ModelKind::Mlp ? LambdaGroup::Feature : LambdaGroup::Head;
      last_dense = l.name;
    }
  }
  if (spec.kind == ModelKind::Mlp) groups[last_dense] = LambdaGroup::Head;
  return groups;
}

std::vector<Segment> segment_table(const ModelSpec& spec) {
  const auto groups = resolved_lambda_groups(spec);
  std::vector<Segment> segments;
  for (const LayerPlan& l : plan_layers(spec)) {
    if (l.name.empty()) continue;
    const LambdaGroup g = groups.at(l.name);
    segments.push_back({l.name + ".weight", l.weight_offset, l.weight_count, g});
    if (l.bias_count > 0) segments.push_back({l.name + ".bias", l.bias_offset, l.bias_count, g});
  }
  return segments;
}

std::size_t parameter_count(const ModelSpec& spec) {
  std::size_t n = 0;
  for (const LayerPlan& l : plan_layers(spec)) n += l.weight_count + l.bias_count;
  return n;
}

}  // namespace stegcl

namespace stegcl {

void LabelVector::validate(std::size_t num_classes) const {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw ConfigError("label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                        " is not below num_classes " + std::to_string(num_classes));
    }
  }
}

}  // namespace stegcl
