#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "stegcl/model_spec.hpp"
#include "stegcl/models.hpp"
#include "stegcl/tensor.hpp"

namespace testing {

// Single dense layer: inputs -> outputs.
inline stegcl::ModelSpec linear_spec(std::size_t inputs, std::size_t outputs, bool bias) {
  stegcl::ModelSpec spec;
  spec.kind = stegcl::ModelKind::Mlp;
  spec.input_shape = {inputs};
  spec.num_classes = outputs;
  spec.bias = bias;
  return spec;
}

inline stegcl::ParamVector params_with(const stegcl::ModelSpec& spec, std::vector<double> values) {
  stegcl::ParamVector p = stegcl::init_params(spec, 0);
  p.values = std::move(values);
  p.validate();
  return p;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("stegcl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
