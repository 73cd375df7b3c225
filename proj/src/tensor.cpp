#include "stegcl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>

#include "stegcl/errors.hpp"

namespace stegcl {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  std::size_t n = 1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == 0) {
      throw ShapeError("tensor dimension " + std::to_string(i) + " is zero in shape " + shape_string(shape));
    }
    n *= shape[i];
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
  data_.assign(element_count(shape_), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  const std::size_t n = element_count(shape_);
  if (n != data_.size()) {
    throw ShapeError("tensor of shape " + shape_string(shape_) + " needs " + std::to_string(n) +
                     " values, got " + std::to_string(data_.size()));
  }
}

Tensor Tensor::row(std::size_t index) const {
  if (index >= shape_.at(0)) throw ShapeError("row index out of range");
  std::vector<std::size_t> sub(shape_.begin() + 1, shape_.end());
  if (sub.empty()) sub.push_back(1);
  const std::size_t stride = data_.size() / shape_[0];
  auto first = data_.begin() + static_cast<std::ptrdiff_t>(index * stride);
  return Tensor(std::move(sub), std::vector<double>(first, first + static_cast<std::ptrdiff_t>(stride)));
}

Tensor Tensor::stack(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("cannot stack zero tensors");
  std::vector<std::size_t> shape{items.size()};
  shape.insert(shape.end(), items[0].shape().begin(), items[0].shape().end());
  std::vector<double> data;
  data.reserve(items.size() * items[0].size());
  for (const Tensor& t : items) {
    if (t.shape() != items[0].shape()) {
      throw ShapeError("cannot stack shapes " + shape_string(items[0].shape()) + " and " + shape_string(t.shape()));
    }
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  return Tensor(std::move(shape), std::move(data));
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string shape_string(std::span<const std::size_t> shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::string_view to_string(LambdaGroup group) {
  return group == LambdaGroup::Feature ? "feature" : "head";
}

LambdaGroup lambda_group_from_string(std::string_view name) {
  if (name == "feature") return LambdaGroup::Feature;
  if (name == "head") return LambdaGroup::Head;
  throw ConfigError("unknown lambda group '" + std::string(name) + "' (expected feature or head)");
}

void ParamVector::validate() const {
  std::set<std::string> names;
  std::size_t expected = 0;
  for (const Segment& s : segments) {
    if (!names.insert(s.name).second) throw ShapeError("duplicate segment name '" + s.name + "'");
    if (s.offset != expected) {
      throw ShapeError("segment '" + s.name + "' starts at " + std::to_string(s.offset) + ", expected " +
                       std::to_string(expected));
    }
    expected += s.length;
  }
  if (expected != values.size()) {
    throw ShapeError("segments cover " + std::to_string(expected) + " of " + std::to_string(values.size()) +
                     " parameters");
  }
}

const Segment* ParamVector::find(std::string_view name) const {
  auto it = std::find_if(segments.begin(), segments.end(), [&](const Segment& s) { return s.name == name; });
  return it == segments.end() ? nullptr : &*it;
}

std::vector<LambdaGroup> ParamVector::group_per_parameter() const {
  std::vector<LambdaGroup> groups(values.size(), LambdaGroup::Head);
  for (const Segment& s : segments) {
    std::fill_n(groups.begin() + static_cast<std::ptrdiff_t>(s.offset), s.length, s.group);
  }
  return groups;
}

}  // namespace stegcl
