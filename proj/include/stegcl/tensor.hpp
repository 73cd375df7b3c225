#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stegcl {

/// Dense row-major tensor of doubles.
class Tensor {
 public:
  Tensor() = default;
  /// Zero-filled tensor. Every dimension must be positive.
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Slice of the leading axis as a tensor of rank()-1 (rank 1 yields shape {1}).
  Tensor row(std::size_t index) const;
  /// Stacks equally shaped tensors along a new leading axis.
  static Tensor stack(std::span<const Tensor> items);

  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_string(std::span<const std::size_t> shape);

/// Parameter partition used to resolve a per-group regularization strength.
enum class LambdaGroup { Feature, Head };

std::string_view to_string(LambdaGroup group);
LambdaGroup lambda_group_from_string(std::string_view name);

struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;
  LambdaGroup group = LambdaGroup::Head;

  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Flat trainable parameters with a named segment table.
struct ParamVector {
  std::vector<double> values;
  std::vector<Segment> segments;

  std::size_t size() const { return values.size(); }
  /// Throws ShapeError unless segments are unique, contiguous and cover values.
  void validate() const;
  const Segment* find(std::string_view name) const;
  std::span<double> segment_values(const Segment& s) { return std::span(values).subspan(s.offset, s.length); }
  std::span<const double> segment_values(const Segment& s) const {
    return std::span(values).subspan(s.offset, s.length);
  }
  /// Per-parameter group, expanded from the segment table.
  std::vector<LambdaGroup> group_per_parameter() const;

  friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

/// Derivative vector sharing a ParamVector layout.
struct GradVector {
  std::vector<double> values;

  GradVector() = default;
  explicit GradVector(std::size_t n) : values(n, 0.0) {}
  explicit GradVector(std::vector<double> v) : values(std::move(v)) {}
  std::size_t size() const { return values.size(); }

  friend bool operator==(const GradVector&, const GradVector&) = default;
};

}  // namespace stegcl
