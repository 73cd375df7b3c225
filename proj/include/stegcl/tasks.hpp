#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "stegcl/model_spec.hpp"
#include "stegcl/tensor.hpp"

namespace stegcl {

/// 8-bit grayscale image, row-major.
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

enum class EmbedKind { LsbReplace, Pm1Uniform, Pm1Adaptive, HfNoise };

std::string_view to_string(EmbedKind kind);
EmbedKind embed_kind_from_string(std::string_view name);

/// Synthetic embedding scheme. `window` is the side of the local-variance
/// window that drives pm1-adaptive selection (odd, >= 3); other kinds
/// ignore it.
struct EmbedScheme {
  EmbedKind kind = EmbedKind::Pm1Uniform;
  double rate = 0.4;
  std::uint64_t seed = 0;
  std::size_t window = 3;

  void validate() const;
  friend bool operator==(const EmbedScheme&, const EmbedScheme&) = default;
};

/// Throws ConfigError unless (kind, window) pairs are pairwise distinct.
void validate_sequence(std::span<const EmbedScheme> schemes);

/// Box-filter passes applied to cover noise by default.
inline constexpr std::size_t kDefaultSmoothingPasses = 3;

/// Seeded white noise, 3x3 box filter applied `smoothing_passes` times
/// (edges replicated), min-max rescaled to [0, 255] and rounded. Image k
/// depends only on (seed, k, height, width, smoothing_passes).
std::vector<GrayImage> generate_covers(std::size_t count, std::size_t height, std::size_t width, std::uint64_t seed,
                                       std::size_t smoothing_passes = kDefaultSmoothingPasses);

struct EmbedResult {
  GrayImage stego;
  std::size_t selected = 0;  // positions chosen for modification
  std::size_t changed = 0;   // positions whose value actually changed
  std::size_t clamped = 0;   // +-1 changes cancelled by the [0, 255] range
};

/// Modifies round(rate * H * W) distinct positions:
///  - lsb-replace: writes the complement of the current LSB, so every
///    selected pixel changes by exactly its least significant bit;
///  - pm1-uniform: uniform positions, random +-1;
///  - pm1-adaptive: positions drawn without replacement with probability
///    proportional to the local variance (window x window), random +-1;
///  - hf-noise: uniform positions, +-1 following a checkerboard with a
///    random global sign.
/// +-1 changes are clamped to [0, 255]; a clamped change is a no-op.
EmbedResult embed_with_stats(const GrayImage& cover, const EmbedScheme& scheme);
GrayImage embed(const GrayImage& cover, const EmbedScheme& scheme);

/// Local variance of each pixel over a window x window neighbourhood
/// (edges replicated).
std::vector<double> local_variance(const GrayImage& image, std::size_t window);

enum class Split { Train, Validation, Test };

std::string_view to_string(Split split);

/// Pair indices per split.
struct TaskSplits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;

  const std::vector<std::size_t>& pairs(Split s) const;
  friend bool operator==(const TaskSplits&, const TaskSplits&) = default;
};

/// Paired cover/stego images for one scheme. Pair p is stored as
/// images[2p] (cover, label 0) and images[2p + 1] (stego, label 1).
struct TaskDataset {
  std::size_t task_id = 0;
  EmbedScheme scheme;
  std::uint64_t seed = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t smoothing_passes = kDefaultSmoothingPasses;
  std::vector<GrayImage> images;
  std::vector<std::size_t> labels;
  TaskSplits splits;
  std::size_t changed_pixels = 0;
  std::size_t clamped_noops = 0;

  std::size_t pair_count() const { return images.size() / 2; }
  /// Image indices of a split, cover before stego for each pair.
  std::vector<std::size_t> image_indices(Split s) const;

  friend bool operator==(const TaskDataset&, const TaskDataset&) = default;
};

/// Covers come from `seed` (so tasks built with one seed share covers and
/// splits); per-pair embedding seeds are derived from scheme.seed.
TaskDataset build_task(std::size_t task_id, const EmbedScheme& scheme, std::size_t pair_count, std::size_t height,
                       std::size_t width, std::uint64_t seed,
                       std::size_t smoothing_passes = kDefaultSmoothingPasses);

inline constexpr double kResidualClip = 3.0;

/// Network input: second-order high-pass residual (3x3 KV kernel / 4, edges
/// replicated), truncated to [-kResidualClip, kResidualClip].
void image_to_input(const GrayImage& image, std::span<double> out);
Tensor image_batch(const TaskDataset& data, std::span<const std::size_t> image_indices);
Tensor image_tensor(const GrayImage& image);
LabelVector label_batch(const TaskDataset& data, std::span<const std::size_t> image_indices);

/// Binary PGM (P5, maxval 255).
void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

/// Writes covers/stegos as PGM plus manifest.json (scheme, seed, counts,
/// split indices) into `dir`.
void export_task(const TaskDataset& data, const std::filesystem::path& dir);

}  // namespace stegcl
