#include "stegcl/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <utility>

#include "json.hpp"
#include "stegcl/errors.hpp"
#include "stegcl/rng.hpp"

namespace stegcl {

std::string_view to_string(EmbedKind kind) {
  switch (kind) {
    case EmbedKind::LsbReplace: return "lsb-replace";
    case EmbedKind::Pm1Uniform: return "pm1-uniform";
    case EmbedKind::Pm1Adaptive: return "pm1-adaptive";
    case EmbedKind::HfNoise: return "hf-noise";
  }
  return "?";
}

EmbedKind embed_kind_from_string(std::string_view name) {
  if (name == "lsb-replace") return EmbedKind::LsbReplace;
  if (name == "pm1-uniform") return EmbedKind::Pm1Uniform;
  if (name == "pm1-adaptive") return EmbedKind::Pm1Adaptive;
  if (name == "hf-noise") return EmbedKind::HfNoise;
  throw ConfigError("unknown embedding kind '" + std::string(name) + "'");
}

void EmbedScheme::validate() const {
  if (!(rate > 0.0 && rate <= 1.0)) throw ConfigError("embedding rate must lie in (0, 1]");
  if (window < 3 || window % 2 == 0) throw ConfigError("variance window must be odd and >= 3");
}

void validate_sequence(std::span<const EmbedScheme> schemes) {
  std::set<std::pair<EmbedKind, std::size_t>> seen;
  for (const EmbedScheme& s : schemes) {
    s.validate();
    const std::size_t w = s.kind == EmbedKind::Pm1Adaptive ? s.window : 0;
    if (!seen.insert({s.kind, w}).second) {
      throw ConfigError("embedding scheme " + std::string(to_string(s.kind)) + " appears twice in the sequence");
    }
  }
}

namespace {

std::vector<double> box3(const std::vector<double>& in, std::size_t h, std::size_t w) {
  std::vector<double> out(in.size());
  auto at = [&](std::ptrdiff_t r, std::ptrdiff_t c) {
    r = std::clamp<std::ptrdiff_t>(r, 0, static_cast<std::ptrdiff_t>(h) - 1);
    c = std::clamp<std::ptrdiff_t>(c, 0, static_cast<std::ptrdiff_t>(w) - 1);
    return in[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)];
  };
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      double s = 0.0;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          s += at(static_cast<std::ptrdiff_t>(r) + dr, static_cast<std::ptrdiff_t>(c) + dc);
        }
      }
      out[r * w + c] = s / 9.0;
    }
  }
  return out;
}

GrayImage make_cover(std::size_t height, std::size_t width, std::uint64_t seed, std::size_t passes) {
  Rng rng(seed);
  std::vector<double> v(height * width);
  for (double& x : v) x = rng.uniform();
  for (std::size_t i = 0; i < passes; ++i) v = box3(v, height, width);
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double min = *lo, span = *hi - *lo;
  GrayImage img{height, width, std::vector<std::uint8_t>(v.size(), 128)};
  if (span > 0.0) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * (v[i] - min) / span));
    }
  }
  return img;
}

}  // namespace

std::vector<GrayImage> generate_covers(std::size_t count, std::size_t height, std::size_t width, std::uint64_t seed,
                                       std::size_t smoothing_passes) {
  if (count < 1) throw ConfigError("cover count must be >= 1");
  if (height < 8 || width < 8) throw ConfigError("cover images must be at least 8x8");
  std::vector<GrayImage> covers;
  covers.reserve(count);
  for (std::size_t k = 0; k < count; ++k) covers.push_back(make_cover(height, width, mix_seed(seed, k), smoothing_passes));
  return covers;
}

std::vector<double> local_variance(const GrayImage& image, std::size_t window) {
  const auto h = static_cast<std::ptrdiff_t>(image.height), w = static_cast<std::ptrdiff_t>(image.width);
  const auto half = static_cast<std::ptrdiff_t>(window / 2);
  const double n = static_cast<double>(window * window);
  std::vector<double> out(image.pixels.size());
  for (std::ptrdiff_t r = 0; r < h; ++r) {
    for (std::ptrdiff_t c = 0; c < w; ++c) {
      double s = 0.0, s2 = 0.0;
      for (std::ptrdiff_t dr = -half; dr <= half; ++dr) {
        for (std::ptrdiff_t dc = -half; dc <= half; ++dc) {
          const auto rr = std::clamp<std::ptrdiff_t>(r + dr, 0, h - 1);
          const auto cc = std::clamp<std::ptrdiff_t>(c + dc, 0, w - 1);
          const double v = image.pixels[static_cast<std::size_t>(rr * w + cc)];
          s += v;
          s2 += v * v;
        }
      }
      const double mean = s / n;
      out[static_cast<std::size_t>(r * w + c)] = std::max(0.0, s2 / n - mean * mean);
    }
  }
  return out;
}

EmbedResult embed_with_stats(const GrayImage& cover, const EmbedScheme& scheme) {
  scheme.validate();
  const std::size_t n = cover.pixels.size();
  const auto m = static_cast<std::size_t>(std::lround(scheme.rate * static_cast<double>(n)));
  Rng rng(scheme.seed);

  std::vector<std::size_t> positions;
  if (scheme.kind == EmbedKind::Pm1Adaptive) {
    // Weighted sampling without replacement: keep the m smallest
    // exponential keys -ln(u) / w. The floor keeps flat regions eligible.
    const auto var = local_variance(cover, scheme.window);
    std::vector<std::pair<double, std::size_t>> keys(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double u = 1.0 - rng.uniform();  // (0, 1]
      keys[i] = {-std::log(u) / (var[i] + 1e-3), i};
    }
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(m), keys.end());
    for (std::size_t i = 0; i < m; ++i) positions.push_back(keys[i].second);
  } else {
    positions = rng.sample_without_replacement(n, m);
  }

  EmbedResult result{cover, positions.size(), 0, 0};
  std::vector<std::uint8_t>& px = result.stego.pixels;
  const int global_sign = rng.sign();
  for (std::size_t pos : positions) {
    if (scheme.kind == EmbedKind::LsbReplace) {
      px[pos] ^= 1U;
      ++result.changed;
      continue;
    }
    int delta = 0;
    if (scheme.kind == EmbedKind::HfNoise) {
      const std::size_t r = pos / cover.width, c = pos % cover.width;
      delta = ((r + c) % 2 == 0 ? 1 : -1) * global_sign;
    } else {
      delta = rng.sign();
    }
    const int v = px[pos] + delta;
    if (v < 0 || v > 255) {
      ++result.clamped;
      continue;
    }
    px[pos] = static_cast<std::uint8_t>(v);
    ++result.changed;
  }
  return result;
}

GrayImage embed(const GrayImage& cover, const EmbedScheme& scheme) {
  return embed_with_stats(cover, scheme).stego;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

const std::vector<std::size_t>& TaskSplits::pairs(Split s) const {
  switch (s) {
    case Split::Train: return train;
    case Split::Validation: return validation;
    case Split::Test: return test;
  }
  return test;
}

std::vector<std::size_t> TaskDataset::image_indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t p : splits.pairs(s)) {
    out.push_back(2 * p);
    out.push_back(2 * p + 1);
  }
  return out;
}

TaskDataset build_task(std::size_t task_id, const EmbedScheme& scheme, std::size_t pair_count, std::size_t height,
                       std::size_t width, std::uint64_t seed, std::size_t smoothing_passes) {
  scheme.validate();
  const std::size_t n_train = pair_count * 60 / 100;
  const std::size_t n_val = pair_count * 20 / 100;
  if (pair_count < 10 || n_val == 0 || n_train + n_val >= pair_count) {
    throw ConfigError("pair_count " + std::to_string(pair_count) +
                      " is too small to fill train/validation/test splits (need >= 10)");
  }

  TaskDataset data;
  data.task_id = task_id;
  data.scheme = scheme;
  data.seed = seed;
  data.height = height;
  data.width = width;
  data.smoothing_passes = smoothing_passes;
  const auto covers = generate_covers(pair_count, height, width, seed, smoothing_passes);
  data.images.reserve(2 * pair_count);
  for (std::size_t p = 0; p < pair_count; ++p) {
    EmbedScheme pair_scheme = scheme;
    pair_scheme.seed = mix_seed(scheme.seed, p);
    EmbedResult r = embed_with_stats(covers[p], pair_scheme);
    data.changed_pixels += r.changed;
    data.clamped_noops += r.clamped;
    data.images.push_back(covers[p]);
    data.images.push_back(std::move(r.stego));
    data.labels.push_back(0);
    data.labels.push_back(1);
  }

  std::vector<std::size_t> order(pair_count);
  for (std::size_t i = 0; i < pair_count; ++i) order[i] = i;
  Rng split_rng(mix_seed(seed, 0x5B117ULL));
  split_rng.shuffle(std::span(order));
  auto take = [&](std::size_t from, std::size_t to) {
    std::vector<std::size_t> v(order.begin() + static_cast<std::ptrdiff_t>(from),
                               order.begin() + static_cast<std::ptrdiff_t>(to));
    std::sort(v.begin(), v.end());
    return v;
  };
  data.splits.train = take(0, n_train);
  data.splits.validation = take(n_train, n_train + n_val);
  data.splits.test = take(n_train + n_val, pair_count);
  return data;
}

void image_to_input(const GrayImage& image, std::span<double> out) {
  static constexpr double kKernel[3][3] = {{-1, 2, -1}, {2, -4, 2}, {-1, 2, -1}};
  const auto h = static_cast<std::ptrdiff_t>(image.height);
  const auto w = static_cast<std::ptrdiff_t>(image.width);
  if (out.size() != image.pixels.size()) throw ShapeError("input buffer size does not match image");
  auto clampi = [](std::ptrdiff_t i, std::ptrdiff_t n) { return std::clamp<std::ptrdiff_t>(i, 0, n - 1); };
  for (std::ptrdiff_t r = 0; r < h; ++r) {
    for (std::ptrdiff_t c = 0; c < w; ++c) {
      double acc = 0.0;
      for (std::ptrdiff_t dr = -1; dr <= 1; ++dr) {
        for (std::ptrdiff_t dc = -1; dc <= 1; ++dc) {
          acc += kKernel[dr + 1][dc + 1] *
                 image.pixels[static_cast<std::size_t>(clampi(r + dr, h) * w + clampi(c + dc, w))];
        }
      }
      out[static_cast<std::size_t>(r * w + c)] = std::clamp(acc / 4.0, -kResidualClip, kResidualClip);
    }
  }
}

Tensor image_tensor(const GrayImage& image) {
  std::vector<double> v(image.pixels.size());
  image_to_input(image, v);
  return Tensor({image.height, image.width}, std::move(v));
}

Tensor image_batch(const TaskDataset& data, std::span<const std::size_t> image_indices) {
  if (image_indices.empty()) throw ConfigError("cannot build an empty batch");
  const std::size_t px = data.height * data.width;
  std::vector<double> v(image_indices.size() * px);
  for (std::size_t k = 0; k < image_indices.size(); ++k) {
    image_to_input(data.images.at(image_indices[k]), std::span<double>(v).subspan(k * px, px));
  }
  return Tensor({image_indices.size(), data.height, data.width}, std::move(v));
}

LabelVector label_batch(const TaskDataset& data, std::span<const std::size_t> image_indices) {
  LabelVector labels;
  labels.labels.reserve(image_indices.size());
  for (std::size_t i : image_indices) labels.labels.push_back(data.labels.at(i));
  return labels;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 255 || w == 0 || h == 0) throw IoError(path.string() + " is not an 8-bit P5 PGM");
  in.get();
  GrayImage img{h, w, std::vector<std::uint8_t>(w * h)};
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw IoError("truncated PGM " + path.string());
  return img;
}

void export_task(const TaskDataset& data, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  char name[64];
  for (std::size_t p = 0; p < data.pair_count(); ++p) {
    std::snprintf(name, sizeof name, "cover_%05zu.pgm", p);
    write_pgm(dir / name, data.images[2 * p]);
    std::snprintf(name, sizeof name, "stego_%05zu.pgm", p);
    write_pgm(dir / name, data.images[2 * p + 1]);
  }
  nlohmann::ordered_json manifest;
  manifest["task_id"] = data.task_id;
  manifest["scheme"] = {{"kind", to_string(data.scheme.kind)},
                        {"rate", data.scheme.rate},
                        {"seed", data.scheme.seed},
                        {"window", data.scheme.window}};
  manifest["seed"] = data.seed;
  manifest["height"] = data.height;
  manifest["width"] = data.width;
  manifest["smoothing_passes"] = data.smoothing_passes;
  manifest["pair_count"] = data.pair_count();
  manifest["changed_pixels"] = data.changed_pixels;
  manifest["clamped_noops"] = data.clamped_noops;
  manifest["splits"] = {{"train", data.splits.train},
                        {"validation", data.splits.validation},
                        {"test", data.splits.test}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("failed writing manifest in " + dir.string());
}

}  // namespace stegcl
