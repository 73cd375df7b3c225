#include "stegcl/serialization.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "stegcl/config.hpp"
#include "stegcl/errors.hpp"

namespace stegcl {

namespace {

constexpr std::string_view kCheckpointMagic = "STEGCL-CKPT 1\n";
constexpr std::string_view kImportanceMagic = "STEGCL-IMP 1\n";

void write_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b{};
  for (std::size_t i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFU);
  out.write(b.data(), 8);
}

std::uint64_t read_u64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  in.read(reinterpret_cast<char*>(b.data()), 8);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_file(const std::filesystem::path& path, std::string_view magic, const nlohmann::ordered_json& header,
                const std::vector<double>& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::string h = header.dump();
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  write_u64(out, h.size());
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  write_u64(out, values.size());
  for (double v : values) write_u64(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw IoError("failed writing " + path.string());
}

struct RawFile {
  nlohmann::json header;
  std::vector<double> values;
};

RawFile read_file(const std::filesystem::path& path, std::string_view magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (!in || got != magic) throw IoError(path.string() + " has the wrong file signature");
  const std::uint64_t hlen = read_u64(in);
  if (!in || hlen > (1U << 26)) throw IoError(path.string() + " has a corrupt header length");
  std::string h(hlen, '\0');
  in.read(h.data(), static_cast<std::streamsize>(hlen));
  RawFile raw;
  try {
    raw.header = nlohmann::json::parse(h);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + " has a corrupt header: " + e.what());
  }
  const std::uint64_t count = read_u64(in);
  if (!in || count > (1ULL << 32)) throw IoError(path.string() + " has a corrupt value count");
  raw.values.resize(count);
  for (double& v : raw.values) v = std::bit_cast<double>(read_u64(in));
  if (!in) throw IoError(path.string() + " is truncated");
  return raw;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelSpec& spec, const ParamVector& params) {
  params.validate();
  nlohmann::ordered_json header;
  header["spec"] = to_json(spec);
  nlohmann::ordered_json segs = nlohmann::ordered_json::array();
  for (const Segment& s : params.segments) {
    segs.push_back({{"name", s.name}, {"offset", s.offset}, {"length", s.length}, {"group", to_string(s.group)}});
  }
  header["segments"] = segs;
  write_file(path, kCheckpointMagic, header, params.values);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  RawFile raw = read_file(path, kCheckpointMagic);
  Checkpoint ckpt;
  try {
    ckpt.spec = model_spec_from_json(raw.header.at("spec"));
    for (const auto& s : raw.header.at("segments")) {
      ckpt.params.segments.push_back({s.at("name").get<std::string>(), s.at("offset").get<std::size_t>(),
                                      s.at("length").get<std::size_t>(),
                                      lambda_group_from_string(s.at("group").get<std::string>())});
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + " has a malformed header: " + e.what());
  }
  ckpt.params.values = std::move(raw.values);
  ckpt.params.validate();
  return ckpt;
}

void save_importance(const std::filesystem::path& path, const ImportanceVector& importance) {
  nlohmann::ordered_json header;
  header["source_task"] = importance.source_task;
  header["estimator"] = to_string(importance.estimator);
  header["n_samples"] = importance.n_samples;
  write_file(path, kImportanceMagic, header, importance.values);
}

ImportanceVector load_importance(const std::filesystem::path& path) {
  RawFile raw = read_file(path, kImportanceMagic);
  ImportanceVector imp;
  try {
    imp.source_task = raw.header.at("source_task").get<std::size_t>();
    imp.estimator = estimator_from_string(raw.header.at("estimator").get<std::string>());
    imp.n_samples = raw.header.at("n_samples").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + " has a malformed header: " + e.what());
  }
  imp.values = std::move(raw.values);
  imp.validate();
  return imp;
}

std::string importance_file_name(std::size_t task) {
  char name[32];
  std::snprintf(name, sizeof name, "task_%03zu.imp", task);
  return name;
}

void save_history(const std::filesystem::path& dir, const ImportanceHistory& history, const ModelSpec& spec) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t t = 0; t < history.size(); ++t) {
    save_importance(dir / importance_file_name(t), history.per_task()[t]);
  }
  if (history.anchor()) save_checkpoint(dir / "anchor.ckpt", spec, *history.anchor());
}

ImportanceHistory load_history(const std::filesystem::path& dir) {
  ImportanceHistory history;
  for (std::size_t t = 0;; ++t) {
    const auto path = dir / importance_file_name(t);
    if (!std::filesystem::exists(path)) break;
    history.push(load_importance(path));
  }
  if (std::filesystem::exists(dir / "anchor.ckpt")) history.set_anchor(load_checkpoint(dir / "anchor.ckpt").params);
  return history;
}

}  // namespace stegcl
