#pragma once

#include <filesystem>
#include <string>

#include "stegcl/consolidation.hpp"
#include "stegcl/importance.hpp"
#include "stegcl/model_spec.hpp"
#include "stegcl/tensor.hpp"

namespace stegcl {

// Binary files: a magic line, a little-endian u64 header length, a JSON
// header, a u64 value count and the values as little-endian IEEE-754 bit
// patterns. Values round-trip bit-exactly.

struct Checkpoint {
  ModelSpec spec;
  ParamVector params;
};

void save_checkpoint(const std::filesystem::path& path, const ModelSpec& spec, const ParamVector& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void save_importance(const std::filesystem::path& path, const ImportanceVector& importance);
ImportanceVector load_importance(const std::filesystem::path& path);

/// task_000.imp, task_001.imp, ... and anchor.ckpt under `dir`.
std::string importance_file_name(std::size_t task);
void save_history(const std::filesystem::path& dir, const ImportanceHistory& history, const ModelSpec& spec);
ImportanceHistory load_history(const std::filesystem::path& dir);

}  // namespace stegcl
