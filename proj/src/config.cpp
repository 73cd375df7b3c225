#include "stegcl/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <initializer_list>
#include <string>

#include "stegcl/errors.hpp"

namespace stegcl {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::Finetune: return "finetune";
    case Mode::Reference: return "reference";
    case Mode::Mas: return "mas";
    case Mode::ApieFull: return "apie-full";
    case Mode::ApieCurvatureOnly: return "apie-curvature-only";
    case Mode::ApiePeakweightOnly: return "apie-peakweight-only";
  }
  return "?";
}

Mode mode_from_string(std::string_view name) {
  for (Mode m : {Mode::Finetune, Mode::Reference, Mode::Mas, Mode::ApieFull, Mode::ApieCurvatureOnly,
                 Mode::ApiePeakweightOnly}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown mode '" + std::string(name) + "'");
}

bool is_regularized(Mode mode) { return mode != Mode::Finetune && mode != Mode::Reference; }

Estimator estimator_for(Mode mode) {
  return mode == Mode::ApieFull || mode == Mode::ApieCurvatureOnly ? Estimator::Apie : Estimator::Mas;
}

Accumulation accumulation_for(Mode mode) {
  return mode == Mode::ApieFull || mode == Mode::ApiePeakweightOnly ? Accumulation::PeakWeight
                                                                    : Accumulation::MasSum;
}

std::string_view to_string(CheckpointSelection s) {
  return s == CheckpointSelection::BestValidation ? "best-val" : "last";
}

CheckpointSelection checkpoint_selection_from_string(std::string_view name) {
  if (name == "best-val") return CheckpointSelection::BestValidation;
  if (name == "last") return CheckpointSelection::Last;
  throw ConfigError("unknown checkpoint selection '" + std::string(name) + "' (expected best-val or last)");
}

std::vector<EmbedScheme> TaskSequenceConfig::default_schemes(double rate) {
  return {
      {EmbedKind::Pm1Adaptive, rate, 0, 3},
      {EmbedKind::Pm1Uniform, rate, 0, 3},
      {EmbedKind::Pm1Adaptive, rate, 0, 5},
      {EmbedKind::HfNoise, rate, 0, 3},
  };
}

void RunConfig::validate() const {
  model.validate_classifier();
  if (tasks.schemes.empty()) throw ConfigError("task sequence is empty");
  validate_sequence(tasks.schemes);
  if (tasks.height < 8 || tasks.width < 8) throw ConfigError("task images must be at least 8x8");
  if (tasks.pair_count < 10) throw ConfigError("tasks.pair_count must be >= 10");
  const std::size_t pixels = tasks.height * tasks.width;
  const std::size_t inputs = std::accumulate(model.input_shape.begin(), model.input_shape.end(), std::size_t{1},
                                             std::multiplies<>());
  if (model.kind == ModelKind::MiniCnn
          ? model.input_shape != std::vector<std::size_t>{tasks.height, tasks.width}
          : inputs != pixels) {
    throw ConfigError("model input_shape " + shape_string(model.input_shape) + " does not fit " +
                      std::to_string(tasks.height) + "x" + std::to_string(tasks.width) + " task images");
  }
  if (training.epochs == 0) throw ConfigError("training.epochs must be >= 1");
  if (training.batch_size == 0) throw ConfigError("training.batch_size must be >= 1");
  if (!(training.lr_initial > 0.0) || !std::isfinite(training.lr_initial)) {
    throw ConfigError("training.lr_initial must be positive");
  }
  if (!(training.lr_later_factor > 0.0 && training.lr_later_factor <= 1.0)) {
    throw ConfigError("training.lr_later_factor must lie in (0, 1]");
  }
  regularizer.validate();
  if (n_importance == 0) throw ConfigError("importance.n_samples must be >= 1");
}

RunConfig RunConfig::resolved() const {
  RunConfig r = *this;
  r.regularizer.accumulation = accumulation_for(mode);
  return r;
}

namespace {

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + " must be an object");
  for (const auto& item : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      throw ConfigError("unknown key '" + item.key() + "' in " + std::string(where));
    }
  }
}

std::uint64_t get_uint(const json& obj, const char* key, std::string_view where) {
  const json& v = obj.at(key);
  if (!v.is_number_unsigned()) {
    throw ConfigError(std::string(where) + "." + key + " must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

double get_number(const json& obj, const char* key, std::string_view where) {
  const json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(std::string(where) + "." + key + " must be a number");
  return v.get<double>();
}

std::string get_string(const json& obj, const char* key, std::string_view where) {
  const json& v = obj.at(key);
  if (!v.is_string()) throw ConfigError(std::string(where) + "." + key + " must be a string");
  return v.get<std::string>();
}

std::vector<std::size_t> get_sizes(const json& obj, const char* key, std::string_view where) {
  const json& v = obj.at(key);
  if (!v.is_array()) throw ConfigError(std::string(where) + "." + key + " must be an array");
  std::vector<std::size_t> out;
  for (const json& e : v) {
    if (!e.is_number_unsigned()) throw ConfigError(std::string(where) + "." + key + " must hold integers >= 0");
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

}  // namespace

ordered_json to_json(const ModelSpec& spec) {
  ordered_json j;
  j["kind"] = to_string(spec.kind);
  j["conv_channels"] = spec.conv_channels;
  j["hidden_widths"] = spec.hidden_widths;
  j["input_shape"] = spec.input_shape;
  j["num_classes"] = spec.num_classes;
  j["bias"] = spec.bias;
  ordered_json groups = ordered_json::object();
  for (const auto& [layer, group] : spec.lambda_groups) groups[layer] = to_string(group);
  j["lambda_groups"] = groups;
  return j;
}

ModelSpec model_spec_from_json(const json& j) {
  constexpr std::string_view where = "model";
  check_keys(j, {"kind", "conv_channels", "hidden_widths", "input_shape", "num_classes", "bias", "lambda_groups"},
             where);
  ModelSpec spec;
  if (j.contains("kind")) spec.kind = model_kind_from_string(get_string(j, "kind", where));
  spec = spec.kind == ModelKind::Mlp ? ModelSpec::default_mlp() : ModelSpec::default_mini_cnn();
  if (j.contains("conv_channels")) spec.conv_channels = get_sizes(j, "conv_channels", where);
  if (j.contains("hidden_widths")) spec.hidden_widths = get_sizes(j, "hidden_widths", where);
  if (j.contains("input_shape")) spec.input_shape = get_sizes(j, "input_shape", where);
  if (j.contains("num_classes")) spec.num_classes = get_uint(j, "num_classes", where);
  if (j.contains("bias")) {
    if (!j.at("bias").is_boolean()) throw ConfigError("model.bias must be a boolean");
    spec.bias = j.at("bias").get<bool>();
  }
  if (j.contains("lambda_groups")) {
    const json& g = j.at("lambda_groups");
    if (!g.is_object()) throw ConfigError("model.lambda_groups must be an object");
    for (const auto& item : g.items()) {
      if (!item.value().is_string()) throw ConfigError("model.lambda_groups values must be strings");
      spec.lambda_groups[item.key()] = lambda_group_from_string(item.value().get<std::string>());
    }
  }
  spec.validate();
  return spec;
}

ordered_json to_json(const RunConfig& cfg) {
  ordered_json j;
  j["mode"] = to_string(cfg.mode);
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir.generic_string();
  j["workers"] = cfg.workers;
  j["model"] = to_json(cfg.model);
  ordered_json seq = ordered_json::array();
  for (const EmbedScheme& s : cfg.tasks.schemes) {
    seq.push_back({{"kind", to_string(s.kind)}, {"rate", s.rate}, {"window", s.window}});
  }
  j["tasks"] = {{"pair_count", cfg.tasks.pair_count},
                {"height", cfg.tasks.height},
                {"width", cfg.tasks.width},
                {"smoothing_passes", cfg.tasks.smoothing_passes},
                {"sequence", seq}};
  j["training"] = {{"epochs", cfg.training.epochs},
                   {"batch_size", cfg.training.batch_size},
                   {"lr_initial", cfg.training.lr_initial},
                   {"lr_later_factor", cfg.training.lr_later_factor},
                   {"checkpoint", to_string(cfg.training.selection)}};
  ordered_json lambda = ordered_json::object();
  for (const auto& [group, value] : cfg.regularizer.lambda_per_group) lambda[std::string(to_string(group))] = value;
  j["regularizer"] = {{"lambda", lambda},
                      {"alpha", cfg.regularizer.alpha},
                      {"beta", cfg.regularizer.beta},
                      {"accumulation", to_string(accumulation_for(cfg.mode))}};
  j["importance"] = {{"n_samples", cfg.n_importance}, {"hessian", to_string(cfg.hessian)}};
  return j;
}

RunConfig run_config_from_json(const json& j) {
  try {
    check_keys(j, {"mode", "seed", "output_dir", "workers", "model", "tasks", "training", "regularizer", "importance"},
               "config");
    RunConfig cfg;
    if (j.contains("mode")) cfg.mode = mode_from_string(get_string(j, "mode", "config"));
    if (j.contains("seed")) cfg.seed = get_uint(j, "seed", "config");
    if (j.contains("output_dir")) cfg.output_dir = get_string(j, "output_dir", "config");
    if (j.contains("workers")) cfg.workers = get_uint(j, "workers", "config");

    if (j.contains("tasks")) {
      const json& t = j.at("tasks");
      check_keys(t, {"pair_count", "height", "width", "smoothing_passes", "rate", "sequence"}, "tasks");
      if (t.contains("pair_count")) cfg.tasks.pair_count = get_uint(t, "pair_count", "tasks");
      if (t.contains("height")) cfg.tasks.height = get_uint(t, "height", "tasks");
      if (t.contains("width")) cfg.tasks.width = get_uint(t, "width", "tasks");
      if (t.contains("smoothing_passes")) cfg.tasks.smoothing_passes = get_uint(t, "smoothing_passes", "tasks");
      const double rate = t.contains("rate") ? get_number(t, "rate", "tasks") : 0.4;
      cfg.tasks.schemes = TaskSequenceConfig::default_schemes(rate);
      if (t.contains("sequence")) {
        const json& seq = t.at("sequence");
        if (!seq.is_array()) throw ConfigError("tasks.sequence must be an array");
        cfg.tasks.schemes.clear();
        for (const json& s : seq) {
          check_keys(s, {"kind", "rate", "window"}, "tasks.sequence[]");
          EmbedScheme scheme;
          scheme.kind = embed_kind_from_string(get_string(s, "kind", "tasks.sequence[]"));
          scheme.rate = s.contains("rate") ? get_number(s, "rate", "tasks.sequence[]") : rate;
          if (s.contains("window")) scheme.window = get_uint(s, "window", "tasks.sequence[]");
          cfg.tasks.schemes.push_back(scheme);
        }
      }
    }

    cfg.model = ModelSpec::default_mini_cnn(cfg.tasks.height, cfg.tasks.width);
    if (j.contains("model")) {
      json m = j.at("model");
      if (m.is_object() && !m.contains("input_shape")) {
        m["input_shape"] = std::vector<std::size_t>{cfg.tasks.height, cfg.tasks.width};
      }
      cfg.model = model_spec_from_json(m);
    }

    if (j.contains("training")) {
      const json& t = j.at("training");
      check_keys(t, {"epochs", "batch_size", "lr_initial", "lr_later_factor", "checkpoint"}, "training");
      if (t.contains("epochs")) cfg.training.epochs = get_uint(t, "epochs", "training");
      if (t.contains("batch_size")) cfg.training.batch_size = get_uint(t, "batch_size", "training");
      if (t.contains("lr_initial")) cfg.training.lr_initial = get_number(t, "lr_initial", "training");
      if (t.contains("lr_later_factor")) cfg.training.lr_later_factor = get_number(t, "lr_later_factor", "training");
      if (t.contains("checkpoint")) {
        cfg.training.selection = checkpoint_selection_from_string(get_string(t, "checkpoint", "training"));
      }
    }

    if (j.contains("regularizer")) {
      const json& r = j.at("regularizer");
      check_keys(r, {"lambda", "alpha", "beta", "accumulation"}, "regularizer");
      if (r.contains("lambda")) {
        const json& l = r.at("lambda");
        check_keys(l, {"feature", "head"}, "regularizer.lambda");
        if (l.contains("feature")) cfg.regularizer.lambda_per_group[LambdaGroup::Feature] =
            get_number(l, "feature", "regularizer.lambda");
        if (l.contains("head")) cfg.regularizer.lambda_per_group[LambdaGroup::Head] =
            get_number(l, "head", "regularizer.lambda");
      }
      if (r.contains("alpha")) cfg.regularizer.alpha = get_number(r, "alpha", "regularizer");
      if (r.contains("beta")) cfg.regularizer.beta = get_number(r, "beta", "regularizer");
      // Accumulation follows the mode; an explicit value must agree with it.
      if (r.contains("accumulation") &&
          accumulation_from_string(get_string(r, "accumulation", "regularizer")) != accumulation_for(cfg.mode)) {
        throw ConfigError("regularizer.accumulation conflicts with mode " + std::string(to_string(cfg.mode)));
      }
    }

    if (j.contains("importance")) {
      const json& im = j.at("importance");
      check_keys(im, {"n_samples", "hessian"}, "importance");
      if (im.contains("n_samples")) cfg.n_importance = get_uint(im, "n_samples", "importance");
      if (im.contains("hessian")) cfg.hessian = hessian_method_from_string(get_string(im, "hessian", "importance"));
    }

    cfg.validate();
    return cfg.resolved();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace stegcl
