// Command-line driver: run, ablate, gradcheck, gen-tasks.
//
// Exit codes: 0 success, 1 configuration error, 2 numeric failure,
// 3 I/O failure.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "stegcl/config.hpp"
#include "stegcl/errors.hpp"
#include "stegcl/harness.hpp"
#include "stegcl/oracle.hpp"
#include "stegcl/tasks.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kNumericError = 2;
constexpr int kIoError = 3;

std::vector<std::uint64_t> parse_seeds(const std::string& list) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || item.front() == '-') throw stegcl::ConfigError("invalid seed '" + item + "'");
    seeds.push_back(v);
  }
  if (seeds.empty()) throw stegcl::ConfigError("--seeds needs at least one seed");
  return seeds;
}

void print_matrix(const stegcl::RunResult& r) {
  std::cout << r.matrix.to_csv();
  std::printf("avg_final_accuracy=%.4f avg_forgetting=%.4f retained_accuracy=%.4f\n", r.metrics.avg_final_accuracy,
              r.metrics.avg_forgetting, r.metrics.retained_accuracy);
}

int gradcheck(std::uint64_t seed) {
  using namespace stegcl::oracle;
  const std::vector<CheckResult> results = {
      check_loss_grad(seed, 20),        check_output_grad(seed, 20),   check_hessian_diagonal(seed, 10),
      check_exact_hessian(seed, 10),    check_penalty_grad(seed, 10),
  };
  bool ok = true;
  for (const CheckResult& r : results) {
    std::printf("%-50s cases=%-3zu coords=%-6zu kinks=%-4zu max_rel_err=%.3e tol=%.0e %s\n", r.name.c_str(),
                r.cases, r.coordinates, r.skipped, r.max_relative_error, r.tolerance, r.passed() ? "PASS" : "FAIL");
    ok = ok && r.passed();
  }
  return ok ? kOk : kNumericError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual-learning steganalysis experiments"};
  app.require_subcommand(1);

  std::string config_path, mode, out_dir, seeds_arg;
  std::uint64_t seed = 0;

  auto* run = app.add_subcommand("run", "train a model through the task sequence");
  run->add_option("--config", config_path, "JSON config file")->required();
  auto* mode_opt = run->add_option("--mode", mode, "override the config's mode");
  auto* run_seed = run->add_option("--seed", seed, "override the config's seed");
  auto* run_out = run->add_option("--out", out_dir, "override the output directory");

  auto* ablate = app.add_subcommand("ablate", "compare mas and the APIE variants over several seeds");
  ablate->add_option("--config", config_path, "JSON config file")->required();
  ablate->add_option("--seeds", seeds_arg, "comma-separated seeds")->required();
  auto* ablate_out = ablate->add_option("--out", out_dir, "override the output directory");

  auto* check = app.add_subcommand("gradcheck", "finite-difference checks of every analytic derivative");
  check->add_option("--seed", seed, "problem seed");

  auto* gen = app.add_subcommand("gen-tasks", "write task datasets as PGM images plus manifests");
  gen->add_option("--config", config_path, "JSON config file")->required();
  gen->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  try {
    if (*check) return gradcheck(seed);

    stegcl::RunConfig cfg = stegcl::load_run_config(config_path);
    if (*run) {
      if (*mode_opt) cfg.mode = stegcl::mode_from_string(mode);
      if (*run_seed) cfg.seed = seed;
      if (*run_out) cfg.output_dir = out_dir;
      cfg = cfg.resolved();
      print_matrix(stegcl::run_sequence(cfg));
    } else if (*ablate) {
      if (*ablate_out) cfg.output_dir = out_dir;
      const auto seeds = parse_seeds(seeds_arg);
      std::cout << stegcl::run_ablation(cfg, seeds).to_csv();
    } else if (*gen) {
      const auto tasks = stegcl::build_task_sequence(cfg);
      for (const auto& task : tasks) {
        char name[32];
        std::snprintf(name, sizeof name, "task_%03zu", task.task_id);
        stegcl::export_task(task, std::filesystem::path(out_dir) / name);
        std::printf("%s %s: %zu pairs, %zu changed pixels, %zu clamped no-ops\n", name,
                    std::string(stegcl::to_string(task.scheme.kind)).c_str(), task.pair_count(),
                    task.changed_pixels, task.clamped_noops);
      }
    }
    return kOk;
  } catch (const stegcl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const stegcl::ShapeError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const stegcl::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumericError;
  } catch (const stegcl::IoError& e) {
    std::cerr << "I/O failure: " << e.what() << '\n';
    return kIoError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O failure: " << e.what() << '\n';
    return kIoError;
  }
}
