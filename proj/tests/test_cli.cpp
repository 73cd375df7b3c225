#include <cstdlib>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"
#include "helpers.hpp"

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(STEGCL_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p.string();
}

}  // namespace

TEST_CASE("cli exit codes") {
  const auto dir = testing::temp_dir("cli");
  const std::string small = R"("tasks": {"pair_count": 20, "height": 8, "width": 8, "sequence": [{"kind": "pm1-uniform"}]},
      "model": {"kind": "mlp", "hidden_widths": [4], "input_shape": [8, 8]},
      "training": {"epochs": 1}, "importance": {"n_samples": 4})";

  CHECK(run("--help") == 0);
  CHECK(run("run --config " + write(dir / "ok.json", "{" + small + "}") + " --out " + (dir / "ok").string()) == 0);
  CHECK(std::filesystem::exists(dir / "ok" / "accuracy_matrix.csv"));
  CHECK(run("run --config " + write(dir / "bad.json", R"({"unknown": 1})")) == 1);
  CHECK(run("run --config " + write(dir / "syntax.json", "{")) == 1);
  CHECK(run("run --config " + (dir / "missing.json").string()) == 3);
  CHECK(run("run --config " + (dir / "ok.json").string() + " --mode nonsense") == 1);
  const auto diverge = write(dir / "nan.json", R"({"tasks": {"pair_count": 20, "height": 8, "width": 8,
      "sequence": [{"kind": "pm1-uniform"}]}, "model": {"kind": "mlp", "hidden_widths": [4], "input_shape": [8, 8]},
      "training": {"epochs": 2, "lr_initial": 1e300}})");
  CHECK(run("run --config " + diverge + " --out " + (dir / "nan").string()) == 2);
  CHECK(run("gen-tasks --config " + (dir / "ok.json").string() + " --out " + (dir / "gen").string()) == 0);
  CHECK(std::filesystem::exists(dir / "gen"));
  write(dir / "blocker", "x");
  CHECK(run("run --config " + (dir / "ok.json").string() + " --out " + (dir / "blocker" / "sub").string()) == 3);
}
