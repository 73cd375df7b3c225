#include <cmath>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "stegcl/consolidation.hpp"
#include "stegcl/errors.hpp"
#include "stegcl/oracle.hpp"
#include "stegcl/rng.hpp"
#include "stegcl/serialization.hpp"

using namespace stegcl;
using testing::linear_spec;
using testing::params_with;

namespace {

ImportanceHistory history_of(const std::vector<std::vector<double>>& per_task, std::vector<double> anchor = {}) {
  ImportanceHistory h;
  for (std::size_t t = 0; t < per_task.size(); ++t) h.push({per_task[t], t, Estimator::Apie, 4});
  const auto n = per_task.front().size();
  if (anchor.empty()) anchor.assign(n, 0.0);
  h.set_anchor(params_with(linear_spec(n, 1, false), std::move(anchor)));
  return h;
}

RegularizerConfig config(Accumulation a, double lambda = 1.0) {
  RegularizerConfig cfg;
  cfg.lambda_per_group = {{LambdaGroup::Feature, lambda}, {LambdaGroup::Head, lambda}};
  cfg.accumulation = a;
  return cfg;
}

}  // namespace

TEST_CASE("accumulate_mas sums tasks") {
  CHECK(accumulate_mas(history_of({{1, 2}})).values == std::vector<double>{1, 2});
  CHECK(accumulate_mas(history_of({{1, 2}, {3, 0}})).values == std::vector<double>{4, 2});
  CHECK(accumulate_mas(history_of({{0.5, 3}, {0.5, 3}, {0.5, 3}})).values == std::vector<double>{1.5, 9});
  CHECK_THROWS(accumulate_mas(ImportanceHistory{}));
}

TEST_CASE("peak_weight") {
  CHECK(peak_weight(history_of({{5}}), 0.5, 0.5).values == std::vector<double>{5});
  CHECK(peak_weight(history_of({{4}, {2}}), 0.5, 0.5).values == std::vector<double>{3.5});
  CHECK(peak_weight(history_of({{1, 7}, {4, 2}, {3, 5}}), 1, 0).values == std::vector<double>{4, 7});
  CHECK_THROWS(peak_weight(ImportanceHistory{}, 0.5, 0.5));
}

TEST_CASE("peak_weight with alpha 0 and beta T is the MAS sum") {
  const std::vector<std::vector<double>> tasks{{0.1, 2.5, 0}, {0.7, 0.3, 1e-3}, {3.25, 0, 8}};
  for (std::size_t t = 1; t <= tasks.size(); ++t) {
    const auto h = history_of({tasks.begin(), tasks.begin() + static_cast<std::ptrdiff_t>(t)});
    CHECK(peak_weight(h, 0, static_cast<double>(t)).values == accumulate_mas(h).values);
  }
}

TEST_CASE("alpha 0, beta T matches the sum exactly on random histories") {
  Rng rng(77);
  for (std::size_t c = 0; c < 50; ++c) {
    ImportanceHistory h;
    const std::size_t tasks = 1 + c % 7;
    for (std::size_t t = 0; t < tasks; ++t) {
      std::vector<double> v(23);
      for (double& x : v) x = rng.uniform(0.0, 10.0);
      h.push({v, t, Estimator::Mas, 1});
    }
    CHECK(peak_weight(h, 0, static_cast<double>(tasks)).values == accumulate_mas(h).values);
  }
}

TEST_CASE("peak component never decreases as tasks are appended") {
  ImportanceHistory h;
  std::vector<double> prev(3, 0.0);
  const std::vector<std::vector<double>> tasks{{1, 0, 2}, {0.5, 4, 2}, {3, 1, 0}, {0, 0, 0}};
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    h.push({tasks[t], t, Estimator::Mas, 1});
    const auto peak = peak_weight(h, 1, 0).values;
    for (std::size_t i = 0; i < 3; ++i) CHECK(peak[i] >= prev[i]);
    prev = peak;
  }
}

TEST_CASE("history rejects mixed layouts and estimators") {
  ImportanceHistory h;
  h.push({{1, 2}, 0, Estimator::Mas, 1});
  CHECK_THROWS(h.push({{1, 2, 3}, 1, Estimator::Mas, 1}));
  CHECK_THROWS(h.push({{1, 2}, 1, Estimator::Apie, 1}));
}

TEST_CASE("penalty and gradient on one parameter") {
  const auto h = history_of({{2}}, {1.0});
  const auto theta = params_with(linear_spec(1, 1, false), {1.5});
  const auto cfg = config(Accumulation::MasSum);
  CHECK(penalty(theta, h, cfg) == 0.5);
  CHECK(penalty_grad(theta, h, cfg).values == std::vector<double>{2.0});
}

TEST_CASE("penalty vanishes at the anchor or without lambda") {
  const auto h = history_of({{2, 1, 3}, {1, 1, 0}}, {0.5, -1, 2});
  const auto at_anchor = *h.anchor();
  for (auto a : {Accumulation::MasSum, Accumulation::PeakWeight}) {
    CHECK(penalty(at_anchor, h, config(a)) == 0.0);
    for (double g : penalty_grad(at_anchor, h, config(a)).values) CHECK(g == 0.0);
    auto moved = at_anchor;
    moved.values = {9, 9, 9};
    CHECK(penalty(moved, h, config(a, 0.0)) == 0.0);
    CHECK(penalty(moved, h, config(a)) > 0.0);
  }
}

TEST_CASE("penalty is linear in importance") {
  const std::vector<std::vector<double>> tasks{{0.2, 1.1, 3}, {2, 0.4, 0.3}};
  const auto theta = params_with(linear_spec(3, 1, false), {0.7, -0.2, 1.9});
  for (auto a : {Accumulation::MasSum, Accumulation::PeakWeight}) {
    const double base = penalty(theta, history_of(tasks), config(a));
    auto scaled = tasks;
    for (auto& t : scaled) {
      for (double& v : t) v *= 4.0;
    }
    CHECK(penalty(theta, history_of(scaled), config(a)) == doctest::Approx(4.0 * base).epsilon(1e-15));
  }
}

TEST_CASE("penalty uses the per-group lambda") {
  auto spec = linear_spec(2, 2, true);
  spec.hidden_widths = {1};
  auto anchor = params_with(spec, std::vector<double>(parameter_count(spec), 0.0));
  ImportanceHistory h;
  h.push({std::vector<double>(anchor.size(), 1.0), 0, Estimator::Mas, 1});
  h.set_anchor(anchor);
  auto theta = anchor;
  theta.values.assign(theta.size(), 1.0);
  RegularizerConfig cfg = config(Accumulation::MasSum);
  cfg.lambda_per_group = {{LambdaGroup::Feature, 1.2}, {LambdaGroup::Head, 1.0}};
  const std::size_t feature = 2 + 1;  // dense1: 2 weights + 1 bias
  const std::size_t head = theta.size() - feature;
  CHECK(penalty(theta, h, cfg) == doctest::Approx(1.2 * feature + 1.0 * head).epsilon(1e-15));
}

TEST_CASE("penalty rejects layout mismatch") {
  const auto h = history_of({{1, 1}});
  CHECK_THROWS(penalty(params_with(linear_spec(3, 1, false), {0, 0, 0}), h, config(Accumulation::MasSum)));
  ImportanceHistory no_anchor;
  no_anchor.push({{1}, 0, Estimator::Mas, 1});
  CHECK_THROWS(penalty(params_with(linear_spec(1, 1, false), {0}), no_anchor, config(Accumulation::MasSum)));
}

TEST_CASE("regularizer config validation") {
  RegularizerConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.alpha = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.lambda_per_group[LambdaGroup::Head] = std::nan("");
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("penalty gradient matches finite differences") { CHECK(oracle::check_penalty_grad(3, 10).passed()); }

TEST_CASE("history round trip") {
  const auto dir = testing::temp_dir("history");
  const auto spec = linear_spec(3, 1, false);
  const auto h = history_of({{0.1, 0.2, 0.3}, {1.0 / 3.0, 0, 7}}, {1, 2, 3});
  save_history(dir, h, spec);
  CHECK(std::filesystem::exists(dir / "task_000.imp"));
  CHECK(std::filesystem::exists(dir / "task_001.imp"));
  CHECK(std::filesystem::exists(dir / "anchor.ckpt"));
  const auto back = load_history(dir);
  CHECK(back.per_task() == h.per_task());
  CHECK(*back.anchor() == *h.anchor());
}
