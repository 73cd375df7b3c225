// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "stegcl/config.hpp"
#include "stegcl/consolidation.hpp"
#include "stegcl/errors.hpp"
#include "stegcl/harness.hpp"
#include "stegcl/importance.hpp"
#include "stegcl/oracle.hpp"
#include "stegcl/parallel.hpp"
#include "stegcl/rng.hpp"
#include "stegcl/tasks.hpp"

using namespace stegcl;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& body) {
  const auto start = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  if (!o.pass) ++failures;
  std::printf("[%s] criterion %d: %s (%.1fs) %s\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), secs,
              o.detail.c_str());
  std::fflush(stdout);
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ParamVector scalar_params(double theta, ModelSpec& spec) {
  spec.kind = ModelKind::Mlp;
  spec.input_shape = {1};
  spec.num_classes = 1;
  spec.bias = false;
  ParamVector p = init_params(spec, 0);
  p.values = {theta};
  return p;
}

Outcome oracle_outcome(const oracle::CheckResult& r, double budget, double secs) {
  const bool fast = secs < budget;
  return {r.passed() && fast, std::to_string(r.cases) + " cases, " + std::to_string(r.coordinates) +
                                  " coordinates (" + std::to_string(r.skipped) +
                                  " skipped at ReLU kinks), max rel err " + fmt("%.3g", r.max_relative_error) + " (tol " +
                                  fmt("%.0e", r.tolerance) + ")" + (fast ? "" : ", over time budget")};
}

}  // namespace

int main() {
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  const auto work = std::filesystem::temp_directory_path() / "stegcl_acceptance";
  std::filesystem::remove_all(work);
  std::filesystem::create_directories(work);

  report(1, "loss gradient vs central differences", [] {
    const auto t = Clock::now();
    const auto r = oracle::check_loss_grad(101, 20);
    return oracle_outcome(r, 30.0, seconds_since(t));
  });

  report(2, "grad-fd Hessian diagonal vs second differences", [] {
    const auto t = Clock::now();
    const auto r = oracle::check_hessian_diagonal(202, 10);
    return oracle_outcome(r, 60.0, seconds_since(t));
  });

  report(3, "analytic importance of F = theta * x", [] {
    ModelSpec spec;
    const ParamVector p = scalar_params(1.0, spec);
    const Tensor x({1}, {2.0});
    const double g = output_l2sq_grad(p, spec, x).values[0];
    const double h = output_l2sq_diag_hessian(p, spec, x, HessianMethod::GradFd).values[0];
    const double k = curvature(g, h);
    const std::vector<Tensor> samples{x};
    const double omega = apie_importance(p, spec, samples, HessianMethod::GradFd).values[0];
    const double k_ref = 8.0 / std::pow(65.0, 1.5);
    const double omega_ref = (std::log(1.0 + k_ref) + 1.0) * 8.0;
    const double err = std::max({std::abs(g - 8), std::abs(h - 8), std::abs(k - k_ref), std::abs(omega - omega_ref)});
    return Outcome{err <= 1e-9, "g=" + fmt("%.12g", g) + " h=" + fmt("%.12g", h) + " kappa=" + fmt("%.9g", k) +
                                    " omega=" + fmt("%.9g", omega) + " max err " + fmt("%.2g", err)};
  });

  report(4, "zero curvature and zero lambda reduce to MAS and finetune", [&] {
    double worst = 0.0;
    for (std::size_t c = 0; c < 6; ++c) {
      const auto prob = oracle::random_problem(404, c);
      std::vector<Tensor> samples;
      for (std::size_t i = 0; i < prob.batch.dim(0); ++i) samples.push_back(prob.batch.row(i));
      const auto mas = mas_importance(prob.params, prob.spec, samples);
      const auto apie = apie_importance(prob.params, prob.spec, samples, HessianMethod::Zero);
      for (std::size_t i = 0; i < mas.size(); ++i) worst = std::max(worst, std::abs(mas.values[i] - apie.values[i]));
    }
    RunConfig cfg;
    cfg.seed = 4;
    cfg.tasks.pair_count = 200;
    cfg.training.epochs = 5;
    cfg.n_importance = 32;
    cfg.mode = Mode::Finetune;
    const auto finetune = run_sequence(cfg).final_params;
    bool identical = true;
    for (Mode mode : ablation_modes()) {
      RunConfig reg = cfg;
      reg.mode = mode;
      reg.regularizer.lambda_per_group = {{LambdaGroup::Feature, 0.0}, {LambdaGroup::Head, 0.0}};
      identical = identical && run_sequence(reg).final_params == finetune;
    }
    return Outcome{worst <= 1e-12 && identical, "max |apie-mas| " + fmt("%.2g", worst) +
                                                    ", lambda=0 runs bit-identical to finetune: " +
                                                    (identical ? "yes" : "no")};
  });

  report(5, "peak-weight algebra", [] {
    ImportanceHistory h;
    h.push({{4.0}, 0, Estimator::Apie, 1});
    h.push({{2.0}, 1, Estimator::Apie, 1});
    const double pw = peak_weight(h, 0.5, 0.5).values[0];
    bool sums = true;
    Rng rng(505);
    for (std::size_t c = 0; c < 20; ++c) {
      ImportanceHistory r;
      const std::size_t tasks = 1 + c % 5;
      for (std::size_t t = 0; t < tasks; ++t) {
        std::vector<double> v(17);
        for (double& x : v) x = rng.uniform(0.0, 10.0);
        r.push({v, t, Estimator::Mas, 1});
      }
      sums = sums && peak_weight(r, 0.0, static_cast<double>(tasks)).values == accumulate_mas(r).values;
    }
    return Outcome{pw == 3.5 && sums,
                   "history (4,2) -> " + fmt("%.17g", pw) + ", alpha=0 beta=T equals MAS sum: " + (sums ? "yes" : "no")};
  });

  report(6, "penalty gradient vs central differences", [] {
    const auto t = Clock::now();
    const auto r = oracle::check_penalty_grad(606, 10);
    return oracle_outcome(r, 60.0, seconds_since(t));
  });

  // Criteria 7 and 8 share the default-sequence runs.
  RunConfig base;
  base.workers = 0;
  base.output_dir = work / "ablation";
  const auto runs_start = Clock::now();
  std::optional<AblationTable> ablation;
  std::vector<RunResult> finetune(seeds.size());
  std::string run_error;
  try {
    ablation = run_ablation(base, seeds);
    parallel_for(seeds.size(), default_workers(), [&](std::size_t i) {
      RunConfig cfg = base;
      cfg.mode = Mode::Finetune;
      cfg.seed = seeds[i];
      cfg.workers = 1;
      cfg.output_dir = work / ("finetune_seed" + std::to_string(seeds[i]));
      finetune[i] = run_sequence(cfg);
    });
  } catch (const std::exception& e) {
    run_error = e.what();
  }
  const double runs_secs = seconds_since(runs_start);

  report(7, "forgetting under finetune, mitigation under apie-full", [&] {
    if (!run_error.empty()) return Outcome{false, "runs failed: " + run_error};
    const std::size_t T = base.tasks.schemes.size();
    std::size_t forgot = 0, retained_better = 0;
    std::string detail;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      const auto& m = finetune[i].matrix;
      const double drop = m.value(0, 0) - m.value(T - 1, 0);
      const auto& apie = ablation->row(Mode::ApieFull, seeds[i]);
      const double ft_retained = finetune[i].metrics.retained_accuracy;
      forgot += drop >= 0.10;
      retained_better += apie.retained > ft_retained;
      detail += "\n    seed " + std::to_string(seeds[i]) + ": finetune A00=" + fmt("%.4f", m.value(0, 0)) +
                " final0=" + fmt("%.4f", m.value(T - 1, 0)) + " drop=" + fmt("%.4f", drop) +
                " | retained(0..T-2) finetune=" + fmt("%.4f", ft_retained) + " apie-full=" + fmt("%.4f", apie.retained) +
                " | last task finetune=" + fmt("%.4f", m.value(T - 1, T - 1)) +
                " apie-full=" + fmt("%.4f", apie.final_accuracy[T - 1]);
    }
    const bool pass = forgot >= 4 && retained_better >= 4;
    return Outcome{pass, "drop>=0.10 on " + std::to_string(forgot) + "/5 seeds, apie-full retains more on " +
                             std::to_string(retained_better) + "/5 seeds; 25 default runs took " +
                             fmt("%.0f", runs_secs) + "s on " + std::to_string(default_workers()) + " core(s)" +
                             detail};
  });

  report(8, "ablation: apie-full vs mas", [&] {
    if (!run_error.empty()) return Outcome{false, "runs failed: " + run_error};
    std::set<Mode> modes;
    for (const auto& row : ablation->per_mode) modes.insert(row.mode);
    const bool complete = modes.size() == 4 && slurp(base.output_dir / "ablation.csv").find("apie-full") != std::string::npos;
    std::size_t wins = 0;
    std::string detail;
    for (std::uint64_t s : seeds) {
      const double a = ablation->row(Mode::ApieFull, s).retained;
      const double m = ablation->row(Mode::Mas, s).retained;
      wins += a >= m;
      detail += "\n    seed " + std::to_string(s) + ": retained apie-full=" + fmt("%.4f", a) + " mas=" + fmt("%.4f", m) +
                " apie-curvature-only=" + fmt("%.4f", ablation->row(Mode::ApieCurvatureOnly, s).retained) +
                " apie-peakweight-only=" + fmt("%.4f", ablation->row(Mode::ApiePeakweightOnly, s).retained);
    }
    return Outcome{complete && wins >= 3, "apie-full >= mas on " + std::to_string(wins) + "/5 seeds, table has " +
                                              std::to_string(modes.size()) + " modes" + detail};
  });

  report(9, "identical configs give byte-identical CSVs", [&] {
    if (!run_error.empty()) return Outcome{false, "runs failed: " + run_error};
    RunConfig cfg = base;
    cfg.mode = Mode::ApieFull;
    cfg.seed = seeds.front();
    cfg.workers = 0;
    cfg.output_dir = work / "rerun";
    run_sequence(cfg);
    const auto first = base.output_dir / ("apie-full_seed" + std::to_string(seeds.front()));
    bool same = true;
    for (const char* f : {"accuracy_matrix.csv", "metrics.csv"}) same = same && slurp(first / f) == slurp(cfg.output_dir / f);
    return Outcome{same, std::string("apie-full seed 1 rerun with a different worker count: ") +
                             (same ? "identical" : "DIFFERENT")};
  });

  report(10, "task generation contracts", [] {
    const auto covers = generate_covers(200, 16, 16, 1010);
    const double target = 0.4 * 256;
    double worst = 0.0;
    std::vector<EmbedScheme> schemes = TaskSequenceConfig::default_schemes();
    schemes.push_back({EmbedKind::LsbReplace, 0.4, 0, 3});
    for (auto scheme : schemes) {
      for (std::size_t k = 0; k < covers.size(); ++k) {
        scheme.seed = mix_seed(77, k);
        const auto r = embed_with_stats(covers[k], scheme);
        std::size_t diff = 0;
        for (std::size_t i = 0; i < 256; ++i) diff += covers[k].pixels[i] != r.stego.pixels[i];
        if (diff != r.changed) return Outcome{false, "change count bookkeeping mismatch"};
        worst = std::max(worst, std::abs(static_cast<double>(diff + r.clamped) - target) / target);
      }
    }

    double share = 0.0;
    for (std::uint64_t k = 0; k < 50; ++k) {
      GrayImage img{16, 16, std::vector<std::uint8_t>(256, 128)};
      Rng rng(mix_seed(1011, k));
      for (std::size_t r = 0; r < 16; ++r) {
        for (std::size_t c = 8; c < 16; ++c) img.pixels[r * 16 + c] = static_cast<std::uint8_t>(rng.below(256));
      }
      const auto stego = embed(img, {EmbedKind::Pm1Adaptive, 0.4, mix_seed(1012, k), 3});
      std::size_t noisy = 0, total = 0;
      for (std::size_t i = 0; i < 256; ++i) {
        if (img.pixels[i] == stego.pixels[i]) continue;
        ++total;
        noisy += i % 16 >= 8;
      }
      share += static_cast<double>(noisy) / static_cast<double>(total);
    }
    share /= 50;

    bool splits_ok = true;
    for (std::size_t pairs : {std::size_t{100}, std::size_t{2000}}) {
      const auto t = build_task(0, {EmbedKind::Pm1Uniform, 0.4, 5, 3}, pairs, 16, 16, 1013);
      splits_ok = splits_ok && t.splits.train.size() * 100 == pairs * 60 && t.splits.validation.size() * 100 == pairs * 20 &&
                  t.splits.test.size() * 100 == pairs * 20;
      std::set<std::size_t> all;
      for (auto s : {Split::Train, Split::Validation, Split::Test}) {
        std::size_t cover = 0, stego = 0;
        for (std::size_t i : t.image_indices(s)) (t.labels[i] == 0 ? cover : stego)++;
        splits_ok = splits_ok && cover == stego;
        for (std::size_t p : t.splits.pairs(s)) splits_ok = splits_ok && all.insert(p).second;
      }
      splits_ok = splits_ok && all.size() == pairs;
    }
    return Outcome{worst <= 0.10 && share >= 0.70 && splits_ok,
                   "max count deviation " + fmt("%.3f", worst) + ", adaptive share in noisy half " + fmt("%.3f", share) +
                       ", 60/20/20 paired splits " + (splits_ok ? "exact" : "WRONG")};
  });

  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
