#include "stegcl/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "stegcl/autodiff.hpp"
#include "stegcl/models.hpp"
#include "stegcl/rng.hpp"

namespace stegcl::oracle {

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

std::vector<double> central_gradient(const ScalarFn& f, std::span<const double> x, double rel_step) {
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = x[i];
    const double e = rel_step * (1.0 + std::abs(t));
    probe[i] = t + e;
    const double up = f(probe);
    probe[i] = t - e;
    const double down = f(probe);
    probe[i] = t;
    g[i] = (up - down) / (2.0 * e);
  }
  return g;
}

std::vector<double> second_difference_diagonal(const ScalarFn& f, std::span<const double> x, double rel_step) {
  std::vector<double> probe(x.begin(), x.end());
  const double centre = f(probe);
  std::vector<double> h(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = x[i];
    const double e = rel_step * (1.0 + std::abs(t));
    probe[i] = t + e;
    const double up = f(probe);
    probe[i] = t - e;
    const double down = f(probe);
    probe[i] = t;
    h[i] = (up - 2.0 * centre + down) / (e * e);
  }
  return h;
}

double cross_entropy_from_forward(const ModelSpec& spec, std::span<const double> params, const Tensor& batch,
                                  const LabelVector& labels) {
  const Tensor logits = Network(spec).forward(params, batch);
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  double loss = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    double zmax = logits[s * k];
    for (std::size_t c = 1; c < k; ++c) zmax = std::max(zmax, logits[s * k + c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < k; ++c) denom += std::exp(logits[s * k + c] - zmax);
    loss += zmax + std::log(denom) - logits[s * k + labels.labels[s]];
  }
  return loss / static_cast<double>(n);
}

double output_l2sq_from_forward(const ModelSpec& spec, std::span<const double> params, const Tensor& sample) {
  std::vector<std::size_t> shape{1};
  shape.insert(shape.end(), spec.input_shape.begin(), spec.input_shape.end());
  const Tensor batch(shape, std::vector<double>(sample.data().begin(), sample.data().end()));
  const Tensor out = Network(spec).forward(params, batch);
  double s = 0.0;
  for (double v : out.data()) s += v * v;
  return s;
}

Problem random_problem(std::uint64_t seed, std::size_t index) {
  Rng rng(mix_seed(seed, index));
  auto pick = [&](std::size_t lo, std::size_t hi) { return lo + static_cast<std::size_t>(rng.below(hi - lo + 1)); };
  Problem p;
  switch (index % 3) {
    case 0:
      p.spec.kind = ModelKind::Mlp;
      p.spec.input_shape = {pick(2, 4), pick(2, 4)};
      p.spec.hidden_widths = {pick(3, 8)};
      break;
    case 1:
      p.spec.kind = ModelKind::Mlp;
      p.spec.input_shape = {pick(3, 8)};
      p.spec.hidden_widths = {pick(3, 6), pick(3, 6)};
      break;
    default:
      p.spec.kind = ModelKind::MiniCnn;
      p.spec.input_shape = {pick(8, 10), pick(8, 10)};
      p.spec.conv_channels = {pick(2, 3)};
      p.spec.hidden_widths = {pick(3, 5)};
      break;
  }
  p.params = init_params(p.spec, rng.next());
  for (double& v : p.params.values) v += rng.uniform(-0.1, 0.1);
  const std::size_t n = pick(2, 4);
  std::vector<std::size_t> shape{n};
  shape.insert(shape.end(), p.spec.input_shape.begin(), p.spec.input_shape.end());
  Tensor batch(shape);
  for (double& v : batch.data()) v = rng.uniform(-1.0, 1.0);
  p.batch = std::move(batch);
  for (std::size_t i = 0; i < n; ++i) p.labels.labels.push_back(static_cast<std::size_t>(rng.below(2)));
  return p;
}

PenaltyProblem random_penalty_problem(std::uint64_t seed, std::size_t index) {
  Rng rng(mix_seed(seed, 1000 + index));
  ModelSpec spec;
  spec.kind = ModelKind::Mlp;
  spec.input_shape = {3 + static_cast<std::size_t>(rng.below(4))};
  spec.hidden_widths = {2 + static_cast<std::size_t>(rng.below(4))};
  PenaltyProblem p;
  ParamVector anchor = init_params(spec, rng.next());
  p.theta = anchor;
  for (double& v : p.theta.values) v += rng.uniform(-0.5, 0.5);
  const std::size_t tasks = 1 + static_cast<std::size_t>(rng.below(4));
  for (std::size_t t = 0; t < tasks; ++t) {
    ImportanceVector imp;
    imp.values.resize(anchor.size());
    for (double& v : imp.values) v = rng.uniform(0.0, 3.0);
    imp.source_task = t;
    imp.n_samples = 1;
    p.history.push(std::move(imp));
  }
  p.history.set_anchor(std::move(anchor));
  p.cfg.lambda_per_group = {{LambdaGroup::Feature, rng.uniform(0.0, 2.0)}, {LambdaGroup::Head, rng.uniform(0.0, 2.0)}};
  p.cfg.alpha = rng.uniform(0.0, 1.0);
  p.cfg.beta = rng.uniform(0.0, 1.0);
  p.cfg.accumulation = index % 2 == 0 ? Accumulation::MasSum : Accumulation::PeakWeight;
  return p;
}

namespace {

// Floors below which a reference derivative is treated as zero when forming
// relative errors. They sit well under typical derivative magnitudes and
// above the rounding noise of the corresponding difference quotient.
constexpr double kGradientFloor = 1e-8;
constexpr double kPenaltyFloor = 1e-8;
constexpr double kHessianThreshold = 1e-6;
constexpr double kSecondDifferenceStep = 1e-4;

void record(CheckResult& r, double a, double b, double floor) {
  r.max_relative_error = std::max(r.max_relative_error, relative_error(a, b, floor));
  ++r.coordinates;
}

}  // namespace

CheckResult check_loss_grad(std::uint64_t seed, std::size_t cases) {
  CheckResult r{"loss_grad vs central differences", cases, 0, 0, 0.0, 1e-5};
  for (std::size_t c = 0; c < cases; ++c) {
    const Problem p = random_problem(seed, c);
    const auto analytic = loss_grad(p.params, p.spec, p.batch, p.labels).grad.values;
    const auto numeric = central_gradient(
        [&](std::span<const double> x) { return cross_entropy_from_forward(p.spec, x, p.batch, p.labels); },
        p.params.values, 1e-6);
    for (std::size_t i = 0; i < numeric.size(); ++i) record(r, analytic[i], numeric[i], kGradientFloor);
  }
  return r;
}

CheckResult check_output_grad(std::uint64_t seed, std::size_t cases) {
  CheckResult r{"output_l2sq_grad vs central differences", cases, 0, 0, 0.0, 1e-5};
  for (std::size_t c = 0; c < cases; ++c) {
    const Problem p = random_problem(seed, c);
    const Tensor sample = p.batch.row(0);
    const auto analytic = output_l2sq_grad(p.params, p.spec, sample).values;
    const auto numeric = central_gradient(
        [&](std::span<const double> x) { return output_l2sq_from_forward(p.spec, x, sample); }, p.params.values,
        1e-6);
    for (std::size_t i = 0; i < numeric.size(); ++i) record(r, analytic[i], numeric[i], kGradientFloor);
  }
  return r;
}

namespace {

CheckResult check_diagonal(std::uint64_t seed, std::size_t cases, HessianMethod method, std::string name) {
  CheckResult r{std::move(name), cases, 0, 0, 0.0, 1e-3};
  for (std::size_t c = 0; c < cases; ++c) {
    const Problem p = random_problem(seed, c);
    const Tensor sample = p.batch.row(0);
    const auto analytic = output_l2sq_diag_hessian(p.params, p.spec, sample, method).values;
    const ScalarFn f = [&](std::span<const double> x) { return output_l2sq_from_forward(p.spec, x, sample); };
    const auto numeric = second_difference_diagonal(f, p.params.values, kSecondDifferenceStep);
    const auto half = second_difference_diagonal(f, p.params.values, kSecondDifferenceStep / 2);
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      if (std::abs(numeric[i]) <= kHessianThreshold && std::abs(analytic[i]) <= kHessianThreshold) continue;
      // ||F||^2 is quadratic in one parameter between ReLU kinks, where any
      // step gives the same second difference.
      if (relative_error(numeric[i], half[i], kHessianThreshold) > r.tolerance) {
        ++r.skipped;
        continue;
      }
      record(r, analytic[i], numeric[i], kHessianThreshold);
    }
  }
  return r;
}

}  // namespace

CheckResult check_hessian_diagonal(std::uint64_t seed, std::size_t cases) {
  return check_diagonal(seed, cases, HessianMethod::GradFd, "grad-fd Hessian diagonal vs second differences");
}

CheckResult check_exact_hessian(std::uint64_t seed, std::size_t cases) {
  return check_diagonal(seed, cases, HessianMethod::Exact, "exact Hessian diagonal vs second differences");
}

CheckResult check_penalty_grad(std::uint64_t seed, std::size_t cases) {
  CheckResult r{"penalty_grad vs central differences", cases, 0, 0, 0.0, 1e-8};
  for (std::size_t c = 0; c < cases; ++c) {
    const PenaltyProblem p = random_penalty_problem(seed, c);
    const auto analytic = penalty_grad(p.theta, p.history, p.cfg).values;
    const auto numeric = central_gradient(
        [&](std::span<const double> x) {
          ParamVector theta = p.theta;
          theta.values.assign(x.begin(), x.end());
          return penalty(theta, p.history, p.cfg);
        },
        p.theta.values, 1e-3);
    for (std::size_t i = 0; i < numeric.size(); ++i) record(r, analytic[i], numeric[i], kPenaltyFloor);
  }
  return r;
}

}  // namespace stegcl::oracle
