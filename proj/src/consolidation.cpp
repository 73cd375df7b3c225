#include "stegcl/consolidation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stegcl/errors.hpp"

namespace stegcl {

std::string_view to_string(Accumulation a) { return a == Accumulation::MasSum ? "mas-sum" : "peak-weight"; }

Accumulation accumulation_from_string(std::string_view name) {
  if (name == "mas-sum") return Accumulation::MasSum;
  if (name == "peak-weight") return Accumulation::PeakWeight;
  throw ConfigError("unknown accumulation '" + std::string(name) + "' (expected mas-sum or peak-weight)");
}

void ImportanceHistory::push(ImportanceVector importance) {
  importance.validate();
  if (!per_task_.empty()) {
    const ImportanceVector& first = per_task_.front();
    if (importance.size() != first.size()) {
      throw ShapeError("importance layout has " + std::to_string(importance.size()) + " entries, history uses " +
                       std::to_string(first.size()));
    }
    if (importance.estimator != first.estimator) {
      throw ConfigError("cannot mix importance estimators within one history");
    }
  }
  if (anchor_ && anchor_->size() != importance.size()) {
    throw ShapeError("importance layout does not match the anchor parameters");
  }
  per_task_.push_back(std::move(importance));
}

void ImportanceHistory::set_anchor(ParamVector anchor) {
  anchor.validate();
  if (!per_task_.empty() && anchor.size() != per_task_.front().size()) {
    throw ShapeError("anchor layout does not match the stored importance vectors");
  }
  anchor_ = std::move(anchor);
}

void RegularizerConfig::validate() const {
  for (const auto& [group, value] : lambda_per_group) {
    if (!std::isfinite(value) || value < 0.0) {
      throw ConfigError("lambda for group " + std::string(to_string(group)) + " must be finite and >= 0");
    }
  }
  if (!std::isfinite(alpha) || alpha < 0.0) throw ConfigError("alpha must be finite and >= 0");
  if (!std::isfinite(beta) || beta < 0.0) throw ConfigError("beta must be finite and >= 0");
}

double RegularizerConfig::lambda(LambdaGroup g) const {
  auto it = lambda_per_group.find(g);
  return it == lambda_per_group.end() ? 0.0 : it->second;
}

namespace {

const std::vector<ImportanceVector>& nonempty(const ImportanceHistory& history) {
  if (history.empty()) throw ConfigError("importance history is empty");
  return history.per_task();
}

ImportanceVector like(const ImportanceVector& first) {
  ImportanceVector out;
  out.values.assign(first.size(), 0.0);
  out.estimator = first.estimator;
  return out;
}

}  // namespace

ImportanceVector accumulate_mas(const ImportanceHistory& history) {
  const auto& tasks = nonempty(history);
  ImportanceVector out = like(tasks.front());
  for (const ImportanceVector& t : tasks) {
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += t.values[i];
    out.n_samples += t.n_samples;
  }
  out.source_task = tasks.back().source_task;
  return out;
}

ImportanceVector peak_weight(const ImportanceHistory& history, double alpha, double beta) {
  const auto& tasks = nonempty(history);
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ConfigError("peak_weight needs alpha >= 0 and beta >= 0");
  ImportanceVector out = like(tasks.front());
  // beta / T rather than beta * (1 / T): with beta = T the factor is exactly 1.
  const double mean_weight = beta / static_cast<double>(tasks.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double peak = tasks.front().values[i];
    double sum = 0.0;
    for (const ImportanceVector& t : tasks) {
      peak = std::max(peak, t.values[i]);
      sum += t.values[i];
    }
    out.values[i] = alpha * peak + mean_weight * sum;
  }
  for (const ImportanceVector& t : tasks) out.n_samples += t.n_samples;
  out.source_task = tasks.back().source_task;
  return out;
}

ImportanceVector effective_importance(const ImportanceHistory& history, const RegularizerConfig& cfg) {
  cfg.validate();
  return cfg.accumulation == Accumulation::MasSum ? accumulate_mas(history)
                                                  : peak_weight(history, cfg.alpha, cfg.beta);
}

QuadraticPenalty::QuadraticPenalty(const ImportanceHistory& history, const RegularizerConfig& cfg) {
  if (!history.anchor()) throw ConfigError("importance history has no anchor parameters");
  const ParamVector& anchor = *history.anchor();
  const ImportanceVector omega = effective_importance(history, cfg);
  if (omega.size() != anchor.size()) throw ShapeError("importance and anchor layouts differ");
  const auto groups = anchor.group_per_parameter();
  weights_.resize(omega.size());
  for (std::size_t i = 0; i < omega.size(); ++i) weights_[i] = cfg.lambda(groups[i]) * omega.values[i];
  anchor_ = anchor.values;
}

void QuadraticPenalty::check(std::span<const double> theta) const {
  if (theta.size() != anchor_.size()) {
    throw ShapeError("parameter vector has " + std::to_string(theta.size()) + " entries, penalty layout has " +
                     std::to_string(anchor_.size()));
  }
}

double QuadraticPenalty::value(std::span<const double> theta) const {
  check(theta);
  double s = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double d = theta[i] - anchor_[i];
    s += weights_[i] * d * d;
  }
  return s;
}

void QuadraticPenalty::add_gradient(std::span<const double> theta, std::span<double> grad) const {
  check(theta);
  if (grad.size() != theta.size()) throw ShapeError("gradient buffer has the wrong length");
  for (std::size_t i = 0; i < theta.size(); ++i) grad[i] += 2.0 * weights_[i] * (theta[i] - anchor_[i]);
}

namespace {

QuadraticPenalty checked_penalty(const ParamVector& theta, const ImportanceHistory& history,
                                 const RegularizerConfig& cfg) {
  QuadraticPenalty p(history, cfg);
  if (theta.segments != history.anchor()->segments) {
    throw ShapeError("parameter segment table does not match the anchor's");
  }
  return p;
}

}  // namespace

double penalty(const ParamVector& theta, const ImportanceHistory& history, const RegularizerConfig& cfg) {
  return checked_penalty(theta, history, cfg).value(theta.values);
}

GradVector penalty_grad(const ParamVector& theta, const ImportanceHistory& history, const RegularizerConfig& cfg) {
  const QuadraticPenalty p = checked_penalty(theta, history, cfg);
  GradVector g(theta.size());
  p.add_gradient(theta.values, g.values);
  return g;
}

}  // namespace stegcl
