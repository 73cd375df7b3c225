#include "stegcl/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stegcl/errors.hpp"

namespace stegcl {

std::string_view to_string(HessianMethod method) {
  switch (method) {
    case HessianMethod::GradFd: return "grad-fd";
    case HessianMethod::Exact: return "exact";
    case HessianMethod::Zero: return "zero";
  }
  return "?";
}

HessianMethod hessian_method_from_string(std::string_view name) {
  if (name == "grad-fd") return HessianMethod::GradFd;
  if (name == "exact") return HessianMethod::Exact;
  if (name == "zero") return HessianMethod::Zero;
  throw ConfigError("unknown hessian method '" + std::string(name) + "' (expected grad-fd, exact or zero)");
}

namespace {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void dense_forward(const LayerPlan& l, const double* w, const double* b, const double* in, double* out,
                   std::size_t batch) {
  const std::size_t ni = l.in_features, no = l.out_features;
  for (std::size_t n = 0; n < batch; ++n) {
    const double* x = in + n * ni;
    double* y = out + n * no;
    for (std::size_t o = 0; o < no; ++o) {
      const double* row = w + o * ni;
      double acc = b ? b[o] : 0.0;
      for (std::size_t i = 0; i < ni; ++i) acc += row[i] * x[i];
      y[o] = acc;
    }
  }
}

void dense_backward(const LayerPlan& l, const double* w, const double* in, const double* dout, double* dw,
                    double* db, double* din, std::size_t batch) {
  const std::size_t ni = l.in_features, no = l.out_features;
  for (std::size_t n = 0; n < batch; ++n) {
    const double* x = in + n * ni;
    const double* d = dout + n * no;
    for (std::size_t o = 0; o < no; ++o) {
      const double g = d[o];
      if (db) db[o] += g;
      if (g == 0.0) continue;
      double* row = dw + o * ni;
      for (std::size_t i = 0; i < ni; ++i) row[i] += g * x[i];
    }
    if (din) {
      double* dx = din + n * ni;
      for (std::size_t o = 0; o < no; ++o) {
        const double g = d[o];
        if (g == 0.0) continue;
        const double* row = w + o * ni;
        for (std::size_t i = 0; i < ni; ++i) dx[i] += g * row[i];
      }
    }
  }
}

void conv_forward(const LayerPlan& l, const double* w, const double* b, const double* in, double* out,
                  std::size_t batch) {
  const std::size_t ic_n = l.in_channels, ih = l.in_height, iw = l.in_width;
  const std::size_t oc_n = l.out_channels, oh = l.out_height, ow = l.out_width;
  for (std::size_t n = 0; n < batch; ++n) {
    const double* x = in + n * l.in_size();
    double* y = out + n * l.out_size();
    for (std::size_t oc = 0; oc < oc_n; ++oc) {
      double* plane = y + oc * oh * ow;
      std::fill(plane, plane + oh * ow, b ? b[oc] : 0.0);
      for (std::size_t ic = 0; ic < ic_n; ++ic) {
        const double* src = x + ic * ih * iw;
        const double* k = w + (oc * ic_n + ic) * 9;
        for (std::size_t ky = 0; ky < 3; ++ky) {
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const double kv = k[ky * 3 + kx];
            for (std::size_t r = 0; r < oh; ++r) {
              const double* s = src + (r + ky) * iw + kx;
              double* dst = plane + r * ow;
              for (std::size_t c = 0; c < ow; ++c) dst[c] += kv * s[c];
            }
          }
        }
      }
    }
  }
}

void conv_backward(const LayerPlan& l, const double* w, const double* in, const double* dout, double* dw,
                   double* db, double* din, std::size_t batch) {
  const std::size_t ic_n = l.in_channels, ih = l.in_height, iw = l.in_width;
  const std::size_t oc_n = l.out_channels, oh = l.out_height, ow = l.out_width;
  for (std::size_t n = 0; n < batch; ++n) {
    const double* x = in + n * l.in_size();
    const double* d = dout + n * l.out_size();
    double* dx = din ? din + n * l.in_size() : nullptr;
    for (std::size_t oc = 0; oc < oc_n; ++oc) {
      const double* dplane = d + oc * oh * ow;
      if (db) {
        double s = 0.0;
        for (std::size_t i = 0; i < oh * ow; ++i) s += dplane[i];
        db[oc] += s;
      }
      for (std::size_t ic = 0; ic < ic_n; ++ic) {
        const double* src = x + ic * ih * iw;
        const std::size_t kbase = (oc * ic_n + ic) * 9;
        for (std::size_t ky = 0; ky < 3; ++ky) {
          for (std::size_t kx = 0; kx < 3; ++kx) {
            double acc = 0.0;
            for (std::size_t r = 0; r < oh; ++r) {
              const double* s = src + (r + ky) * iw + kx;
              const double* g = dplane + r * ow;
              for (std::size_t c = 0; c < ow; ++c) acc += g[c] * s[c];
            }
            dw[kbase + ky * 3 + kx] += acc;
            if (dx) {
              const double kv = w[kbase + ky * 3 + kx];
              double* dsrc = dx + ic * ih * iw;
              for (std::size_t r = 0; r < oh; ++r) {
                double* t = dsrc + (r + ky) * iw + kx;
                const double* g = dplane + r * ow;
                for (std::size_t c = 0; c < ow; ++c) t[c] += kv * g[c];
              }
            }
          }
        }
      }
    }
  }
}

void pool_forward(const LayerPlan& l, const double* in, double* out, std::size_t batch) {
  const std::size_t ih = l.in_height, iw = l.in_width, oh = l.out_height, ow = l.out_width;
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < l.in_channels; ++c) {
      const double* src = in + n * l.in_size() + c * ih * iw;
      double* dst = out + n * l.out_size() + c * oh * ow;
      for (std::size_t r = 0; r < oh; ++r) {
        for (std::size_t q = 0; q < ow; ++q) {
          const double* p = src + 2 * r * iw + 2 * q;
          dst[r * ow + q] = 0.25 * (p[0] + p[1] + p[iw] + p[iw + 1]);
        }
      }
    }
  }
}

void pool_backward(const LayerPlan& l, const double* dout, double* din, std::size_t batch) {
  const std::size_t ih = l.in_height, iw = l.in_width, oh = l.out_height, ow = l.out_width;
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < l.in_channels; ++c) {
      const double* g = dout + n * l.out_size() + c * oh * ow;
      double* dst = din + n * l.in_size() + c * ih * iw;
      for (std::size_t r = 0; r < oh; ++r) {
        for (std::size_t q = 0; q < ow; ++q) {
          const double v = 0.25 * g[r * ow + q];
          double* p = dst + 2 * r * iw + 2 * q;
          p[0] += v, p[1] += v, p[iw] += v, p[iw + 1] += v;
        }
      }
    }
  }
}

}  // namespace

Network::Network(ModelSpec spec) : spec_(std::move(spec)), plan_(plan_layers(spec_)) {
  spec_.validate();
  std::string last = "input";
  for (const LayerPlan& l : plan_) {
    param_count_ += l.weight_count + l.bias_count;
    if (!l.name.empty()) {
      last = l.name;
      labels_.push_back(l.name);
    } else {
      labels_.push_back(last + (l.kind == LayerKind::Relu ? ".relu" : ".pool"));
    }
  }
  input_size_ = plan_.front().in_size();
}

void Network::check_params(std::span<const double> params) const {
  if (params.size() != param_count_) {
    throw ShapeError("model expects " + std::to_string(param_count_) + " parameters, got " +
                     std::to_string(params.size()));
  }
}

std::size_t Network::check_batch(const Tensor& batch) const {
  const auto& shape = batch.shape();
  const auto& want = spec_.input_shape;
  if (spec_.kind == ModelKind::Mlp && shape.size() == 2 && want.size() != 1) {
    if (shape[1] != input_size_) {
      throw ShapeError("batch dimension 1 is " + std::to_string(shape[1]) + ", model expects " +
                       std::to_string(input_size_) + " flattened input features");
    }
    return shape[0];
  }
  if (shape.size() != want.size() + 1) {
    throw ShapeError("batch has rank " + std::to_string(shape.size()) + " (shape " + shape_string(shape) +
                     "), model expects rank " + std::to_string(want.size() + 1) + " [N] + " + shape_string(want));
  }
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (shape[i + 1] != want[i]) {
      throw ShapeError("batch dimension " + std::to_string(i + 1) + " is " + std::to_string(shape[i + 1]) +
                       ", model expects " + std::to_string(want[i]));
    }
  }
  return shape[0];
}

std::size_t Network::check_sample(const Tensor& sample) const {
  if (sample.size() == input_size_ && sample.shape() == spec_.input_shape) return 1;
  const std::size_t n = check_batch(sample);
  if (n != 1) throw ShapeError("expected a single sample, got a batch of " + std::to_string(n));
  return 1;
}

void Network::run_forward(std::span<const double> params, std::span<const double> input, std::size_t batch,
                          Workspace& ws) const {
  ws.batch = batch;
  ws.acts.resize(plan_.size() + 1);
  ws.acts[0].assign(input.begin(), input.end());
  const double* p = params.data();
  for (std::size_t li = 0; li < plan_.size(); ++li) {
    const LayerPlan& l = plan_[li];
    const std::vector<double>& in = ws.acts[li];
    std::vector<double>& out = ws.acts[li + 1];
    out.assign(batch * l.out_size(), 0.0);
    const double* w = p + l.weight_offset;
    const double* b = l.bias_count ? p + l.bias_offset : nullptr;
    switch (l.kind) {
      case LayerKind::Dense: dense_forward(l, w, b, in.data(), out.data(), batch); break;
      case LayerKind::Conv3x3: conv_forward(l, w, b, in.data(), out.data(), batch); break;
      case LayerKind::Relu:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
        break;
      case LayerKind::MeanPool2: pool_forward(l, in.data(), out.data(), batch); break;
    }
    if (!all_finite(out)) throw NumericError("non-finite activation in layer " + labels_[li]);
  }
}

void Network::run_backward(std::span<const double> params, const Workspace& ws, std::vector<double> upstream,
                           std::span<double> grad) const {
  const double* p = params.data();
  std::vector<double> down;
  for (std::size_t li = plan_.size(); li-- > 0;) {
    const LayerPlan& l = plan_[li];
    const std::vector<double>& in = ws.acts[li];
    // The input gradient of the first layer is never needed.
    const bool need_input_grad = li > 0;
    if (need_input_grad) down.assign(ws.batch * l.in_size(), 0.0);
    double* din = need_input_grad ? down.data() : nullptr;
    switch (l.kind) {
      case LayerKind::Dense:
        dense_backward(l, p + l.weight_offset, in.data(), upstream.data(), grad.data() + l.weight_offset,
                       l.bias_count ? grad.data() + l.bias_offset : nullptr, din, ws.batch);
        break;
      case LayerKind::Conv3x3:
        conv_backward(l, p + l.weight_offset, in.data(), upstream.data(), grad.data() + l.weight_offset,
                      l.bias_count ? grad.data() + l.bias_offset : nullptr, din, ws.batch);
        break;
      case LayerKind::Relu:
        if (din) {
          for (std::size_t i = 0; i < down.size(); ++i) din[i] = in[i] > 0.0 ? upstream[i] : 0.0;
        }
        break;
      case LayerKind::MeanPool2:
        if (din) pool_backward(l, upstream.data(), din, ws.batch);
        break;
    }
    if (!need_input_grad) break;
    upstream.swap(down);
  }
}

void Network::check_gradient(std::span<const double> grad) const {
  for (std::size_t li = 0; li < plan_.size(); ++li) {
    const LayerPlan& l = plan_[li];
    const std::size_t n = l.weight_count + l.bias_count;
    if (n == 0) continue;
    if (!all_finite(grad.subspan(l.weight_offset, n))) {
      throw NumericError("non-finite gradient for parameters of layer " + labels_[li]);
    }
  }
}

Tensor Network::forward(std::span<const double> params, const Tensor& batch) const {
  check_params(params);
  const std::size_t n = check_batch(batch);
  Workspace ws;
  run_forward(params, batch.data(), n, ws);
  return Tensor({n, spec_.num_classes}, std::move(ws.acts.back()));
}

double Network::loss_grad(std::span<const double> params, const Tensor& batch, const LabelVector& labels,
                          std::span<double> grad) const {
  check_params(params);
  const std::size_t n = check_batch(batch);
  if (labels.size() != n) {
    throw ShapeError("got " + std::to_string(labels.size()) + " labels for a batch of " + std::to_string(n));
  }
  labels.validate(spec_.num_classes);
  if (grad.size() != param_count_) throw ShapeError("gradient buffer has the wrong length");

  Workspace ws;
  run_forward(params, batch.data(), n, ws);
  const std::vector<double>& logits = ws.acts.back();
  const std::size_t k = spec_.num_classes;
  std::vector<double> dlogits(n * k);
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double* z = logits.data() + s * k;
    const double zmax = *std::max_element(z, z + k);
    double denom = 0.0;
    for (std::size_t c = 0; c < k; ++c) denom += std::exp(z[c] - zmax);
    const double log_denom = std::log(denom);
    loss += (zmax + log_denom - z[labels.labels[s]]) * inv_n;
    for (std::size_t c = 0; c < k; ++c) {
      const double prob = std::exp(z[c] - zmax - log_denom);
      dlogits[s * k + c] = (prob - (c == labels.labels[s] ? 1.0 : 0.0)) * inv_n;
    }
  }
  if (!std::isfinite(loss)) throw NumericError("non-finite cross-entropy loss");
  std::fill(grad.begin(), grad.end(), 0.0);
  run_backward(params, ws, std::move(dlogits), grad);
  check_gradient(grad);
  return loss;
}

double Network::output_l2sq(std::span<const double> params, const Tensor& sample) const {
  check_params(params);
  check_sample(sample);
  Workspace ws;
  run_forward(params, sample.data(), 1, ws);
  double s = 0.0;
  for (double v : ws.acts.back()) s += v * v;
  return s;
}

double Network::output_l2sq_grad(std::span<const double> params, const Tensor& sample,
                                 std::span<double> grad) const {
  check_params(params);
  check_sample(sample);
  if (grad.size() != param_count_) throw ShapeError("gradient buffer has the wrong length");
  Workspace ws;
  run_forward(params, sample.data(), 1, ws);
  std::vector<double> upstream = ws.acts.back();
  double s = 0.0;
  for (double& v : upstream) {
    s += v * v;
    v *= 2.0;
  }
  std::fill(grad.begin(), grad.end(), 0.0);
  run_backward(params, ws, std::move(upstream), grad);
  check_gradient(grad);
  return s;
}

void Network::output_l2sq_grad_and_exact_hessian(std::span<const double> params, const Tensor& sample,
                                                 std::span<double> grad, std::span<double> diag) const {
  check_params(params);
  check_sample(sample);
  if (grad.size() != param_count_ || diag.size() != param_count_) {
    throw ShapeError("derivative buffer has the wrong length");
  }
  Workspace ws;
  run_forward(params, sample.data(), 1, ws);
  const std::vector<double>& out = ws.acts.back();
  std::fill(grad.begin(), grad.end(), 0.0);
  std::fill(diag.begin(), diag.end(), 0.0);
  std::vector<double> jac(param_count_);
  for (std::size_t c = 0; c < out.size(); ++c) {
    std::fill(jac.begin(), jac.end(), 0.0);
    std::vector<double> unit(out.size(), 0.0);
    unit[c] = 1.0;
    run_backward(params, ws, std::move(unit), jac);
    // d||F||^2 = 2 sum_c F_c J_c;  d2||F||^2 / dtheta_i^2 = 2 sum_c J_ci^2 (+ 0).
    for (std::size_t i = 0; i < param_count_; ++i) {
      grad[i] += 2.0 * out[c] * jac[i];
      diag[i] += 2.0 * jac[i] * jac[i];
    }
  }
  check_gradient(grad);
  if (!all_finite(diag)) throw NumericError("non-finite Hessian diagonal");
}

void Network::output_l2sq_diag_hessian(std::span<const double> params, const Tensor& sample, HessianMethod method,
                                       std::span<double> diag) const {
  check_params(params);
  check_sample(sample);
  if (diag.size() != param_count_) throw ShapeError("Hessian buffer has the wrong length");
  switch (method) {
    case HessianMethod::Zero:
      std::fill(diag.begin(), diag.end(), 0.0);
      return;
    case HessianMethod::Exact: {
      std::vector<double> grad(param_count_);
      output_l2sq_grad_and_exact_hessian(params, sample, grad, diag);
      return;
    }
    case HessianMethod::GradFd: {
      std::vector<double> theta(params.begin(), params.end());
      std::vector<double> g_plus(param_count_), g_minus(param_count_);
      for (std::size_t i = 0; i < param_count_; ++i) {
        const double t = theta[i];
        const double step = 1e-4 * (1.0 + std::abs(t));
        const double up = t + step, down = t - step;
        if (!std::isfinite(step) || !std::isfinite(up) || !std::isfinite(down) || up - down == 0.0) {
          throw NumericError("finite-difference step underflows for parameter " + std::to_string(i) +
                             " (value " + std::to_string(t) + ")");
        }
        theta[i] = up;
        output_l2sq_grad(theta, sample, g_plus);
        theta[i] = down;
        output_l2sq_grad(theta, sample, g_minus);
        theta[i] = t;
        diag[i] = (g_plus[i] - g_minus[i]) / (up - down);
        if (!std::isfinite(diag[i])) {
          throw NumericError("non-finite Hessian diagonal at parameter " + std::to_string(i));
        }
      }
      return;
    }
  }
}

Tensor forward(const ParamVector& params, const ModelSpec& spec, const Tensor& batch) {
  return Network(spec).forward(params.values, batch);
}

LossGrad loss_grad(const ParamVector& params, const ModelSpec& spec, const Tensor& batch, const LabelVector& labels,
                   LossKind /*loss*/) {
  const Network net(spec);
  LossGrad out;
  out.grad = GradVector(net.param_count());
  out.loss = net.loss_grad(params.values, batch, labels, out.grad.values);
  return out;
}

double output_l2sq(const ParamVector& params, const ModelSpec& spec, const Tensor& sample) {
  return Network(spec).output_l2sq(params.values, sample);
}

GradVector output_l2sq_grad(const ParamVector& params, const ModelSpec& spec, const Tensor& sample) {
  const Network net(spec);
  GradVector g(net.param_count());
  net.output_l2sq_grad(params.values, sample, g.values);
  return g;
}

GradVector output_l2sq_diag_hessian(const ParamVector& params, const ModelSpec& spec, const Tensor& sample,
                                    HessianMethod method) {
  const Network net(spec);
  GradVector h(net.param_count());
  net.output_l2sq_diag_hessian(params.values, sample, method, h.values);
  return h;
}

}  // namespace stegcl
