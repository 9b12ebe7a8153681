#include "flc/models.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flc/errors.hpp"
#include "flc/rng.hpp"

namespace flc {
namespace {

void check_shapes(const ModelSpec& spec, std::span<const double> params, const Batch& batch) {
  validate(spec);
  if (params.size() != param_count(spec)) {
    throw ShapeError("parameter vector has " + std::to_string(params.size()) + " entries, model needs " +
                     std::to_string(param_count(spec)));
  }
  if (batch.input_dim != spec.input_dim) {
    throw ShapeError("batch input width " + std::to_string(batch.input_dim) + " does not match model input_dim " +
                     std::to_string(spec.input_dim));
  }
  if (batch.size() == 0) throw ShapeError("empty batch");
  if (batch.inputs.size() != batch.size() * batch.input_dim) {
    throw ShapeError("batch inputs are not a whole number of rows");
  }
  if (is_classifier(spec)) {
    for (double y : batch.labels) {
      if (!(y >= 0.0) || y >= spec.output_dim || y != std::floor(y)) {
        throw ShapeError("class label " + std::to_string(y) + " outside [0, " +
                         std::to_string(spec.output_dim) + ")");
      }
    }
  }
}

// Softmax cross-entropy on `logits` for class `label`. Writes p - onehot into
// `dlogits` when non-null.
double cross_entropy(std::span<const double> logits, std::size_t label, double* dlogits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  const double log_sum = std::log(sum);
  if (dlogits != nullptr) {
    for (std::size_t k = 0; k < logits.size(); ++k) {
      dlogits[k] = std::exp(logits[k] - mx) / sum - (k == label ? 1.0 : 0.0);
    }
  }
  return log_sum - (logits[label] - mx);
}

// Affine layer: out[r] = sum_c W[r, c] * in[c] + b[r], W row-major rows x cols.
void affine(const double* w, const double* b, std::span<const double> in, std::size_t rows, double* out) {
  const std::size_t cols = in.size();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = b[r];
    const double* wr = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * in[c];
    out[r] = acc;
  }
}

// Accumulates dW += d * in^T and db += d.
void affine_backward(std::span<const double> d, std::span<const double> in, double* gw, double* gb) {
  const std::size_t cols = in.size();
  for (std::size_t r = 0; r < d.size(); ++r) {
    double* gr = gw + r * cols;
    for (std::size_t c = 0; c < cols; ++c) gr[c] += d[r] * in[c];
    gb[r] += d[r];
  }
}

// Sum over the batch of per-sample losses; per-sample gradients summed into
// `grad` when non-null.
double evaluate(const ModelSpec& spec, std::span<const double> params, const Batch& batch, double* grad) {
  const std::size_t d = spec.input_dim;
  double total = 0.0;
  switch (spec.kind) {
    case ModelKind::kLinearRegression: {
      const double* w = params.data();
      const double bias = params[d];
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto x = batch.row(i);
        double yhat = bias;
        for (std::size_t j = 0; j < d; ++j) yhat += w[j] * x[j];
        const double r = yhat - batch.labels[i];
        total += 0.5 * r * r;
        if (grad != nullptr) {
          for (std::size_t j = 0; j < d; ++j) grad[j] += r * x[j];
          grad[d] += r;
        }
      }
      break;
    }
    case ModelKind::kSoftmax: {
      const std::size_t k = spec.output_dim;
      const double* w = params.data();
      const double* b = w + k * d;
      std::vector<double> logits(k), dlogits(k);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto x = batch.row(i);
        affine(w, b, x, k, logits.data());
        const auto label = static_cast<std::size_t>(batch.labels[i]);
        total += cross_entropy(logits, label, grad != nullptr ? dlogits.data() : nullptr);
        if (grad != nullptr) affine_backward(dlogits, x, grad, grad + k * d);
      }
      break;
    }
    case ModelKind::kMlp1: {
      const std::size_t h = spec.hidden_dim;
      const std::size_t k = spec.output_dim;
      const double* w1 = params.data();
      const double* b1 = w1 + h * d;
      const double* w2 = b1 + h;
      const double* b2 = w2 + k * h;
      std::vector<double> pre(h), act(h), logits(k), dlogits(k), dact(h);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto x = batch.row(i);
        affine(w1, b1, x, h, pre.data());
        for (std::size_t j = 0; j < h; ++j) act[j] = pre[j] > 0.0 ? pre[j] : 0.0;
        affine(w2, b2, act, k, logits.data());
        const auto label = static_cast<std::size_t>(batch.labels[i]);
        total += cross_entropy(logits, label, grad != nullptr ? dlogits.data() : nullptr);
        if (grad == nullptr) continue;
        double* g1 = grad;
        double* gb1 = g1 + h * d;
        double* g2 = gb1 + h;
        double* gb2 = g2 + k * h;
        affine_backward(dlogits, act, g2, gb2);
        for (std::size_t j = 0; j < h; ++j) {
          double acc = 0.0;
          for (std::size_t r = 0; r < k; ++r) acc += w2[r * h + j] * dlogits[r];
          dact[j] = pre[j] > 0.0 ? acc : 0.0;
        }
        affine_backward(dact, x, g1, gb1);
      }
      break;
    }
  }
  return total;
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kLinearRegression: return "linear-regression";
    case ModelKind::kSoftmax: return "softmax";
    case ModelKind::kMlp1: return "mlp1";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "linear-regression") return ModelKind::kLinearRegression;
  if (name == "softmax") return ModelKind::kSoftmax;
  if (name == "mlp1") return ModelKind::kMlp1;
  throw ConfigError("unknown model kind '" + std::string(name) + "'");
}

void validate(const ModelSpec& spec) {
  if (spec.input_dim == 0) throw ConfigError("model input_dim must be positive");
  if (spec.kind != ModelKind::kLinearRegression && spec.output_dim == 0) {
    throw ConfigError("model output_dim must be positive");
  }
  if (spec.kind == ModelKind::kMlp1 && spec.hidden_dim == 0) {
    throw ConfigError("mlp1 hidden_dim must be positive");
  }
}

bool is_classifier(const ModelSpec& spec) { return spec.kind != ModelKind::kLinearRegression; }

std::size_t param_count(const ModelSpec& spec) {
  validate(spec);
  const std::size_t d = spec.input_dim;
  const std::size_t k = spec.output_dim;
  const std::size_t h = spec.hidden_dim;
  switch (spec.kind) {
    case ModelKind::kLinearRegression: return d + 1;
    case ModelKind::kSoftmax: return k * (d + 1);
    case ModelKind::kMlp1: return h * (d + 1) + k * (h + 1);
  }
  return 0;
}

LossAndGrad loss_and_grad(const ModelSpec& spec, std::span<const double> params, const Batch& batch) {
  check_shapes(spec, params, batch);
  LossAndGrad out;
  out.grad.assign(params.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  out.loss = evaluate(spec, params, batch, out.grad.data()) * inv_n;
  for (double& g : out.grad) g *= inv_n;
  if (!std::isfinite(out.loss)) throw NumericError("loss is not finite");
  require_finite(out.grad, "gradient");
  return out;
}

double batch_loss(const ModelSpec& spec, std::span<const double> params, const Batch& batch) {
  check_shapes(spec, params, batch);
  const double loss = evaluate(spec, params, batch, nullptr) / static_cast<double>(batch.size());
  if (!std::isfinite(loss)) throw NumericError("loss is not finite");
  return loss;
}

std::vector<double> predict(const ModelSpec& spec, std::span<const double> params,
                            std::span<const double> inputs, std::size_t input_dim) {
  validate(spec);
  if (params.size() != param_count(spec)) throw ShapeError("parameter vector does not match model");
  if (input_dim != spec.input_dim || inputs.size() % spec.input_dim != 0) {
    throw ShapeError("prediction inputs do not match model input_dim");
  }
  const std::size_t d = spec.input_dim;
  const std::size_t n = inputs.size() / d;
  std::vector<double> out(n);
  const auto argmax = [](std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < v.size(); ++k) {
      if (v[k] > v[best]) best = k;
    }
    return static_cast<double>(best);
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = inputs.subspan(i * d, d);
    switch (spec.kind) {
      case ModelKind::kLinearRegression: {
        double yhat = params[d];
        for (std::size_t j = 0; j < d; ++j) yhat += params[j] * x[j];
        out[i] = yhat;
        break;
      }
      case ModelKind::kSoftmax: {
        std::vector<double> logits(spec.output_dim);
        affine(params.data(), params.data() + spec.output_dim * d, x, spec.output_dim, logits.data());
        out[i] = argmax(logits);
        break;
      }
      case ModelKind::kMlp1: {
        const std::size_t h = spec.hidden_dim;
        const std::size_t k = spec.output_dim;
        std::vector<double> act(h), logits(k);
        const double* w1 = params.data();
        const double* w2 = w1 + h * (d + 1);
        affine(w1, w1 + h * d, x, h, act.data());
        for (double& a : act) a = a > 0.0 ? a : 0.0;
        affine(w2, w2 + k * h, act, k, logits.data());
        out[i] = argmax(logits);
        break;
      }
    }
  }
  return out;
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  ParamVector params(param_count(spec), 0.0);
  if (spec.kind != ModelKind::kMlp1) return params;
  auto rng = CounterRng::for_stream(seed, StreamDomain::kInit);
  const std::size_t d = spec.input_dim;
  const std::size_t h = spec.hidden_dim;
  const std::size_t k = spec.output_dim;
  const double s1 = std::sqrt(2.0 / static_cast<double>(d));
  const double s2 = std::sqrt(2.0 / static_cast<double>(h));
  for (std::size_t i = 0; i < h * d; ++i) params[i] = s1 * rng.next_normal();
  double* w2 = params.data() + h * (d + 1);
  for (std::size_t i = 0; i < k * h; ++i) w2[i] = s2 * rng.next_normal();
  return params;
}

GradCheckReport grad_check_against(const ModelSpec& spec, std::span<const double> params,
                                   const Batch& batch, std::span<const double> analytic, double h,
                                   double tol) {
  require_same_size(params, analytic, "grad_check");
  GradCheckReport report;
  ParamVector probe(params.begin(), params.end());
  for (std::size_t j = 0; j < probe.size(); ++j) {
    const double theta = probe[j];
    const double step = h * (1.0 + std::abs(theta));
    probe[j] = theta + step;
    const double up = batch_loss(spec, probe, batch);
    probe[j] = theta - step;
    const double down = batch_loss(spec, probe, batch);
    probe[j] = theta;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[j]), std::abs(numeric), kGradCheckFloor});
    const double rel = std::abs(analytic[j] - numeric) / denom;
    if (!(rel <= report.max_rel_err)) {
      report.max_rel_err = rel;
      report.worst_coordinate = j;
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

GradCheckReport grad_check(const ModelSpec& spec, std::span<const double> params, const Batch& batch,
                           double h, double tol) {
  const auto analytic = loss_and_grad(spec, params, batch).grad;
  return grad_check_against(spec, params, batch, analytic, h, tol);
}

}  // namespace flc
