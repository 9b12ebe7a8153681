#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flc/param_vector.hpp"

namespace flc {

enum class ModelKind : std::uint8_t { kLinearRegression = 0, kSoftmax = 1, kMlp1 = 2 };

std::string_view to_string(ModelKind kind);
/// Accepts "linear-regression", "softmax", "mlp1".
ModelKind parse_model_kind(std::string_view name);

/// Shape of a model. `output_dim` is ignored for linear regression and
/// `hidden_dim` is used only by mlp1.
struct ModelSpec {
  ModelKind kind = ModelKind::kLinearRegression;
  std::uint32_t input_dim = 1;
  std::uint32_t output_dim = 1;
  std::uint32_t hidden_dim = 0;

  bool operator==(const ModelSpec&) const = default;
};

/// Throws ConfigError for zero dimensions.
void validate(const ModelSpec& spec);
bool is_classifier(const ModelSpec& spec);

/// Number of flat parameters. Layout, layer by layer: row-major weights
/// (rows = outputs of the layer) followed by that layer's biases.
std::size_t param_count(const ModelSpec& spec);

/// Row-major block of samples with their targets. Classifier labels hold
/// integral class indices stored as doubles.
struct Batch {
  std::vector<double> inputs;
  std::vector<double> labels;
  std::size_t input_dim = 0;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(inputs).subspan(i * input_dim, input_dim);
  }
};

struct LossAndGrad {
  double loss = 0.0;
  ParamVector grad;
};

/// Batch-mean loss and gradient. Squared error (1/2)(y_hat - y)^2 for linear
/// regression; softmax cross-entropy for the classifiers; ReLU hidden layer
/// for mlp1.
LossAndGrad loss_and_grad(const ModelSpec& spec, std::span<const double> params, const Batch& batch);

/// Batch-mean loss only.
double batch_loss(const ModelSpec& spec, std::span<const double> params, const Batch& batch);

/// Regression: y_hat per row. Classifiers: argmax class index per row, ties
/// resolved to the smallest index.
std::vector<double> predict(const ModelSpec& spec, std::span<const double> params,
                            std::span<const double> inputs, std::size_t input_dim);

/// Deterministic starting point: zeros for linear models, He-normal weights
/// with zero biases for mlp1.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_coordinate = 0;
  bool pass = false;
};

/// Compares `analytic` against central differences with per-coordinate step
/// h * (1 + |theta_j|). Relative error is |a - n| / max(|a|, |n|, kGradCheckFloor).
GradCheckReport grad_check_against(const ModelSpec& spec, std::span<const double> params,
                                   const Batch& batch, std::span<const double> analytic, double h,
                                   double tol);

GradCheckReport grad_check(const ModelSpec& spec, std::span<const double> params, const Batch& batch,
                           double h, double tol);

inline constexpr double kGradCheckFloor = 1e-4;

}  // namespace flc
