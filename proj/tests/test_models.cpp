#include <doctest.h>

#include <cmath>
#include <cstring>

#include "flc/errors.hpp"
#include "flc/models.hpp"
#include "test_helpers.hpp"

using namespace flc;

namespace {

const ModelSpec kLinear{ModelKind::kLinearRegression, 3, 1, 0};
const ModelSpec kSoftmax{ModelKind::kSoftmax, 2, 3, 0};
const ModelSpec kMlp{ModelKind::kMlp1, 4, 3, 5};

}  // namespace

TEST_CASE("param_count follows the packed layout") {
  CHECK(param_count(kLinear) == 4);
  CHECK(param_count(kSoftmax) == 9);
  CHECK(param_count(kMlp) == 43);
  CHECK_THROWS_AS(param_count(ModelSpec{ModelKind::kSoftmax, 0, 3, 0}), ConfigError);
  CHECK_THROWS_AS(param_count(ModelSpec{ModelKind::kSoftmax, 2, 0, 0}), ConfigError);
  CHECK_THROWS_AS(param_count(ModelSpec{ModelKind::kMlp1, 2, 2, 0}), ConfigError);
}

TEST_CASE("linear regression loss and gradient by hand") {
  const ModelSpec spec{ModelKind::kLinearRegression, 1, 1, 0};
  const Batch batch{{1.0}, {0.0}, 1};
  const auto out = loss_and_grad(spec, ParamVector{1.0, 0.0}, batch);
  CHECK(out.loss == 0.5);
  CHECK(out.grad == ParamVector{1.0, 1.0});
}

TEST_CASE("uniform softmax has loss ln 2 and predicts class 0") {
  const ModelSpec spec{ModelKind::kSoftmax, 3, 2, 0};
  const ParamVector zeros(param_count(spec), 0.0);
  const Batch batch{{0.3, -1.2, 4.0}, {1.0}, 3};
  CHECK(loss_and_grad(spec, zeros, batch).loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const auto pred = predict(spec, zeros, std::vector<double>{0.3, -1.2, 4.0, 1.0, 1.0, 1.0}, 3);
  CHECK(pred == std::vector<double>{0.0, 0.0});
}

TEST_CASE("linear prediction") {
  const ModelSpec spec{ModelKind::kLinearRegression, 1, 1, 0};
  CHECK(predict(spec, ParamVector{2.0, 1.0}, std::vector<double>{3.0}, 1) == std::vector<double>{7.0});
}

TEST_CASE("softmax forward matches a direct probability computation") {
  auto rng = CounterRng::from_words({11});
  const auto params = test::random_vector(param_count(kSoftmax), rng);
  const auto batch = test::random_batch(kSoftmax, 1, rng);
  const auto x = batch.row(0);
  std::vector<double> logits(3);
  for (std::size_t k = 0; k < 3; ++k) logits[k] = params[k * 2] * x[0] + params[k * 2 + 1] * x[1] + params[6 + k];
  const double denom = std::exp(logits[0]) + std::exp(logits[1]) + std::exp(logits[2]);
  const double expected = -std::log(std::exp(logits[static_cast<std::size_t>(batch.labels[0])]) / denom);
  CHECK(batch_loss(kSoftmax, params, batch) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("analytic gradients agree with central differences") {
  for (const ModelSpec& spec : {kLinear, kSoftmax, kMlp}) {
    CAPTURE(to_string(spec.kind));
    for (std::uint64_t k = 0; k < 20; ++k) {
      auto rng = CounterRng::from_words({static_cast<std::uint64_t>(spec.kind), k});
      const auto params = test::random_vector(param_count(spec), rng, 0.5);
      const auto batch = test::random_batch(spec, 6, rng);
      const auto analytic = loss_and_grad(spec, params, batch).grad;
      const auto numeric = test::numeric_gradient(spec, params, batch);
      for (std::size_t j = 0; j < params.size(); ++j) {
        const double denom = std::max({std::abs(analytic[j]), std::abs(numeric[j]), 1e-4});
        CHECK(std::abs(analytic[j] - numeric[j]) / denom <= 1e-4);
      }
    }
  }
}

TEST_CASE("grad_check reports pass and fail") {
  auto rng = CounterRng::from_words({5});
  SUBCASE("quadratic loss passes at 1e-6") {
    const auto params = test::random_vector(param_count(kLinear), rng);
    const auto batch = test::random_batch(kLinear, 5, rng);
    CHECK(grad_check(kLinear, params, batch, 1e-6, 1e-6).pass);
  }
  SUBCASE("softmax passes at 1e-4") {
    const auto params = test::random_vector(param_count(kSoftmax), rng);
    const auto batch = test::random_batch(kSoftmax, 5, rng);
    CHECK(grad_check(kSoftmax, params, batch, 1e-6, 1e-4).pass);
  }
  SUBCASE("corrupted coordinate fails") {
    const auto params = test::random_vector(param_count(kMlp), rng, 0.5);
    const auto batch = test::random_batch(kMlp, 5, rng);
    auto grad = loss_and_grad(kMlp, params, batch).grad;
    grad[7] += 0.1;
    const auto report = grad_check_against(kMlp, params, batch, grad, 1e-6, 1e-4);
    CHECK_FALSE(report.pass);
    CHECK(report.worst_coordinate == 7);
  }
}

TEST_CASE("loss_and_grad is deterministic and nonnegative") {
  for (const ModelSpec& spec : {kLinear, kSoftmax, kMlp}) {
    auto rng = CounterRng::from_words({99, static_cast<std::uint64_t>(spec.kind)});
    const auto params = test::random_vector(param_count(spec), rng);
    const auto batch = test::random_batch(spec, 7, rng);
    const auto a = loss_and_grad(spec, params, batch);
    const auto b = loss_and_grad(spec, params, batch);
    CHECK(std::memcmp(&a.loss, &b.loss, sizeof(double)) == 0);
    CHECK(std::memcmp(a.grad.data(), b.grad.data(), a.grad.size() * sizeof(double)) == 0);
    CHECK(a.loss >= 0.0);
  }
}

TEST_CASE("batch-mean gradient equals the mean of per-sample gradients") {
  for (const ModelSpec& spec : {kLinear, kSoftmax, kMlp}) {
    auto rng = CounterRng::from_words({123, static_cast<std::uint64_t>(spec.kind)});
    const auto params = test::random_vector(param_count(spec), rng, 0.5);
    const auto both = test::random_batch(spec, 2, rng);
    Batch first{{both.row(0).begin(), both.row(0).end()}, {both.labels[0]}, spec.input_dim};
    Batch second{{both.row(1).begin(), both.row(1).end()}, {both.labels[1]}, spec.input_dim};
    const auto g = loss_and_grad(spec, params, both).grad;
    const auto g1 = loss_and_grad(spec, params, first).grad;
    const auto g2 = loss_and_grad(spec, params, second).grad;
    for (std::size_t j = 0; j < g.size(); ++j) CHECK(std::abs(g[j] - 0.5 * (g1[j] + g2[j])) <= 1e-12);
  }
}

TEST_CASE("softmax trained by full-batch gradient descent separates two blobs") {
  const ModelSpec spec{ModelKind::kSoftmax, 2, 2, 0};
  Batch batch;
  batch.input_dim = 2;
  auto rng = CounterRng::from_words({2024});
  for (int i = 0; i < 100; ++i) {
    const int label = i % 2;
    const double cx = label == 0 ? -2.0 : 2.0;
    batch.inputs.push_back(cx + 0.3 * rng.next_normal());
    batch.inputs.push_back(0.3 * rng.next_normal());
    batch.labels.push_back(label);
  }
  ParamVector params(param_count(spec), 0.0);
  for (int step = 0; step < 200; ++step) {
    const auto g = loss_and_grad(spec, params, batch).grad;
    for (std::size_t j = 0; j < params.size(); ++j) params[j] -= 0.5 * g[j];
  }
  const auto pred = predict(spec, params, batch.inputs, 2);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == batch.labels[i] ? 1 : 0;
  CHECK(static_cast<double>(correct) / 100.0 >= 0.99);
}

TEST_CASE("shape and label errors") {
  const Batch batch{{1.0, 2.0}, {0.0}, 2};
  CHECK_THROWS_AS(loss_and_grad(kLinear, ParamVector(4, 0.0), batch), ShapeError);
  CHECK_THROWS_AS(loss_and_grad(ModelSpec{ModelKind::kLinearRegression, 2, 1, 0}, ParamVector(2, 0.0), batch),
                  ShapeError);
  const ModelSpec two_class{ModelKind::kSoftmax, 2, 2, 0};
  const Batch bad_label{{1.0, 2.0}, {2.0}, 2};
  CHECK_THROWS_AS(loss_and_grad(two_class, ParamVector(6, 0.0), bad_label), ShapeError);
}

TEST_CASE("overflowing parameters raise a numeric error") {
  const ModelSpec spec{ModelKind::kLinearRegression, 1, 1, 0};
  const Batch batch{{1e300}, {0.0}, 1};
  CHECK_THROWS_AS(loss_and_grad(spec, ParamVector{1e300, 0.0}, batch), NumericError);
}

TEST_CASE("mlp1 initialization is seeded and nonzero") {
  const auto a = init_params(kMlp, 3);
  CHECK(a == init_params(kMlp, 3));
  CHECK(a != init_params(kMlp, 4));
  CHECK(init_params(kSoftmax, 3) == ParamVector(param_count(kSoftmax), 0.0));
}
