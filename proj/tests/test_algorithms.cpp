#include <doctest.h>

#include <cmath>

#include "flc/algorithms.hpp"
#include "flc/errors.hpp"
#include "test_helpers.hpp"

using namespace flc;

namespace {

// Returns the same gradient for every batch.
class ConstantGradient final : public GradientSource {
 public:
  ConstantGradient(ParamVector g, std::size_t batches) : g_(std::move(g)), batches_(batches) {}
  std::size_t batch_count(std::uint32_t) override { return batches_; }
  void gradient(std::uint32_t, std::size_t, std::span<const double>, ParamVector& g) override {
    g = g_;
    ++calls;
  }
  int calls = 0;

 private:
  ParamVector g_;
  std::size_t batches_;
};

// Full-batch gradient of 1/2 |z - c|^2.
class QuadraticGradient final : public GradientSource {
 public:
  explicit QuadraticGradient(ParamVector c) : c_(std::move(c)) {}
  std::size_t batch_count(std::uint32_t) override { return 1; }
  void gradient(std::uint32_t, std::size_t, std::span<const double> z, ParamVector& g) override {
    g.resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) g[i] = z[i] - c_[i];
  }

 private:
  ParamVector c_;
};

AlgoConfig admm(AlgoKind kind, double rho, double zeta, std::uint32_t steps) {
  AlgoConfig cfg;
  cfg.kind = kind;
  cfg.rho = rho;
  cfg.zeta = zeta;
  cfg.local_steps = steps;
  return cfg;
}

ClientState client_with(ParamVector z, ParamVector lambda) { return ClientState{0, std::move(z), std::move(lambda), 0}; }

const PrivacyConfig kNoPrivacy{};

}  // namespace

TEST_CASE("iiadmm_global examples") {
  CHECK(iiadmm_global(std::vector<ParamVector>{{2.0}}, std::vector<ParamVector>{{0.0}}, 7.0) == ParamVector{2.0});
  CHECK(iiadmm_global(std::vector<ParamVector>{{1.0}, {3.0}}, std::vector<ParamVector>{{0.0}, {0.0}}, 1.0) ==
        ParamVector{2.0});
  CHECK(iiadmm_global(std::vector<ParamVector>{{2.0}}, std::vector<ParamVector>{{1.0}}, 2.0) == ParamVector{1.5});
  CHECK_THROWS_AS(iiadmm_global(std::vector<ParamVector>{{2.0}}, std::vector<ParamVector>{{1.0, 2.0}}, 2.0),
                  ShapeError);
  CHECK_THROWS_AS(iiadmm_global(std::vector<ParamVector>{{2.0}}, std::vector<ParamVector>{{1.0}}, 0.0), ConfigError);
}

TEST_CASE("iceadmm_global examples") {
  CHECK(iceadmm_global(std::vector<ParamVector>{{4.0}, {0.0}}, std::vector<ParamVector>{{2.0}, {-2.0}}, 2.0) ==
        ParamVector{2.0});
  CHECK(iceadmm_global(std::vector<ParamVector>{{1.0, 5.0}, {3.0, 1.0}},
                       std::vector<ParamVector>{{0.0, 0.0}, {0.0, 0.0}}, 3.0) == ParamVector{2.0, 3.0});
  auto rng = CounterRng::from_words({8});
  std::vector<ParamVector> z, l;
  for (int p = 0; p < 3; ++p) {
    z.push_back(test::random_vector(4, rng));
    l.push_back(test::random_vector(4, rng));
  }
  CHECK(iceadmm_global(z, l, 1.7) == iiadmm_global(z, l, 1.7));
}

TEST_CASE("fedavg_global examples") {
  CHECK(fedavg_global(std::vector<ParamVector>{{0.0}, {4.0}}, std::vector<double>{0.25, 0.75}) == ParamVector{3.0});
  CHECK(fedavg_global(std::vector<ParamVector>{{1.0}, {3.0}}, std::vector<double>{0.5, 0.5}) == ParamVector{2.0});
  CHECK(fedavg_global(std::vector<ParamVector>{{1.25, -3.0}}, std::vector<double>{1.0}) == ParamVector{1.25, -3.0});
  CHECK_THROWS_AS(fedavg_global(std::vector<ParamVector>{{1.0}, {1.0, 2.0}}, std::vector<double>{0.5, 0.5}),
                  ShapeError);
  CHECK(shard_weights(Partition{{0}, {1, 2, 3}}) == std::vector<double>{0.25, 0.75});
}

TEST_CASE("dual_update examples") {
  CHECK(dual_update(ParamVector{1.5, -2.0}, 3.0, ParamVector{0.25, 7.0}, ParamVector{0.25, 7.0}) ==
        ParamVector{1.5, -2.0});
  CHECK(dual_update(ParamVector{1.0}, 2.0, ParamVector{3.0}, ParamVector{1.0}) == ParamVector{5.0});
  CHECK_THROWS_AS(dual_update(ParamVector{1.0}, 2.0, ParamVector{3.0, 1.0}, ParamVector{1.0}), ShapeError);
}

TEST_CASE("iiadmm_local by hand substitution") {
  const auto cfg = admm(AlgoKind::kIiAdmm, 1.0, 1.0, 1);
  const auto client = client_with({5.0}, {0.0});
  ConstantGradient one_batch({1.0}, 1);
  CHECK(iiadmm_local(client, ParamVector{0.0}, cfg, 1, one_batch, kNoPrivacy) == ParamVector{-0.5});
  ConstantGradient two_batches({1.0}, 2);
  CHECK(iiadmm_local(client, ParamVector{0.0}, cfg, 1, two_batches, kNoPrivacy) == ParamVector{-0.75});
  CHECK(two_batches.calls == 2);
}

TEST_CASE("iiadmm_local runs local_steps epochs over every batch") {
  auto cfg = admm(AlgoKind::kIiAdmm, 1.0, 1.0, 3);
  ConstantGradient src({1.0}, 4);
  iiadmm_local(client_with({0.0}, {0.0}), ParamVector{0.0}, cfg, 1, src, kNoPrivacy);
  CHECK(src.calls == 12);
}

TEST_CASE("iceadmm_local by hand substitution") {
  const auto cfg1 = admm(AlgoKind::kIceAdmm, 1.0, 1.0, 1);
  ConstantGradient g({1.0}, 1);
  const auto out = iceadmm_local(client_with({0.0}, {0.0}), ParamVector{0.0}, cfg1, 1, g, kNoPrivacy);
  CHECK(out.z == ParamVector{-0.5});
  CHECK(out.lambda == ParamVector{0.5});

  // f(z) = 1/2 (z - 4)^2, w = 0: z_{l+1} = (z_l + lambda_l - (z_l - 4)) / 2, lambda_{l+1} = lambda_l - z_{l+1}.
  const std::vector<double> expected_z{2.0, 1.0, 0.5};
  const std::vector<double> expected_lambda{-2.0, -3.0, -3.5};
  for (std::uint32_t steps = 1; steps <= 3; ++steps) {
    QuadraticGradient q({4.0});
    const auto r =
        iceadmm_local(client_with({0.0}, {0.0}), ParamVector{0.0}, admm(AlgoKind::kIceAdmm, 1.0, 1.0, steps), 1, q,
                      kNoPrivacy);
    CHECK(r.z[0] == expected_z[steps - 1]);
    CHECK(r.lambda[0] == expected_lambda[steps - 1]);
  }

  ConstantGradient batched({1.0}, 2);
  CHECK_THROWS_AS(iceadmm_local(client_with({0.0}, {0.0}), ParamVector{0.0}, cfg1, 1, batched, kNoPrivacy),
                  ConfigError);
}

TEST_CASE("both forms of the proximal step agree") {
  auto rng = CounterRng::from_words({77});
  for (int trial = 0; trial < 1000; ++trial) {
    const auto z = test::random_vector(6, rng);
    const auto g = test::random_vector(6, rng);
    const auto l = test::random_vector(6, rng);
    const auto w = test::random_vector(6, rng);
    const double rho = 0.1 + 10.0 * rng.next_unit();
    const double zeta = 10.0 * rng.next_unit();
    ParamVector a = z, b = z;
    primal_step(a, g, l, w, rho, zeta);
    primal_step_closed_form(b, g, l, w, rho, zeta);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);
  }
}

TEST_CASE("fedavg_local momentum recurrence") {
  AlgoConfig cfg;
  cfg.kind = AlgoKind::kFedAvg;
  cfg.eta = 0.1;
  cfg.beta = 0.0;
  ConstantGradient one({1.0}, 1);
  CHECK(fedavg_local(ParamVector{0.0}, cfg, 1, one, kNoPrivacy) == ParamVector{-0.1});

  cfg.beta = 0.9;
  ConstantGradient two({1.0}, 2);
  CHECK(fedavg_local(ParamVector{0.0}, cfg, 1, two, kNoPrivacy)[0] == doctest::Approx(-0.29).epsilon(1e-15));

  cfg.eta = 0.0;
  ConstantGradient any({3.0, -1.0}, 5);
  CHECK(fedavg_local(ParamVector{0.5, 2.0}, cfg, 1, any, kNoPrivacy) == ParamVector{0.5, 2.0});
}

TEST_CASE("ADMM local updates reduce to FedAvg with zero duals, zeta 0 and rho 1/eta") {
  const ModelSpec spec{ModelKind::kSoftmax, 3, 4, 0};
  for (std::uint64_t k = 0; k < 20; ++k) {
    auto rng = CounterRng::from_words({31, k});
    Dataset data;
    data.input_dim = 3;
    const auto batch = test::random_batch(spec, 9, rng);
    data.inputs = batch.inputs;
    data.labels = batch.labels;
    std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5, 6, 7, 8};
    const auto w = test::random_vector(param_count(spec), rng);
    const double eta = 0.01 + rng.next_unit();

    AlgoConfig fed;
    fed.kind = AlgoKind::kFedAvg;
    fed.eta = eta;
    AlgoConfig ii = admm(AlgoKind::kIiAdmm, 1.0 / eta, 0.0, 1);
    AlgoConfig ice = admm(AlgoKind::kIceAdmm, 1.0 / eta, 0.0, 1);
    const BatchPlan full{idx.size(), 0};
    ModelGradientSource s1(spec, data, idx, full, 0, 1), s2(spec, data, idx, full, 0, 1), s3(spec, data, idx, full, 0, 1);
    const auto zf = fedavg_local(w, fed, 1, s1, kNoPrivacy);
    const ParamVector zero(w.size(), 0.0);
    const auto zi = iiadmm_local(client_with(w, zero), w, ii, 1, s2, kNoPrivacy);
    const auto zc = iceadmm_local(client_with(w, zero), w, ice, 1, s3, kNoPrivacy).z;
    for (std::size_t i = 0; i < w.size(); ++i) {
      CHECK(std::abs(zi[i] - zf[i]) <= 1e-12);
      CHECK(std::abs(zc[i] - zf[i]) <= 1e-12);
    }
  }
}

TEST_CASE("clipping bounds the gradient that enters the update") {
  AlgoConfig cfg;
  cfg.kind = AlgoKind::kFedAvg;
  cfg.eta = 1.0;
  const PrivacyConfig clip{true, kInfiniteEpsilon, 1.0};
  ConstantGradient big({30.0, 40.0}, 1);
  const auto z = fedavg_local(ParamVector{0.0, 0.0}, cfg, 1, big, clip);
  CHECK(z[0] == doctest::Approx(-0.6));
  CHECK(z[1] == doctest::Approx(-0.8));

  ConstantGradient again({30.0, 40.0}, 1);
  const auto unclipped = fedavg_local(ParamVector{0.0, 0.0}, cfg, 1, again, kNoPrivacy);
  CHECK(unclipped == ParamVector{-30.0, -40.0});
}

TEST_CASE("non-finite iterates name the round") {
  const auto cfg = admm(AlgoKind::kIiAdmm, 1.0, 0.0, 1);
  ConstantGradient inf({std::numeric_limits<double>::infinity()}, 1);
  try {
    iiadmm_local(client_with({0.0}, {0.0}), ParamVector{0.0}, cfg, 4, inf, kNoPrivacy);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("round 4") != std::string::npos);
  }
}

TEST_CASE("penalty schedule") {
  AlgoConfig cfg;
  cfg.rho = 1.0;
  CHECK(rho_at(cfg, 1) == 1.0);
  CHECK(rho_at(cfg, 50) == 1.0);
  cfg.rho_growth = 2.0;
  cfg.rho_max = 5.0;
  CHECK(rho_at(cfg, 1) == 1.0);
  CHECK(rho_at(cfg, 3) == 4.0);
  CHECK(rho_at(cfg, 4) == 5.0);
  CHECK(rho_at(cfg, 40) == 5.0);
}

TEST_CASE("hyperparameter validation") {
  AlgoConfig cfg;
  cfg.kind = AlgoKind::kIiAdmm;
  cfg.rho = 0.0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg.kind = AlgoKind::kFedAvg;
  cfg.beta = 1.0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg.beta = 0.5;
  cfg.local_steps = 0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
}
