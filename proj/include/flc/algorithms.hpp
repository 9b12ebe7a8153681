#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "flc/algo_kind.hpp"
#include "flc/data.hpp"
#include "flc/models.hpp"
#include "flc/param_vector.hpp"
#include "flc/privacy.hpp"

namespace flc {

/// Hyperparameters shared by server and clients. FedAvg reads eta/beta, the
/// ADMM variants read rho/zeta; ICEADMM always runs full batch.
struct AlgoConfig {
  AlgoKind kind = AlgoKind::kIiAdmm;
  double rho = 1.0;
  double zeta = 0.0;
  double eta = 0.1;
  double beta = 0.0;
  std::uint32_t local_steps = 1;
  std::size_t batch_size = 64;
  std::uint32_t rounds = 1;
  // Optional geometric penalty schedule rho_t = min(rho_max, rho * growth^(t-1)).
  double rho_growth = 1.0;
  double rho_max = std::numeric_limits<double>::infinity();
};

/// Throws ConfigError for out-of-range hyperparameters.
void validate(const AlgoConfig& cfg);

/// Penalty in effect during round `round` (1-based).
double rho_at(const AlgoConfig& cfg, std::uint32_t round);

struct ClientState {
  std::uint32_t id = 0;
  ParamVector z;
  ParamVector lambda;
  std::uint32_t round = 0;
};

struct ServerState {
  ParamVector w;
  std::vector<ParamVector> duals;
  std::uint32_t round = 0;
  std::vector<double> weights;
};

/// Supplies mini-batch gradients to the local solvers. Batch layout may
/// change per epoch; gradients are evaluated at the caller's iterate.
class GradientSource {
 public:
  virtual ~GradientSource() = default;
  virtual std::size_t batch_count(std::uint32_t epoch) = 0;
  virtual void gradient(std::uint32_t epoch, std::size_t batch, std::span<const double> z, ParamVector& g) = 0;
};

/// Gradients of a model over one client's shard for one round.
class ModelGradientSource final : public GradientSource {
 public:
  ModelGradientSource(const ModelSpec& spec, const Dataset& data, std::span<const std::size_t> indices,
                      BatchPlan plan, std::uint64_t client, std::uint64_t round);

  std::size_t batch_count(std::uint32_t epoch) override;
  void gradient(std::uint32_t epoch, std::size_t batch, std::span<const double> z, ParamVector& g) override;

 private:
  void load_epoch(std::uint32_t epoch);

  const ModelSpec& spec_;
  const Dataset& data_;
  std::span<const std::size_t> indices_;
  BatchPlan plan_;
  std::uint64_t client_;
  std::uint64_t round_;
  std::uint32_t loaded_epoch_ = 0;
  bool loaded_ = false;
  bool full_batch_ = false;
  std::vector<Batch> batches_;
};

/// Minimizer of the linearized proximal subproblem, written as a correction
/// step: z - (g - lambda - rho (w - z)) / (rho + zeta).
void primal_step(std::span<double> z, std::span<const double> g, std::span<const double> lambda,
                 std::span<const double> w, double rho, double zeta);

/// Same minimizer in closed form: (zeta z + rho w + lambda - g) / (rho + zeta).
void primal_step_closed_form(std::span<double> z, std::span<const double> g, std::span<const double> lambda,
                             std::span<const double> w, double rho, double zeta);

/// lambda + rho (w - z).
ParamVector dual_update(std::span<const double> lambda, double rho, std::span<const double> w,
                        std::span<const double> z);

/// IIADMM client update: starts from w, runs `local_steps` epochs of
/// mini-batch primal steps with the round's fixed dual. Returns the new z only.
ParamVector iiadmm_local(const ClientState& client, std::span<const double> w, const AlgoConfig& cfg,
                         std::uint32_t round, GradientSource& source, const PrivacyConfig& privacy);

struct PrimalDual {
  ParamVector z;
  ParamVector lambda;
};

/// ICEADMM client update: `local_steps` full-batch (primal, dual) pairs
/// starting from the client's previous z and lambda. Returns both.
PrimalDual iceadmm_local(const ClientState& client, std::span<const double> w, const AlgoConfig& cfg,
                         std::uint32_t round, GradientSource& source, const PrivacyConfig& privacy);

/// FedAvg client update: momentum SGD from w, momentum reset each round.
ParamVector fedavg_local(std::span<const double> w, const AlgoConfig& cfg, std::uint32_t round,
                         GradientSource& source, const PrivacyConfig& privacy);

/// (1/P) sum_p (z_p - lambda_p / rho), reduced in list order.
ParamVector iiadmm_global(std::span<const ParamVector> z_list, std::span<const ParamVector> duals, double rho);
ParamVector iceadmm_global(std::span<const ParamVector> z_list, std::span<const ParamVector> lambda_list,
                           double rho);

/// sum_p weight_p z_p, reduced in list order.
ParamVector fedavg_global(std::span<const ParamVector> z_list, std::span<const double> weights);

/// I_p / I for each shard.
std::vector<double> shard_weights(const Partition& parts);

}  // namespace flc
