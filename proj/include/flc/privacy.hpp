#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>

#include "flc/algo_kind.hpp"
#include "flc/param_vector.hpp"
#include "flc/rng.hpp"

namespace flc {

inline constexpr double kInfiniteEpsilon = std::numeric_limits<double>::infinity();

struct PrivacyConfig {
  bool enabled = false;
  double epsilon = kInfiniteEpsilon;  // per-round privacy level; infinity means non-private
  double clip = 1.0;                  // gradient norm bound C
};

/// Laplace noise parameters: sensitivity and scale b = sensitivity / epsilon.
struct NoiseSpec {
  double delta_bar = 0.0;
  double scale_b = 0.0;
};

/// Rescales g to l2-norm at most C; vectors already inside the ball, and the
/// zero vector, are returned unchanged.
ParamVector clip_gradient(std::span<const double> g, double c);
void clip_in_place(std::span<double> g, double c);

/// ADMM variants: 2C / (rho + zeta). FedAvg: 2C * eta, the same bound with
/// rho = 1/eta and zeta = 0.
double sensitivity(AlgoKind kind, double clip, double rho, double zeta, double eta);

/// Noise parameters for one round. Disabled privacy or infinite epsilon gives b = 0.
NoiseSpec make_noise_spec(const PrivacyConfig& cfg, AlgoKind kind, double rho, double zeta, double eta);

/// Inverse-CDF transform: u' = u - 0.5, returns -b * sgn(u') * ln(1 - 2|u'|).
double laplace_from_uniform(double u, double b);

/// Stream used for client `client`'s output noise in round `round`.
CounterRng noise_stream(std::uint64_t run_seed, std::uint64_t client, std::uint64_t round);

/// m independent Laplace(0, b) draws. b = 0 returns zeros without consuming draws.
/// A uniform draw of exactly 0 (the one point with infinite inverse CDF) is
/// skipped and the next counter value is used.
ParamVector laplace_sample(double b, std::size_t m, CounterRng& rng);

/// z + Laplace(0, b)^m; identity (and no draws) when b = 0.
ParamVector perturb_output(std::span<const double> z, const NoiseSpec& spec, CounterRng& rng);

struct DpBudgetReport {
  bool is_private = false;
  double per_round_epsilon = kInfiniteEpsilon;
  double delta_bar = 0.0;
  double scale_b = 0.0;
  std::uint64_t rounds = 0;
};

/// Per-round accounting only; no composition across rounds is claimed.
DpBudgetReport dp_budget_report(const PrivacyConfig& cfg, const NoiseSpec& spec, std::uint64_t rounds);
std::string to_string(const DpBudgetReport& report);

}  // namespace flc
