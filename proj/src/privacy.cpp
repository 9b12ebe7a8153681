#include "flc/privacy.hpp"

#include <cmath>
#include <sstream>

#include "flc/errors.hpp"

namespace flc {

std::string_view to_string(AlgoKind kind) {
  switch (kind) {
    case AlgoKind::kFedAvg: return "fedavg";
    case AlgoKind::kIceAdmm: return "iceadmm";
    case AlgoKind::kIiAdmm: return "iiadmm";
  }
  return "unknown";
}

AlgoKind parse_algo_kind(std::string_view name) {
  if (name == "fedavg") return AlgoKind::kFedAvg;
  if (name == "iceadmm") return AlgoKind::kIceAdmm;
  if (name == "iiadmm") return AlgoKind::kIiAdmm;
  throw ConfigError("unknown algorithm '" + std::string(name) + "'");
}

void clip_in_place(std::span<double> g, double c) {
  const double norm = l2_norm(g);
  if (norm <= c || norm == 0.0) return;
  const double scale = c / norm;
  for (double& x : g) x *= scale;
}

ParamVector clip_gradient(std::span<const double> g, double c) {
  ParamVector out(g.begin(), g.end());
  clip_in_place(out, c);
  return out;
}

double sensitivity(AlgoKind kind, double clip, double rho, double zeta, double eta) {
  if (kind == AlgoKind::kFedAvg) return 2.0 * clip * eta;
  if (rho + zeta <= 0.0) throw ConfigError("sensitivity needs rho + zeta > 0");
  return 2.0 * clip / (rho + zeta);
}

NoiseSpec make_noise_spec(const PrivacyConfig& cfg, AlgoKind kind, double rho, double zeta, double eta) {
  NoiseSpec spec;
  if (!cfg.enabled) return spec;
  spec.delta_bar = sensitivity(kind, cfg.clip, rho, zeta, eta);
  spec.scale_b = std::isinf(cfg.epsilon) ? 0.0 : spec.delta_bar / cfg.epsilon;
  return spec;
}

double laplace_from_uniform(double u, double b) {
  const double centered = u - 0.5;
  if (centered == 0.0) return 0.0;
  const double sign = centered > 0.0 ? 1.0 : -1.0;
  return -b * sign * std::log(1.0 - 2.0 * std::abs(centered));
}

CounterRng noise_stream(std::uint64_t run_seed, std::uint64_t client, std::uint64_t round) {
  return CounterRng::for_stream(run_seed, StreamDomain::kLaplaceNoise, client, round);
}

ParamVector laplace_sample(double b, std::size_t m, CounterRng& rng) {
  ParamVector out(m, 0.0);
  if (b == 0.0) return out;
  for (double& x : out) {
    double u = rng.next_unit();
    while (u == 0.0) u = rng.next_unit();
    x = laplace_from_uniform(u, b);
  }
  return out;
}

ParamVector perturb_output(std::span<const double> z, const NoiseSpec& spec, CounterRng& rng) {
  ParamVector out(z.begin(), z.end());
  if (spec.scale_b == 0.0) return out;
  const auto noise = laplace_sample(spec.scale_b, out.size(), rng);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += noise[i];
  return out;
}

DpBudgetReport dp_budget_report(const PrivacyConfig& cfg, const NoiseSpec& spec, std::uint64_t rounds) {
  DpBudgetReport r;
  r.is_private = cfg.enabled && !std::isinf(cfg.epsilon);
  r.per_round_epsilon = r.is_private ? cfg.epsilon : kInfiniteEpsilon;
  r.delta_bar = spec.delta_bar;
  r.scale_b = spec.scale_b;
  r.rounds = rounds;
  return r;
}

std::string to_string(const DpBudgetReport& report) {
  std::ostringstream os;
  if (!report.is_private) {
    os << "non-private run (epsilon = inf), rounds = " << report.rounds;
    return os.str();
  }
  os << "per-round epsilon = " << report.per_round_epsilon << ", sensitivity = " << report.delta_bar
     << ", laplace scale b = " << report.scale_b << ", rounds = " << report.rounds
     << " (guarantee holds per round; no composition across rounds is applied)";
  return os.str();
}

}  // namespace flc
