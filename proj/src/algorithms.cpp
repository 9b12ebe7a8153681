#include "flc/algorithms.hpp"

#include <cmath>
#include <string>

#include "flc/errors.hpp"

namespace flc {
namespace {

void check_iterate(std::span<const double> z, std::uint32_t round, std::uint32_t epoch, std::size_t batch) {
  for (double v : z) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite local iterate in round " + std::to_string(round) + ", local step " +
                         std::to_string(epoch + 1) + ", batch " + std::to_string(batch + 1));
    }
  }
}

void prepare_gradient(ParamVector& g, const PrivacyConfig& privacy) {
  if (privacy.enabled) clip_in_place(g, privacy.clip);
}

void check_lists(std::span<const ParamVector> a, std::span<const ParamVector> b, const char* what) {
  if (a.empty()) throw ShapeError(std::string(what) + ": no client vectors");
  if (a.size() != b.size()) throw ShapeError(std::string(what) + ": list lengths differ");
  for (std::size_t p = 0; p < a.size(); ++p) {
    require_same_size(a[p], a[0], what);
    require_same_size(b[p], a[0], what);
  }
}

}  // namespace

void validate(const AlgoConfig& cfg) {
  if (cfg.local_steps == 0) throw ConfigError("local_steps must be positive");
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (cfg.kind == AlgoKind::kFedAvg) {
    if (!(cfg.eta >= 0.0) || !std::isfinite(cfg.eta)) throw ConfigError("eta must be finite and >= 0");
    if (!(cfg.beta >= 0.0 && cfg.beta < 1.0)) throw ConfigError("beta must lie in [0, 1)");
  } else {
    if (!(cfg.rho > 0.0) || !std::isfinite(cfg.rho)) throw ConfigError("rho must be finite and > 0");
    if (!(cfg.zeta >= 0.0) || !std::isfinite(cfg.zeta)) throw ConfigError("zeta must be finite and >= 0");
    if (!(cfg.rho_growth >= 1.0)) throw ConfigError("rho_growth must be >= 1");
    if (!(cfg.rho_max >= cfg.rho)) throw ConfigError("rho_max must be >= rho");
  }
}

double rho_at(const AlgoConfig& cfg, std::uint32_t round) {
  double rho = cfg.rho;
  for (std::uint32_t t = 1; t < round && rho < cfg.rho_max; ++t) rho *= cfg.rho_growth;
  return std::min(rho, cfg.rho_max);
}

ModelGradientSource::ModelGradientSource(const ModelSpec& spec, const Dataset& data,
                                         std::span<const std::size_t> indices, BatchPlan plan,
                                         std::uint64_t client, std::uint64_t round)
    : spec_(spec),
      data_(data),
      indices_(indices),
      plan_(plan),
      client_(client),
      round_(round),
      full_batch_(plan.batch_size >= indices.size()) {
  if (indices.empty()) throw ConfigError("client " + std::to_string(client) + " holds no samples");
}

void ModelGradientSource::load_epoch(std::uint32_t epoch) {
  if (loaded_ && (full_batch_ || loaded_epoch_ == epoch)) return;
  batches_ = batches(data_, indices_, plan_, client_, round_, epoch);
  loaded_epoch_ = epoch;
  loaded_ = true;
}

std::size_t ModelGradientSource::batch_count(std::uint32_t epoch) {
  load_epoch(epoch);
  return batches_.size();
}

void ModelGradientSource::gradient(std::uint32_t epoch, std::size_t batch, std::span<const double> z,
                                   ParamVector& g) {
  load_epoch(epoch);
  g = loss_and_grad(spec_, z, batches_.at(batch)).grad;
}

void primal_step(std::span<double> z, std::span<const double> g, std::span<const double> lambda,
                 std::span<const double> w, double rho, double zeta) {
  const double denom = rho + zeta;
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] = z[i] - (g[i] - lambda[i] - rho * (w[i] - z[i])) / denom;
  }
}

void primal_step_closed_form(std::span<double> z, std::span<const double> g, std::span<const double> lambda,
                             std::span<const double> w, double rho, double zeta) {
  const double denom = rho + zeta;
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] = (zeta * z[i] + rho * w[i] + lambda[i] - g[i]) / denom;
  }
}

ParamVector dual_update(std::span<const double> lambda, double rho, std::span<const double> w,
                        std::span<const double> z) {
  require_same_size(lambda, w, "dual_update");
  require_same_size(lambda, z, "dual_update");
  ParamVector out(lambda.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = lambda[i] + rho * (w[i] - z[i]);
  return out;
}

ParamVector iiadmm_local(const ClientState& client, std::span<const double> w, const AlgoConfig& cfg,
                         std::uint32_t round, GradientSource& source, const PrivacyConfig& privacy) {
  require_same_size(client.lambda, w, "iiadmm_local");
  const double rho = rho_at(cfg, round);
  ParamVector z(w.begin(), w.end());
  ParamVector g;
  for (std::uint32_t epoch = 0; epoch < cfg.local_steps; ++epoch) {
    const std::size_t count = source.batch_count(epoch);
    for (std::size_t b = 0; b < count; ++b) {
      source.gradient(epoch, b, z, g);
      require_same_size(g, z, "iiadmm_local gradient");
      prepare_gradient(g, privacy);
      primal_step(z, g, client.lambda, w, rho, cfg.zeta);
      check_iterate(z, round, epoch, b);
    }
  }
  return z;
}

PrimalDual iceadmm_local(const ClientState& client, std::span<const double> w, const AlgoConfig& cfg,
                         std::uint32_t round, GradientSource& source, const PrivacyConfig& privacy) {
  require_same_size(client.z, w, "iceadmm_local");
  require_same_size(client.lambda, w, "iceadmm_local");
  const double rho = rho_at(cfg, round);
  PrimalDual out{client.z, client.lambda};
  ParamVector g;
  for (std::uint32_t epoch = 0; epoch < cfg.local_steps; ++epoch) {
    if (source.batch_count(epoch) != 1) throw ConfigError("iceadmm requires full-batch gradients");
    source.gradient(epoch, 0, out.z, g);
    require_same_size(g, out.z, "iceadmm_local gradient");
    prepare_gradient(g, privacy);
    primal_step_closed_form(out.z, g, out.lambda, w, rho, cfg.zeta);
    check_iterate(out.z, round, epoch, 0);
    out.lambda = dual_update(out.lambda, rho, w, out.z);
  }
  return out;
}

ParamVector fedavg_local(std::span<const double> w, const AlgoConfig& cfg, std::uint32_t round,
                         GradientSource& source, const PrivacyConfig& privacy) {
  ParamVector z(w.begin(), w.end());
  ParamVector v(z.size(), 0.0);
  ParamVector g;
  for (std::uint32_t epoch = 0; epoch < cfg.local_steps; ++epoch) {
    const std::size_t count = source.batch_count(epoch);
    for (std::size_t b = 0; b < count; ++b) {
      source.gradient(epoch, b, z, g);
      require_same_size(g, z, "fedavg_local gradient");
      prepare_gradient(g, privacy);
      for (std::size_t i = 0; i < z.size(); ++i) {
        v[i] = cfg.beta * v[i] + g[i];
        z[i] -= cfg.eta * v[i];
      }
      check_iterate(z, round, epoch, b);
    }
  }
  return z;
}

ParamVector iiadmm_global(std::span<const ParamVector> z_list, std::span<const ParamVector> duals, double rho) {
  check_lists(z_list, duals, "iiadmm_global");
  if (!(rho > 0.0)) throw ConfigError("global update needs rho > 0");
  ParamVector w(z_list[0].size(), 0.0);
  for (std::size_t p = 0; p < z_list.size(); ++p) {
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += z_list[p][i] - duals[p][i] / rho;
  }
  const auto count = static_cast<double>(z_list.size());
  for (double& x : w) x /= count;
  return w;
}

ParamVector iceadmm_global(std::span<const ParamVector> z_list, std::span<const ParamVector> lambda_list,
                           double rho) {
  return iiadmm_global(z_list, lambda_list, rho);
}

ParamVector fedavg_global(std::span<const ParamVector> z_list, std::span<const double> weights) {
  if (z_list.empty()) throw ShapeError("fedavg_global: no client vectors");
  if (z_list.size() != weights.size()) throw ShapeError("fedavg_global: weight count differs from client count");
  ParamVector w(z_list[0].size(), 0.0);
  for (std::size_t p = 0; p < z_list.size(); ++p) {
    require_same_size(z_list[p], w, "fedavg_global");
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += weights[p] * z_list[p][i];
  }
  return w;
}

std::vector<double> shard_weights(const Partition& parts) {
  double total = 0.0;
  for (const auto& s : parts) total += static_cast<double>(s.size());
  std::vector<double> out;
  out.reserve(parts.size());
  for (const auto& s : parts) out.push_back(static_cast<double>(s.size()) / total);
  return out;
}

}  // namespace flc
