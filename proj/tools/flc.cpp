// Command-line front end: simulate, serve, client, bench, sweep, gradcheck.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "flc/config.hpp"
#include "flc/errors.hpp"
#include "flc/models.hpp"
#include "flc/rng.hpp"
#include "flc/runner.hpp"
#include "flc/transport/tcp.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

void init_logging() {
  auto logger = spdlog::stderr_color_mt("flc");
  spdlog::set_default_logger(logger);
  const char* level = std::getenv("FLC_LOG");
  const std::string name = level != nullptr ? level : "info";
  if (name == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (name == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    spdlog::set_level(spdlog::level::info);
  }
}

struct RunFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool timing = false;
};

flc::RunConfig effective_config(const RunFlags& flags) {
  flc::RunConfig cfg = flc::load_config(flags.config);
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.out) cfg.output = *flags.out;
  std::cerr << "effective config: " << flc::to_json(cfg).dump() << "\n";
  std::cerr << "seed: " << cfg.seed << "\n";
  return cfg;
}

// Writes each completed round immediately so a failed run keeps its prefix.
class MetricsFile {
 public:
  explicit MetricsFile(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw flc::ConfigError("cannot open metrics output '" + path.string() + "'");
  }
  void write(const flc::RoundRecord& r) { out_ << flc::metrics_line(r) << '\n' << std::flush; }

 private:
  std::ofstream out_;
};

void add_run_flags(CLI::App* cmd, RunFlags& flags) {
  cmd->add_option("--config", flags.config, "JSON run configuration")->required();
  cmd->add_option("--seed", flags.seed, "Override run.seed");
  cmd->add_option("--out", flags.out, "Override run.output (metrics JSON-lines)");
  cmd->add_flag("--timing", flags.timing, "Record wall-clock timings (otherwise t_* fields are 0)");
}

std::vector<double> parse_eps_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "inf" || item == "infinity") {
      out.push_back(flc::kInfiniteEpsilon);
      continue;
    }
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw flc::ConfigError("bad epsilon value '" + item + "'");
    }
  }
  return out;
}

int run_gradcheck(const std::string& kind, std::uint32_t input_dim, std::uint32_t output_dim, std::uint32_t hidden,
                  std::size_t instances, std::size_t batch_size, std::uint64_t seed, double h, double tol) {
  flc::ModelSpec spec{flc::parse_model_kind(kind), input_dim, output_dim, hidden};
  const std::size_t m = flc::param_count(spec);
  double worst = 0.0;
  std::size_t failures = 0;
  for (std::size_t k = 0; k < instances; ++k) {
    auto rng = flc::CounterRng::from_words({seed, 0x4743484B, k});
    flc::ParamVector params(m);
    for (double& p : params) p = 0.5 * rng.next_normal();
    flc::Batch batch;
    batch.input_dim = input_dim;
    batch.inputs.resize(batch_size * input_dim);
    for (double& x : batch.inputs) x = rng.next_normal();
    for (std::size_t i = 0; i < batch_size; ++i) {
      batch.labels.push_back(flc::is_classifier(spec) ? static_cast<double>(rng.next_below(output_dim))
                                                      : rng.next_normal());
    }
    const auto report = flc::grad_check(spec, params, batch, h, tol);
    worst = std::max(worst, report.max_rel_err);
    if (!report.pass) ++failures;
  }
  std::cout << "model=" << kind << " params=" << m << " instances=" << instances << " max_rel_err=" << worst
            << " tol=" << tol << " result=" << (failures == 0 ? "PASS" : "FAIL") << "\n";
  return failures == 0 ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  init_logging();
  CLI::App app{"Federated optimization with FedAvg, ICEADMM and IIADMM"};
  app.require_subcommand(1);

  RunFlags sim_flags;
  std::string parallel_text = "false";
  auto* simulate = app.add_subcommand("simulate", "Run all clients in-process");
  add_run_flags(simulate, sim_flags);
  simulate->add_option("--parallel", parallel_text, "Run client updates on worker threads (true|false)")
      ->check(CLI::IsMember({"true", "false"}));

  RunFlags serve_flags;
  std::string bind = "127.0.0.1:7400";
  auto* serve = app.add_subcommand("serve", "Run the aggregation server over TCP");
  add_run_flags(serve, serve_flags);
  serve->add_option("--bind", bind, "Listen address HOST:PORT");

  RunFlags client_flags;
  std::string connect = "127.0.0.1:7400";
  std::uint32_t client_id = 0;
  auto* client = app.add_subcommand("client", "Run one client over TCP");
  client->add_option("--config", client_flags.config, "JSON run configuration")->required();
  client->add_option("--seed", client_flags.seed, "Override run.seed");
  client->add_option("--connect", connect, "Server address HOST:PORT");
  client->add_option("--client-id", client_id, "Client id in [0, clients)")->required();

  std::string bench_algo = "all";
  std::uint32_t bench_clients = 4;
  std::size_t bench_dim = 1000;
  std::uint32_t bench_rounds = 10;
  auto* bench = app.add_subcommand("bench", "Measure per-round timing and payload bytes");
  bench->add_option("--algorithm", bench_algo, "fedavg|iceadmm|iiadmm|all")
      ->check(CLI::IsMember({"fedavg", "iceadmm", "iiadmm", "all"}));
  bench->add_option("--clients", bench_clients, "Number of clients")->check(CLI::PositiveNumber);
  bench->add_option("--dim", bench_dim, "Model parameter count")->check(CLI::Range(std::size_t{2}, std::size_t{1} << 30));
  bench->add_option("--rounds", bench_rounds, "Rounds (round 1 is excluded from averages)")
      ->check(CLI::PositiveNumber);

  RunFlags sweep_flags;
  std::string eps_text = "3,5,10,inf";
  std::uint32_t sweep_seeds = 10;
  std::string sweep_out = "sweep.csv";
  std::string sweep_parallel = "false";
  auto* sweep = app.add_subcommand("sweep", "Final test accuracy across privacy levels and seeds");
  sweep->add_option("--config", sweep_flags.config, "JSON run configuration")->required();
  sweep->add_option("--eps", eps_text, "Comma-separated epsilon values; 'inf' for non-private");
  sweep->add_option("--seeds", sweep_seeds, "Seeds 0..N-1 per epsilon")->check(CLI::PositiveNumber);
  sweep->add_option("--out", sweep_out, "CSV data file");
  sweep->add_option("--parallel", sweep_parallel, "true|false")->check(CLI::IsMember({"true", "false"}));

  std::string gc_model = "mlp1";
  std::uint32_t gc_in = 4, gc_out = 3, gc_hidden = 5;
  std::size_t gc_instances = 100, gc_batch = 8;
  std::uint64_t gc_seed = 0;
  double gc_h = 1e-6, gc_tol = 1e-4;
  auto* gradcheck = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
  gradcheck->add_option("--model", gc_model, "linear-regression|softmax|mlp1")
      ->check(CLI::IsMember({"linear-regression", "softmax", "mlp1"}));
  gradcheck->add_option("--input-dim", gc_in)->check(CLI::PositiveNumber);
  gradcheck->add_option("--output-dim", gc_out)->check(CLI::PositiveNumber);
  gradcheck->add_option("--hidden-dim", gc_hidden)->check(CLI::PositiveNumber);
  gradcheck->add_option("--instances", gc_instances)->check(CLI::PositiveNumber);
  gradcheck->add_option("--batch", gc_batch)->check(CLI::PositiveNumber);
  gradcheck->add_option("--seed", gc_seed);
  gradcheck->add_option("--step", gc_h, "Relative finite-difference step")->check(CLI::PositiveNumber);
  gradcheck->add_option("--tol", gc_tol, "Maximum relative error")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*simulate) {
      const auto cfg = effective_config(sim_flags);
      MetricsFile metrics(cfg.output);
      flc::TrainOptions opts;
      opts.parallel = parallel_text == "true";
      opts.record_timing = sim_flags.timing;
      opts.on_record = [&](const flc::RoundRecord& r) { metrics.write(r); };
      const auto record = flc::train(cfg, flc::Carrier::kInProcess, opts);
      spdlog::info("completed {} rounds; metrics in {}", record.rounds.size(), cfg.output.string());
    } else if (*serve) {
      const auto cfg = effective_config(serve_flags);
      const auto experiment = flc::build_experiment(cfg);
      MetricsFile metrics(cfg.output);
      flc::transport::TcpListener listener(flc::transport::parse_host_port(bind));
      spdlog::info("listening on port {} for {} clients", listener.port(), cfg.clients);
      flc::transport::TcpServerLink link(listener);
      flc::TrainOptions opts;
      opts.record_timing = serve_flags.timing;
      opts.on_record = [&](const flc::RoundRecord& r) { metrics.write(r); };
      const auto record = flc::serve_session(experiment, link, opts);
      spdlog::info("completed {} rounds; DONE sent", record.rounds.size());
    } else if (*client) {
      const auto cfg = effective_config(client_flags);
      flc::run_client(cfg, flc::transport::parse_host_port(connect), client_id);
      spdlog::info("client {} finished", client_id);
    } else if (*bench) {
      std::vector<flc::AlgoKind> algos;
      if (bench_algo == "all") {
        algos = {flc::AlgoKind::kFedAvg, flc::AlgoKind::kIceAdmm, flc::AlgoKind::kIiAdmm};
      } else {
        algos = {flc::parse_algo_kind(bench_algo)};
      }
      std::vector<flc::BenchReport> reports;
      for (auto a : algos) reports.push_back(flc::run_bench(a, bench_clients, bench_dim, bench_rounds));
      flc::write_bench_table(std::cout, reports);
    } else if (*sweep) {
      RunFlags flags = sweep_flags;
      const auto cfg = effective_config(flags);
      std::vector<std::uint64_t> seeds;
      for (std::uint32_t s = 0; s < sweep_seeds; ++s) seeds.push_back(s);
      const auto rows = flc::epsilon_sweep(cfg, parse_eps_list(eps_text), seeds, sweep_parallel == "true");
      flc::write_sweep_table(std::cout, rows);
      std::ofstream csv(sweep_out);
      if (!csv) throw flc::ConfigError("cannot open '" + sweep_out + "'");
      flc::write_sweep_csv(csv, rows);
    } else if (*gradcheck) {
      return run_gradcheck(gc_model, gc_in, gc_out, gc_hidden, gc_instances, gc_batch, gc_seed, gc_h, gc_tol);
    }
  } catch (const flc::ConfigError& e) {
    spdlog::error("configuration error: {}", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return 0;
}
