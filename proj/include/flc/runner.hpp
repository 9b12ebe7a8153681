#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "flc/algorithms.hpp"
#include "flc/config.hpp"
#include "flc/data.hpp"
#include "flc/transport/link.hpp"
#include "flc/transport/tcp.hpp"

namespace flc {

/// Materialized inputs of a run: data splits, client shards and w1.
struct Experiment {
  RunConfig config;
  Dataset train;
  Dataset test;
  Partition shards;
  std::vector<double> weights;  // I_p / I
  ParamVector initial_w;
};

Experiment build_experiment(const RunConfig& config);

struct Validation {
  double loss = 0.0;
  std::optional<double> accuracy;  // classifiers only
};

/// Mean loss and, for classifiers, the fraction of argmax-correct predictions.
Validation validate(const ModelSpec& spec, std::span<const double> params, const Dataset& test);

/// One metrics line.
struct RoundRecord {
  std::uint32_t round = 0;
  double train_loss = 0.0;
  std::optional<double> test_acc;
  std::optional<double> test_loss;
  double consensus_residual = 0.0;
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
  std::uint64_t payload_bytes_up = 0;
  std::uint64_t payload_bytes_down = 0;
  double t_local_ms = 0.0;
  double t_comm_ms = 0.0;
  double t_global_ms = 0.0;
};

/// Serialized as one JSON object without a trailing newline.
std::string metrics_line(const RoundRecord& record);
/// Parses and schema-checks one metrics line; throws ConfigError.
RoundRecord parse_metrics_line(const std::string& line);

struct RunRecord {
  std::vector<RoundRecord> rounds;
  ParamVector final_w;
};

/// Client side of a session: answers the server's protocol messages with the
/// configured algorithm's local update.
class ClientSession final : public transport::MessageHandler {
 public:
  ClientSession(const Experiment& experiment, std::uint32_t client_id);

  transport::Envelope hello() override;
  std::vector<transport::Envelope> on_message(const transport::Envelope& env) override;

  const ClientState& state() const { return state_; }
  bool done() const { return done_; }
  const std::optional<std::string>& rejection() const { return rejection_; }

 private:
  const Experiment& experiment_;
  ClientState state_;
  bool joined_ = false;
  bool done_ = false;
  std::optional<std::string> rejection_;
};

enum class Carrier { kInProcess, kTcp };

struct TrainOptions {
  bool parallel = false;
  bool record_timing = false;  // otherwise every t_* field is written as 0
  /// Called after each round's global update with the server state.
  std::function<void(std::uint32_t round, const ServerState& server)> on_round;
  /// Receives each metrics record as soon as its round completes.
  std::function<void(const RoundRecord&)> on_record;
};

/// Runs the server side of a session over `link`: handshake, T rounds, DONE.
RunRecord serve_session(const Experiment& experiment, transport::ServerLink& link, const TrainOptions& options);

/// Full run with the server and all P clients in this process.
RunRecord train(const RunConfig& config, Carrier carrier, const TrainOptions& options = {});
/// `sessions`, when given, is filled with the client sessions. They live only
/// until train returns, so inspect them from the on_round callback.
RunRecord train(const Experiment& experiment, Carrier carrier, const TrainOptions& options,
                std::vector<const ClientSession*>* sessions = nullptr);

/// Connects to a server and serves as client `client_id` until DONE.
void run_client(const RunConfig& config, const transport::HostPort& server, std::uint32_t client_id);

struct SweepRow {
  double epsilon = 0.0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  std::vector<double> accuracies;
};

/// Runs `base` for every (epsilon, seed) pair and summarizes the final test
/// accuracy per epsilon. Duplicate epsilons are dropped with a warning.
std::vector<SweepRow> epsilon_sweep(const RunConfig& base, std::vector<double> eps_list,
                                    const std::vector<std::uint64_t>& seeds, bool parallel = false);
void write_sweep_table(std::ostream& out, const std::vector<SweepRow>& rows);
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

struct BenchReport {
  AlgoKind algo = AlgoKind::kIiAdmm;
  std::uint32_t clients = 0;
  std::size_t dim = 0;
  std::uint32_t rounds = 0;
  std::uint64_t payload_bytes_up_per_round = 0;
  std::uint64_t bytes_up_per_round = 0;
  std::optional<double> mean_t_local_ms;  // averages skip round 1
  std::optional<double> mean_t_comm_ms;
  std::optional<double> mean_t_global_ms;
};

/// Timing and byte measurements on a linear-regression model with `dim` parameters.
BenchReport run_bench(AlgoKind algo, std::uint32_t clients, std::size_t dim, std::uint32_t rounds);
void write_bench_table(std::ostream& out, const std::vector<BenchReport>& reports);

}  // namespace flc
