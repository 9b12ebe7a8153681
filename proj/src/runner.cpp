#include "flc/runner.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "flc/errors.hpp"
#include "flc/transport/codec.hpp"

namespace flc {

using transport::Envelope;
using transport::MessageKind;

namespace {

using Millis = std::chrono::duration<double, std::milli>;

void check_dataset(const ModelSpec& spec, const Dataset& data, const char* which) {
  if (data.size() == 0) throw ConfigError(std::string(which) + " set is empty");
  if (data.input_dim != spec.input_dim) {
    throw ConfigError(std::string(which) + " set has " + std::to_string(data.input_dim) +
                      " features, model expects " + std::to_string(spec.input_dim));
  }
  if (!is_classifier(spec)) return;
  for (double y : data.labels) {
    if (y < 0.0 || y >= spec.output_dim || y != std::floor(y)) {
      throw ConfigError(std::string(which) + " set has label " + std::to_string(y) + " outside [0, " +
                        std::to_string(spec.output_dim) + ")");
    }
  }
}

std::size_t vectors_per_update(AlgoKind kind) { return kind == AlgoKind::kIceAdmm ? 2 : 1; }

}  // namespace

Experiment build_experiment(const RunConfig& config) {
  validate(config);
  Experiment ex;
  ex.config = config;
  const DataConfig& d = config.data;
  switch (d.source) {
    case DataSource::kSynthetic: {
      SyntheticSpec spec = d.synthetic;
      if (!d.synthetic_seed_set) spec.seed = config.seed;
      std::tie(ex.train, ex.test) = train_test_split(generate_synthetic(spec), d.test_fraction);
      break;
    }
    case DataSource::kIdx: {
      Dataset all = load_idx(d.images, d.labels);
      if (!d.test_images.empty()) {
        ex.train = std::move(all);
        ex.test = load_idx(d.test_images, d.test_labels);
      } else {
        std::tie(ex.train, ex.test) = train_test_split(all, d.test_fraction);
      }
      break;
    }
    case DataSource::kCsv: {
      Dataset all = load_csv(d.csv, d.label_column, d.header);
      if (!d.test_csv.empty()) {
        ex.train = std::move(all);
        ex.test = load_csv(d.test_csv, d.label_column, d.header);
      } else {
        std::tie(ex.train, ex.test) = train_test_split(all, d.test_fraction);
      }
      break;
    }
  }
  check_dataset(config.model, ex.train, "training");
  check_dataset(config.model, ex.test, "test");
  ex.shards = partition(ex.train, config.clients, d.partition, config.seed);
  ex.weights = shard_weights(ex.shards);
  ex.initial_w = init_params(config.model, config.seed);
  return ex;
}

Validation validate(const ModelSpec& spec, std::span<const double> params, const Dataset& test) {
  if (test.size() == 0) throw ConfigError("validation needs a nonempty test set");
  Validation v;
  v.loss = batch_loss(spec, params, as_batch(test));
  if (is_classifier(spec)) {
    const auto pred = predict(spec, params, test.inputs, test.input_dim);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == test.labels[i] ? 1 : 0;
    v.accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
  }
  return v;
}

std::string metrics_line(const RoundRecord& r) {
  nlohmann::ordered_json j;
  j["round"] = r.round;
  j["train_loss"] = r.train_loss;
  j["test_acc"] = r.test_acc ? nlohmann::ordered_json(*r.test_acc) : nlohmann::ordered_json(nullptr);
  j["test_loss"] = r.test_loss ? nlohmann::ordered_json(*r.test_loss) : nlohmann::ordered_json(nullptr);
  j["consensus_residual"] = r.consensus_residual;
  j["bytes_up"] = r.bytes_up;
  j["bytes_down"] = r.bytes_down;
  j["payload_bytes_up"] = r.payload_bytes_up;
  j["payload_bytes_down"] = r.payload_bytes_down;
  j["t_local_ms"] = r.t_local_ms;
  j["t_comm_ms"] = r.t_comm_ms;
  j["t_global_ms"] = r.t_global_ms;
  return j.dump();
}

RoundRecord parse_metrics_line(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("metrics line is not JSON: ") + e.what());
  }
  const auto number = [&](const char* key) {
    if (!j.contains(key) || !j.at(key).is_number()) throw ConfigError(std::string("metrics line lacks ") + key);
    return j.at(key);
  };
  const auto optional_number = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key)) throw ConfigError(std::string("metrics line lacks ") + key);
    if (j.at(key).is_null()) return std::nullopt;
    if (!j.at(key).is_number()) throw ConfigError(std::string("metrics field ") + key + " is not a number");
    return j.at(key).get<double>();
  };
  RoundRecord r;
  r.round = number("round").get<std::uint32_t>();
  r.train_loss = number("train_loss").get<double>();
  r.test_acc = optional_number("test_acc");
  r.test_loss = optional_number("test_loss");
  r.consensus_residual = number("consensus_residual").get<double>();
  r.bytes_up = number("bytes_up").get<std::uint64_t>();
  r.bytes_down = number("bytes_down").get<std::uint64_t>();
  r.payload_bytes_up = number("payload_bytes_up").get<std::uint64_t>();
  r.payload_bytes_down = number("payload_bytes_down").get<std::uint64_t>();
  r.t_local_ms = number("t_local_ms").get<double>();
  r.t_comm_ms = number("t_comm_ms").get<double>();
  r.t_global_ms = number("t_global_ms").get<double>();
  return r;
}

ClientSession::ClientSession(const Experiment& experiment, std::uint32_t client_id) : experiment_(experiment) {
  state_.id = client_id;
}

Envelope ClientSession::hello() { return Envelope{MessageKind::kJoin, 0, state_.id, {}}; }

std::vector<Envelope> ClientSession::on_message(const Envelope& env) {
  const RunConfig& cfg = experiment_.config;
  switch (env.kind) {
    case MessageKind::kJoinAck: {
      const auto ack = transport::decode_join_ack(env.payload);
      if (ack.model != cfg.model) throw ConfigError("server model spec differs from local config");
      if (ack.algo != cfg.algo.kind) {
        throw ConfigError("server runs " + std::string(to_string(ack.algo)) + ", local config says " +
                          std::string(to_string(cfg.algo.kind)));
      }
      if (ack.rounds != cfg.algo.rounds) throw ConfigError("server round count differs from local config");
      if (ack.initial_w != experiment_.initial_w) throw ConfigError("server initial model differs from local one");
      state_.z = ack.initial_w;
      state_.lambda.assign(ack.initial_w.size(), 0.0);
      state_.round = 0;
      joined_ = true;
      return {};
    }
    case MessageKind::kGlobalModel: {
      if (!joined_) throw ProtocolError("GLOBAL_MODEL before JOIN_ACK");
      const auto w = std::move(transport::decode_vectors(env.payload, 1)[0]);
      require_same_size(w, state_.z, "global model");
      const std::uint32_t round = env.round;
      const auto& indices = experiment_.shards.at(state_.id);
      BatchPlan plan{cfg.algo.kind == AlgoKind::kIceAdmm ? indices.size() : cfg.algo.batch_size, cfg.seed};
      ModelGradientSource source(cfg.model, experiment_.train, indices, plan, state_.id, round);
      const double rho = rho_at(cfg.algo, round);
      const NoiseSpec noise = make_noise_spec(cfg.privacy, cfg.algo.kind, rho, cfg.algo.zeta, cfg.algo.eta);
      auto rng = noise_stream(cfg.seed, state_.id, round);
      std::vector<ParamVector> outgoing;
      switch (cfg.algo.kind) {
        case AlgoKind::kFedAvg: {
          auto sent = perturb_output(fedavg_local(w, cfg.algo, round, source, cfg.privacy), noise, rng);
          state_.z = sent;
          outgoing.push_back(std::move(sent));
          break;
        }
        case AlgoKind::kIiAdmm: {
          auto sent = perturb_output(iiadmm_local(state_, w, cfg.algo, round, source, cfg.privacy), noise, rng);
          // Same inputs as the server's mirrored update: the communicated z.
          state_.lambda = dual_update(state_.lambda, rho, w, sent);
          state_.z = sent;
          outgoing.push_back(std::move(sent));
          break;
        }
        case AlgoKind::kIceAdmm: {
          auto pd = iceadmm_local(state_, w, cfg.algo, round, source, cfg.privacy);
          outgoing.push_back(perturb_output(pd.z, noise, rng));
          outgoing.push_back(pd.lambda);
          state_.z = std::move(pd.z);
          state_.lambda = std::move(pd.lambda);
          break;
        }
      }
      state_.round = round;
      return {Envelope{MessageKind::kLocalUpdate, round, state_.id, transport::encode_vectors(outgoing)}};
    }
    case MessageKind::kDone:
      done_ = true;
      return {};
    case MessageKind::kError:
      rejection_ = transport::error_text(env);
      return {};
    default:
      throw ProtocolError("client received unexpected " + std::string(transport::to_string(env.kind)));
  }
}

RunRecord serve_session(const Experiment& ex, transport::ServerLink& link, const TrainOptions& options) {
  const RunConfig& cfg = ex.config;
  const std::uint32_t clients = cfg.clients;
  const std::size_t m = ex.initial_w.size();
  const auto timeout = std::chrono::milliseconds(cfg.timeout_ms);
  const AlgoKind kind = cfg.algo.kind;

  const auto ack_payload =
      transport::encode_join_ack(transport::JoinAck{cfg.model, kind, cfg.algo.rounds, ex.initial_w});
  link.admit_clients(
      clients, [&](std::uint32_t id) { return Envelope{MessageKind::kJoinAck, 0, id, ack_payload}; },
      transport::Clock::now() + timeout);

  transport::ServerEndpoint endpoint(link);
  ServerState server{ex.initial_w, std::vector<ParamVector>(clients, ParamVector(m, 0.0)), 0, ex.weights};
  std::vector<ParamVector> z_list(clients, ex.initial_w);
  std::vector<Batch> shard_data;
  shard_data.reserve(clients);
  for (const auto& s : ex.shards) shard_data.push_back(gather_rows(ex.train, s));

  RunRecord record;
  for (std::uint32_t t = 1; t <= cfg.algo.rounds; ++t) {
    const transport::TrafficCounters before = endpoint.traffic();
    const auto t0 = transport::Clock::now();
    endpoint.broadcast(MessageKind::kGlobalModel, t, transport::encode_vector(server.w));
    auto updates = endpoint.gather(t, timeout);
    const auto t1 = transport::Clock::now();
    const double local_ms = link.take_client_compute_ms();

    const std::size_t per_update = vectors_per_update(kind);
    std::vector<ParamVector> lambdas(per_update == 2 ? clients : 0);
    for (std::uint32_t p = 0; p < clients; ++p) {
      auto vecs = transport::decode_vectors(updates[p].payload, per_update);
      for (const auto& v : vecs) {
        if (v.size() != m) throw ShapeError("client " + std::to_string(p) + " sent a vector of the wrong length");
      }
      require_finite(vecs[0], "client update");
      z_list[p] = std::move(vecs[0]);
      if (per_update == 2) lambdas[p] = std::move(vecs[1]);
    }

    const auto t2 = transport::Clock::now();
    double residual = 0.0;
    for (const auto& z : z_list) residual = std::max(residual, linf_distance(server.w, z));
    const double rho = rho_at(cfg.algo, t);
    const double rho_next = rho_at(cfg.algo, t + 1);
    ParamVector w_next;
    switch (kind) {
      case AlgoKind::kIiAdmm:
        for (std::uint32_t p = 0; p < clients; ++p) server.duals[p] = dual_update(server.duals[p], rho, server.w, z_list[p]);
        w_next = iiadmm_global(z_list, server.duals, rho_next);
        break;
      case AlgoKind::kIceAdmm:
        server.duals = std::move(lambdas);
        w_next = iceadmm_global(z_list, server.duals, rho_next);
        break;
      case AlgoKind::kFedAvg:
        w_next = fedavg_global(z_list, ex.weights);
        break;
    }
    require_finite(w_next, "global model in round " + std::to_string(t));
    const auto t3 = transport::Clock::now();

    RoundRecord rec;
    rec.round = t;
    for (std::uint32_t p = 0; p < clients; ++p) rec.train_loss += ex.weights[p] * batch_loss(cfg.model, z_list[p], shard_data[p]);
    if (t % cfg.eval_every == 0 || t == cfg.algo.rounds) {
      const Validation v = validate(cfg.model, w_next, ex.test);
      rec.test_loss = v.loss;
      rec.test_acc = v.accuracy;
    }
    rec.consensus_residual = residual;
    const auto& after = endpoint.traffic();
    rec.bytes_up = after.frame_bytes_up - before.frame_bytes_up;
    rec.bytes_down = after.frame_bytes_down - before.frame_bytes_down;
    rec.payload_bytes_up = after.payload_bytes_up - before.payload_bytes_up;
    rec.payload_bytes_down = after.payload_bytes_down - before.payload_bytes_down;
    if (options.record_timing) {
      rec.t_local_ms = local_ms;
      rec.t_comm_ms = std::max(0.0, Millis(t1 - t0).count() - local_ms);
      rec.t_global_ms = Millis(t3 - t2).count();
    }

    server.w = std::move(w_next);
    server.round = t;
    record.rounds.push_back(rec);
    if (options.on_round) options.on_round(t, server);
    if (options.on_record) options.on_record(rec);
  }
  endpoint.broadcast(MessageKind::kDone, cfg.algo.rounds, {});
  record.final_w = server.w;
  return record;
}

RunRecord train(const Experiment& ex, Carrier carrier, const TrainOptions& options,
                std::vector<const ClientSession*>* sessions) {
  const std::uint32_t clients = ex.config.clients;
  std::vector<std::unique_ptr<ClientSession>> owned;
  std::vector<transport::MessageHandler*> handlers;
  for (std::uint32_t id = 0; id < clients; ++id) {
    owned.push_back(std::make_unique<ClientSession>(ex, id));
    handlers.push_back(owned.back().get());
  }
  if (sessions != nullptr) {
    sessions->clear();
    for (const auto& s : owned) sessions->push_back(s.get());
  }

  if (carrier == Carrier::kInProcess) {
    transport::InProcessHub hub(handlers, options.parallel);
    return serve_session(ex, hub, options);
  }

  transport::TcpListener listener({"127.0.0.1", 0});
  const transport::HostPort addr{"127.0.0.1", listener.port()};
  const auto timeout = std::chrono::milliseconds(ex.config.timeout_ms);
  std::vector<std::exception_ptr> client_errors(clients);
  std::vector<std::thread> threads;
  RunRecord record;
  std::exception_ptr server_error;
  {
    transport::TcpServerLink link(listener);
    for (std::uint32_t id = 0; id < clients; ++id) {
      threads.emplace_back([&, id] {
        try {
          transport::run_tcp_client(addr, *owned[id], timeout);
        } catch (...) {
          client_errors[id] = std::current_exception();
        }
      });
    }
    try {
      record = serve_session(ex, link, options);
    } catch (...) {
      server_error = std::current_exception();
    }
    if (!server_error) {
      // Let clients read DONE before the sockets are torn down.
      for (auto& th : threads) th.join();
    }
  }
  for (auto& th : threads) {
    if (th.joinable()) th.join();
  }
  if (server_error) std::rethrow_exception(server_error);
  for (auto& e : client_errors) {
    if (e) std::rethrow_exception(e);
  }
  return record;
}

RunRecord train(const RunConfig& config, Carrier carrier, const TrainOptions& options) {
  const Experiment ex = build_experiment(config);
  return train(ex, carrier, options);
}

void run_client(const RunConfig& config, const transport::HostPort& server, std::uint32_t client_id) {
  const Experiment ex = build_experiment(config);
  if (client_id >= config.clients) {
    spdlog::warn("client id {} is outside [0, {}); the server will reject it", client_id, config.clients);
  }
  ClientSession session(ex, client_id);
  transport::run_tcp_client(server, session, std::chrono::milliseconds(config.timeout_ms));
}

std::vector<SweepRow> epsilon_sweep(const RunConfig& base, std::vector<double> eps_list,
                                    const std::vector<std::uint64_t>& seeds, bool parallel) {
  if (eps_list.empty()) throw ConfigError("epsilon list is empty");
  if (seeds.empty()) throw ConfigError("seed list is empty");
  if (!is_classifier(base.model)) throw ConfigError("epsilon sweep reports accuracy and needs a classifier");
  std::vector<double> unique;
  for (double e : eps_list) {
    if (!(e > 0.0)) throw ConfigError("epsilon values must be positive");
    if (std::find(unique.begin(), unique.end(), e) != unique.end()) {
      spdlog::warn("duplicate epsilon {} dropped from sweep", e);
      continue;
    }
    unique.push_back(e);
  }
  std::vector<SweepRow> rows;
  for (double eps : unique) {
    SweepRow row;
    row.epsilon = eps;
    for (std::uint64_t seed : seeds) {
      RunConfig cfg = base;
      cfg.seed = seed;
      cfg.privacy.enabled = true;
      cfg.privacy.epsilon = eps;
      const Experiment ex = build_experiment(cfg);
      TrainOptions opts;
      opts.parallel = parallel;
      const RunRecord rec = train(ex, Carrier::kInProcess, opts);
      row.accuracies.push_back(*validate(cfg.model, rec.final_w, ex.test).accuracy);
      spdlog::info("epsilon {} seed {}: accuracy {}", eps, seed, row.accuracies.back());
    }
    const double n = static_cast<double>(row.accuracies.size());
    double sum = 0.0;
    for (double a : row.accuracies) sum += a;
    row.mean_accuracy = sum / n;
    double ss = 0.0;
    for (double a : row.accuracies) ss += (a - row.mean_accuracy) * (a - row.mean_accuracy);
    row.std_accuracy = row.accuracies.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::string eps_text(double e) {
  if (std::isinf(e)) return "inf";
  std::ostringstream os;
  os << e;
  return os.str();
}

}  // namespace

void write_sweep_table(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << std::left << std::setw(10) << "epsilon" << std::setw(14) << "mean_acc" << std::setw(14) << "std_acc"
      << "runs\n";
  for (const auto& r : rows) {
    out << std::left << std::setw(10) << eps_text(r.epsilon) << std::setw(14) << std::fixed << std::setprecision(4)
        << r.mean_accuracy << std::setw(14) << r.std_accuracy << r.accuracies.size() << '\n';
    out.unsetf(std::ios::floatfield);
  }
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "epsilon,mean_accuracy,std_accuracy,runs\n";
  out << std::setprecision(17);
  for (const auto& r : rows) {
    out << eps_text(r.epsilon) << ',' << r.mean_accuracy << ',' << r.std_accuracy << ',' << r.accuracies.size()
        << '\n';
  }
}

BenchReport run_bench(AlgoKind algo, std::uint32_t clients, std::size_t dim, std::uint32_t rounds) {
  if (clients == 0 || rounds == 0) throw ConfigError("bench needs clients >= 1 and rounds >= 1");
  if (dim < 2) throw ConfigError("bench needs dim >= 2 (weights plus bias)");
  RunConfig cfg;
  cfg.model = ModelSpec{ModelKind::kLinearRegression, static_cast<std::uint32_t>(dim - 1), 1, 0};
  cfg.algo.kind = algo;
  cfg.algo.rho = 1.0;
  cfg.algo.zeta = 1.0;
  cfg.algo.eta = 0.01;
  cfg.algo.local_steps = 1;
  cfg.algo.batch_size = 8;
  cfg.algo.rounds = rounds;
  cfg.data.source = DataSource::kSynthetic;
  cfg.data.synthetic = SyntheticSpec{SyntheticKind::kRegression, std::size_t{clients} * 10, dim - 1, 1, 0.0, 0};
  cfg.data.synthetic_seed_set = true;
  cfg.clients = clients;
  cfg.eval_every = rounds;
  TrainOptions opts;
  opts.record_timing = true;
  const RunRecord rec = train(cfg, Carrier::kInProcess, opts);

  BenchReport report;
  report.algo = algo;
  report.clients = clients;
  report.dim = dim;
  report.rounds = rounds;
  report.payload_bytes_up_per_round = rec.rounds.back().payload_bytes_up;
  report.bytes_up_per_round = rec.rounds.back().bytes_up;
  if (rec.rounds.size() > 1) {
    double local = 0.0, comm = 0.0, global = 0.0;
    for (std::size_t i = 1; i < rec.rounds.size(); ++i) {
      local += rec.rounds[i].t_local_ms;
      comm += rec.rounds[i].t_comm_ms;
      global += rec.rounds[i].t_global_ms;
    }
    const double n = static_cast<double>(rec.rounds.size() - 1);
    report.mean_t_local_ms = local / n;
    report.mean_t_comm_ms = comm / n;
    report.mean_t_global_ms = global / n;
  }
  return report;
}

void write_bench_table(std::ostream& out, const std::vector<BenchReport>& reports) {
  const auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("n/a");
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << *v;
    return os.str();
  };
  out << std::left << std::setw(10) << "algorithm" << std::setw(9) << "clients" << std::setw(10) << "dim"
      << std::setw(8) << "rounds" << std::setw(18) << "payload_up/round" << std::setw(16) << "bytes_up/round"
      << std::setw(13) << "t_local_ms" << std::setw(13) << "t_comm_ms" << "t_global_ms\n";
  for (const auto& r : reports) {
    out << std::left << std::setw(10) << to_string(r.algo) << std::setw(9) << r.clients << std::setw(10) << r.dim
        << std::setw(8) << r.rounds << std::setw(18) << r.payload_bytes_up_per_round << std::setw(16)
        << r.bytes_up_per_round << std::setw(13) << cell(r.mean_t_local_ms) << std::setw(13)
        << cell(r.mean_t_comm_ms) << cell(r.mean_t_global_ms) << '\n';
  }
}

}  // namespace flc
