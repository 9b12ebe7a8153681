#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "flc/transport/codec.hpp"

namespace flc::transport {

using Clock = std::chrono::steady_clock;

/// One message (or a connection failure) arriving at the server.
struct Inbound {
  std::uint32_t client_id = 0;
  std::optional<Envelope> envelope;  // empty: the connection failed
  std::string failure;
  std::size_t frame_bytes = 0;
};

/// Thread-safe queue feeding the server.
class Inbox {
 public:
  void push(Inbound item);
  std::optional<Inbound> pop(Clock::time_point deadline);

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Inbound> items_;
};

/// Tracks which client ids have been admitted to a session of `expected` clients.
class Admission {
 public:
  explicit Admission(std::uint32_t expected) : expected_(expected) {}

  /// Returns a rejection reason, or nullopt after recording the id as joined.
  std::optional<std::string> admit(const Envelope& join);
  bool complete() const { return joined_.size() == expected_; }
  std::vector<std::uint32_t> missing() const;

 private:
  std::uint32_t expected_;
  std::set<std::uint32_t> joined_;
};

/// Builds the JOIN_ACK for an admitted client.
using AckBuilder = std::function<Envelope(std::uint32_t client_id)>;

/// Server side of a carrier: addresses clients by id, delivers encoded frames,
/// and surfaces everything clients send through one receive queue.
class ServerLink {
 public:
  virtual ~ServerLink() = default;

  /// Runs the JOIN handshake until `clients` distinct ids in [0, clients)
  /// joined, answering each with `ack`. Throws TransportError on timeout.
  virtual void admit_clients(std::uint32_t clients, const AckBuilder& ack, Clock::time_point deadline) = 0;

  virtual std::uint32_t client_count() const = 0;
  virtual void send(std::uint32_t client_id, std::span<const std::uint8_t> frame) = 0;
  virtual std::optional<Inbound> receive(Clock::time_point deadline) = 0;

  /// Client compute time on the critical path since the last call, when the
  /// carrier can observe it (in-process only).
  virtual double take_client_compute_ms() { return 0.0; }
};

struct TrafficCounters {
  std::uint64_t frame_bytes_up = 0;
  std::uint64_t payload_bytes_up = 0;
  std::uint64_t frame_bytes_down = 0;
  std::uint64_t payload_bytes_down = 0;
};

/// Round-level operations on top of a ServerLink, with byte accounting.
class ServerEndpoint {
 public:
  explicit ServerEndpoint(ServerLink& link) : link_(link) {}

  /// Sends one identical frame to every client, ascending id.
  void broadcast(MessageKind kind, std::uint32_t round, std::span<const std::uint8_t> payload);

  /// Waits for one LOCAL_UPDATE per client for `round` and returns them sorted
  /// by client id. Updates from earlier rounds are dropped.
  std::vector<Envelope> gather(std::uint32_t round, std::chrono::milliseconds timeout);

  const TrafficCounters& traffic() const { return traffic_; }
  ServerLink& link() { return link_; }

 private:
  ServerLink& link_;
  TrafficCounters traffic_;
};

/// Client-side protocol state machine driven by the carrier.
class MessageHandler {
 public:
  virtual ~MessageHandler() = default;
  virtual Envelope hello() = 0;
  /// Responses to send back; may throw, in which case the carrier reports an
  /// ERROR envelope on the client's behalf.
  virtual std::vector<Envelope> on_message(const Envelope& env) = 0;
};

/// In-memory carrier. Every message still passes through the frame codec so
/// byte counts and payload bytes match the TCP carrier exactly. With
/// `parallel`, each client runs on its own worker thread; otherwise handlers
/// run inline on the server thread in ascending id order.
class InProcessHub final : public ServerLink {
 public:
  InProcessHub(std::vector<MessageHandler*> handlers, bool parallel);
  ~InProcessHub() override;

  InProcessHub(const InProcessHub&) = delete;
  InProcessHub& operator=(const InProcessHub&) = delete;

  void admit_clients(std::uint32_t clients, const AckBuilder& ack, Clock::time_point deadline) override;
  std::uint32_t client_count() const override { return static_cast<std::uint32_t>(slots_.size()); }
  void send(std::uint32_t client_id, std::span<const std::uint8_t> frame) override;
  std::optional<Inbound> receive(Clock::time_point deadline) override;
  double take_client_compute_ms() override;

 private:
  struct Worker;

  void deliver(std::uint32_t client_id, MessageHandler& handler, const std::vector<std::uint8_t>& frame);
  void record_compute(double ms);

  std::vector<MessageHandler*> handlers_;
  bool parallel_;
  std::vector<MessageHandler*> slots_;  // indexed by admitted client id
  std::vector<std::unique_ptr<Worker>> workers_;
  Inbox inbox_;
  std::mutex compute_mu_;
  double compute_sum_ms_ = 0.0;
  double compute_max_ms_ = 0.0;
};

}  // namespace flc::transport
