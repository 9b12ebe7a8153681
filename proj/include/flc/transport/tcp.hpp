#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "flc/transport/link.hpp"

namespace flc::transport {

struct HostPort {
  std::string host;
  std::uint16_t port = 0;
};

/// "host:port"; throws ConfigError when malformed.
HostPort parse_host_port(std::string_view text);

/// Owning socket descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket();
  Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void shutdown_both();

 private:
  int fd_ = -1;
};

void write_all(const Socket& s, std::span<const std::uint8_t> bytes);

/// Reads one whole frame. Returns nullopt on orderly close before any header
/// byte; throws ProtocolError on malformed frames, TransportError on I/O
/// failure or when `deadline` passes.
std::optional<std::vector<std::uint8_t>> read_frame(const Socket& s,
                                                    std::optional<Clock::time_point> deadline = std::nullopt);

class TcpListener {
 public:
  /// Binds and listens; port 0 picks an ephemeral port.
  explicit TcpListener(const HostPort& bind);
  std::uint16_t port() const { return port_; }
  /// nullopt when `deadline` passes first.
  std::optional<Socket> accept(Clock::time_point deadline);

 private:
  Socket socket_;
  std::uint16_t port_ = 0;
};

/// Server side of the TCP carrier: one reader thread per admitted client.
class TcpServerLink final : public ServerLink {
 public:
  explicit TcpServerLink(TcpListener& listener);
  ~TcpServerLink() override;

  void admit_clients(std::uint32_t clients, const AckBuilder& ack, Clock::time_point deadline) override;
  std::uint32_t client_count() const override { return static_cast<std::uint32_t>(conns_.size()); }
  void send(std::uint32_t client_id, std::span<const std::uint8_t> frame) override;
  std::optional<Inbound> receive(Clock::time_point deadline) override;

 private:
  struct Connection;

  TcpListener& listener_;
  std::vector<std::unique_ptr<Connection>> conns_;
  Inbox inbox_;
};

/// Client connection: retries until `deadline` so clients may start before the server.
Socket connect_with_retry(const HostPort& addr, Clock::time_point deadline);

/// Drives `handler` over TCP: sends its JOIN, then answers every server
/// message until DONE. Throws TransportError if the server sends ERROR or the
/// connection drops; handler exceptions are reported to the server as ERROR
/// and rethrown.
void run_tcp_client(const HostPort& addr, MessageHandler& handler, std::chrono::milliseconds connect_timeout);

}  // namespace flc::transport
