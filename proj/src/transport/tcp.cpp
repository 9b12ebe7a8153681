#include "flc/transport/tcp.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>
#include <mutex>

#include <spdlog/spdlog.h>

#include "flc/errors.hpp"

namespace flc::transport {
namespace {

std::string errno_text() { return std::strerror(errno); }

int remaining_ms(std::optional<Clock::time_point> deadline) {
  if (!deadline) return -1;
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(*deadline - Clock::now()).count();
  return left <= 0 ? 0 : static_cast<int>(std::min<long long>(left, 1 << 30));
}

// Reads exactly buf.size() bytes. Returns the byte count read before an
// orderly close (equal to buf.size() on success).
std::size_t read_exact(const Socket& s, std::span<std::uint8_t> buf, std::optional<Clock::time_point> deadline) {
  std::size_t got = 0;
  while (got < buf.size()) {
    if (deadline) {
      pollfd pfd{s.fd(), POLLIN, 0};
      const int ready = ::poll(&pfd, 1, remaining_ms(deadline));
      if (ready < 0) {
        if (errno == EINTR) continue;
        throw TransportError("poll failed: " + errno_text());
      }
      if (ready == 0) throw TransportError("timed out waiting for data");
    }
    const ssize_t n = ::recv(s.fd(), buf.data() + got, buf.size() - got, 0);
    if (n == 0) return got;
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError("recv failed: " + errno_text());
    }
    got += static_cast<std::size_t>(n);
  }
  return got;
}

addrinfo* resolve(const HostPort& addr, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* result = nullptr;
  const std::string port = std::to_string(addr.port);
  const char* host = addr.host.empty() ? nullptr : addr.host.c_str();
  if (const int rc = ::getaddrinfo(host, port.c_str(), &hints, &result); rc != 0) {
    throw TransportError("cannot resolve '" + addr.host + "': " + ::gai_strerror(rc));
  }
  return result;
}

}  // namespace

HostPort parse_host_port(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos) throw ConfigError("expected HOST:PORT, got '" + std::string(text) + "'");
  HostPort out;
  out.host = std::string(text.substr(0, colon));
  const auto port = text.substr(colon + 1);
  unsigned value = 0;
  const auto [end, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
  if (port.empty() || ec != std::errc() || end != port.data() + port.size() || value > 65535) {
    throw ConfigError("invalid port in '" + std::string(text) + "'");
  }
  out.port = static_cast<std::uint16_t>(value);
  return out;
}

Socket::~Socket() {
  if (fd_ >= 0) ::close(fd_);
}

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = std::exchange(other.fd_, -1);
  }
  return *this;
}

void Socket::shutdown_both() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void write_all(const Socket& s, std::span<const std::uint8_t> bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(s.fd(), bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError("send failed: " + errno_text());
    }
    sent += static_cast<std::size_t>(n);
  }
}

std::optional<std::vector<std::uint8_t>> read_frame(const Socket& s, std::optional<Clock::time_point> deadline) {
  std::vector<std::uint8_t> frame(kFrameHeaderSize);
  const std::size_t got = read_exact(s, frame, deadline);
  if (got == 0) return std::nullopt;
  if (got < kFrameHeaderSize) {
    decode_header(std::span<const std::uint8_t>(frame).first(got));  // names the truncated field
    throw ProtocolError("connection closed inside frame header", got);
  }
  const FrameHeader header = decode_header(frame);
  frame.resize(kFrameHeaderSize + header.payload_len);
  const auto body = std::span<std::uint8_t>(frame).subspan(kFrameHeaderSize);
  if (read_exact(s, body, deadline) != body.size()) {
    throw ProtocolError("connection closed inside frame payload", kFrameHeaderSize);
  }
  return frame;
}

TcpListener::TcpListener(const HostPort& bind) {
  addrinfo* info = resolve(bind, true);
  std::string last_error = "no address";
  for (addrinfo* ai = info; ai != nullptr; ai = ai->ai_next) {
    Socket s(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
    if (!s.valid()) continue;
    const int one = 1;
    ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(s.fd(), ai->ai_addr, ai->ai_addrlen) != 0 || ::listen(s.fd(), 64) != 0) {
      last_error = errno_text();
      continue;
    }
    sockaddr_in local{};
    socklen_t len = sizeof(local);
    ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&local), &len);
    port_ = ntohs(local.sin_port);
    socket_ = std::move(s);
    break;
  }
  ::freeaddrinfo(info);
  if (!socket_.valid()) {
    throw TransportError("cannot listen on " + bind.host + ":" + std::to_string(bind.port) + ": " + last_error);
  }
}

std::optional<Socket> TcpListener::accept(Clock::time_point deadline) {
  while (true) {
    pollfd pfd{socket_.fd(), POLLIN, 0};
    const int ready = ::poll(&pfd, 1, remaining_ms(deadline));
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw TransportError("poll failed: " + errno_text());
    }
    if (ready == 0) return std::nullopt;
    Socket s(::accept(socket_.fd(), nullptr, nullptr));
    if (!s.valid()) {
      if (errno == EINTR || errno == ECONNABORTED) continue;
      throw TransportError("accept failed: " + errno_text());
    }
    const int one = 1;
    ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return s;
  }
}

struct TcpServerLink::Connection {
  std::uint32_t id = 0;
  Socket socket;
  std::mutex write_mu;
  std::thread reader;
};

TcpServerLink::TcpServerLink(TcpListener& listener) : listener_(listener) {}

TcpServerLink::~TcpServerLink() {
  for (auto& c : conns_) c->socket.shutdown_both();
  for (auto& c : conns_) {
    if (c->reader.joinable()) c->reader.join();
  }
}

void TcpServerLink::admit_clients(std::uint32_t clients, const AckBuilder& ack, Clock::time_point deadline) {
  Admission admission(clients);
  std::vector<std::unique_ptr<Connection>> slots(clients);
  while (!admission.complete()) {
    auto sock = listener_.accept(deadline);
    if (!sock) {
      std::string ids;
      for (auto id : admission.missing()) ids += (ids.empty() ? "" : ", ") + std::to_string(id);
      throw TransportError("handshake timed out; missing client(s) " + ids);
    }
    Envelope join;
    try {
      auto frame = read_frame(*sock, deadline);
      if (!frame) continue;
      join = decode(*frame);
    } catch (const Error& e) {
      spdlog::warn("dropping connection during handshake: {}", e.what());
      continue;
    }
    if (auto reason = admission.admit(join)) {
      spdlog::warn("rejecting client: {}", *reason);
      try {
        write_all(*sock, encode(make_error(0, join.client_id, *reason)));
      } catch (const Error&) {
      }
      continue;
    }
    auto conn = std::make_unique<Connection>();
    conn->id = join.client_id;
    conn->socket = std::move(*sock);
    slots[join.client_id] = std::move(conn);
    spdlog::info("client {} joined", join.client_id);
  }
  conns_ = std::move(slots);
  for (auto& c : conns_) {
    write_all(c->socket, encode(ack(c->id)));
    Connection* raw = c.get();
    c->reader = std::thread([this, raw] {
      while (true) {
        try {
          auto frame = read_frame(raw->socket);
          if (!frame) {
            inbox_.push(Inbound{raw->id, std::nullopt, "peer closed the connection", 0});
            return;
          }
          const std::size_t size = frame->size();
          inbox_.push(Inbound{raw->id, decode(*frame), {}, size});
        } catch (const std::exception& e) {
          inbox_.push(Inbound{raw->id, std::nullopt, e.what(), 0});
          return;
        }
      }
    });
  }
}

void TcpServerLink::send(std::uint32_t client_id, std::span<const std::uint8_t> frame) {
  if (client_id >= conns_.size()) throw TransportError("no client with id " + std::to_string(client_id));
  Connection& c = *conns_[client_id];
  std::lock_guard lock(c.write_mu);
  try {
    write_all(c.socket, frame);
  } catch (const TransportError& e) {
    throw TransportError("client " + std::to_string(client_id) + ": " + e.what());
  }
}

std::optional<Inbound> TcpServerLink::receive(Clock::time_point deadline) { return inbox_.pop(deadline); }

Socket connect_with_retry(const HostPort& addr, Clock::time_point deadline) {
  std::string last_error;
  while (true) {
    addrinfo* info = resolve(addr, false);
    for (addrinfo* ai = info; ai != nullptr; ai = ai->ai_next) {
      Socket s(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
      if (!s.valid()) continue;
      if (::connect(s.fd(), ai->ai_addr, ai->ai_addrlen) == 0) {
        ::freeaddrinfo(info);
        const int one = 1;
        ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        return s;
      }
      last_error = errno_text();
    }
    ::freeaddrinfo(info);
    if (Clock::now() >= deadline) {
      throw TransportError("cannot reach server " + addr.host + ":" + std::to_string(addr.port) + ": " + last_error);
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

void run_tcp_client(const HostPort& addr, MessageHandler& handler, std::chrono::milliseconds connect_timeout) {
  Socket sock = connect_with_retry(addr, Clock::now() + connect_timeout);
  const Envelope hello = handler.hello();
  write_all(sock, encode(hello));
  while (true) {
    auto frame = read_frame(sock);
    if (!frame) throw TransportError("server closed the connection before DONE");
    const Envelope env = decode(*frame);
    if (env.kind == MessageKind::kError) {
      handler.on_message(env);
      throw TransportError("server rejected client " + std::to_string(hello.client_id) + ": " + error_text(env));
    }
    std::vector<Envelope> replies;
    try {
      replies = handler.on_message(env);
    } catch (const std::exception& e) {
      try {
        write_all(sock, encode(make_error(env.round, hello.client_id, e.what())));
      } catch (const Error&) {
      }
      throw;
    }
    for (const auto& r : replies) write_all(sock, encode(r));
    if (env.kind == MessageKind::kDone) return;
  }
}

}  // namespace flc::transport
