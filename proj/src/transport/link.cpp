#include "flc/transport/link.hpp"

#include <algorithm>
#include <map>

#include <spdlog/spdlog.h>

#include "flc/errors.hpp"

namespace flc::transport {

void Inbox::push(Inbound item) {
  {
    std::lock_guard lock(mu_);
    items_.push_back(std::move(item));
  }
  cv_.notify_one();
}

std::optional<Inbound> Inbox::pop(Clock::time_point deadline) {
  std::unique_lock lock(mu_);
  if (!cv_.wait_until(lock, deadline, [&] { return !items_.empty(); })) return std::nullopt;
  Inbound item = std::move(items_.front());
  items_.pop_front();
  return item;
}

std::optional<std::string> Admission::admit(const Envelope& join) {
  if (join.kind != MessageKind::kJoin) {
    return "expected JOIN, got " + std::string(to_string(join.kind));
  }
  if (join.client_id >= expected_) {
    return "client id " + std::to_string(join.client_id) + " out of range [0, " + std::to_string(expected_) + ")";
  }
  if (!joined_.insert(join.client_id).second) {
    return "client id " + std::to_string(join.client_id) + " already joined";
  }
  return std::nullopt;
}

std::vector<std::uint32_t> Admission::missing() const {
  std::vector<std::uint32_t> out;
  for (std::uint32_t id = 0; id < expected_; ++id) {
    if (!joined_.contains(id)) out.push_back(id);
  }
  return out;
}

void ServerEndpoint::broadcast(MessageKind kind, std::uint32_t round, std::span<const std::uint8_t> payload) {
  const Envelope env{kind, round, 0, std::vector<std::uint8_t>(payload.begin(), payload.end())};
  const auto frame = encode(env);
  const std::uint32_t clients = link_.client_count();
  for (std::uint32_t id = 0; id < clients; ++id) {
    link_.send(id, frame);
    traffic_.frame_bytes_down += frame.size();
    traffic_.payload_bytes_down += payload.size();
  }
}

std::vector<Envelope> ServerEndpoint::gather(std::uint32_t round, std::chrono::milliseconds timeout) {
  const std::uint32_t clients = link_.client_count();
  const auto deadline = Clock::now() + timeout;
  std::map<std::uint32_t, Envelope> received;
  while (received.size() < clients) {
    auto item = link_.receive(deadline);
    if (!item) {
      std::string ids;
      for (std::uint32_t id = 0; id < clients; ++id) {
        if (!received.contains(id)) ids += (ids.empty() ? "" : ", ") + std::to_string(id);
      }
      throw RoundFailure("round " + std::to_string(round) + " timed out waiting for client(s) " + ids);
    }
    if (!item->envelope) {
      throw TransportError("client " + std::to_string(item->client_id) + " connection lost: " + item->failure);
    }
    Envelope& env = *item->envelope;
    if (env.kind == MessageKind::kError) {
      throw TransportError("client " + std::to_string(item->client_id) + " reported an error: " + error_text(env));
    }
    if (env.kind != MessageKind::kLocalUpdate) {
      throw ProtocolError("client " + std::to_string(item->client_id) + " sent " + std::string(to_string(env.kind)) +
                          " during round " + std::to_string(round));
    }
    if (env.client_id != item->client_id) {
      throw ProtocolError("connection of client " + std::to_string(item->client_id) + " sent an update tagged " +
                          std::to_string(env.client_id));
    }
    if (env.round < round) {
      spdlog::warn("dropping stale update from client {} for round {} (current round {})", env.client_id, env.round,
                   round);
      continue;
    }
    if (env.round > round) {
      throw ProtocolError("client " + std::to_string(env.client_id) + " sent an update for future round " +
                          std::to_string(env.round));
    }
    if (received.contains(env.client_id)) {
      throw ProtocolError("duplicate update from client " + std::to_string(env.client_id) + " in round " +
                          std::to_string(round));
    }
    traffic_.frame_bytes_up += item->frame_bytes;
    traffic_.payload_bytes_up += env.payload.size();
    received.emplace(env.client_id, std::move(env));
  }
  std::vector<Envelope> out;
  out.reserve(received.size());
  for (auto& [id, env] : received) out.push_back(std::move(env));
  return out;
}

struct InProcessHub::Worker {
  std::uint32_t id = 0;
  MessageHandler* handler = nullptr;
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::vector<std::uint8_t>> queue;
  bool stop = false;
  std::thread thread;
};

InProcessHub::InProcessHub(std::vector<MessageHandler*> handlers, bool parallel)
    : handlers_(std::move(handlers)), parallel_(parallel) {}

InProcessHub::~InProcessHub() {
  for (auto& w : workers_) {
    {
      std::lock_guard lock(w->mu);
      w->stop = true;
    }
    w->cv.notify_one();
  }
  for (auto& w : workers_) {
    if (w->thread.joinable()) w->thread.join();
  }
}

void InProcessHub::admit_clients(std::uint32_t clients, const AckBuilder& ack, Clock::time_point /*deadline*/) {
  Admission admission(clients);
  slots_.assign(clients, nullptr);
  for (MessageHandler* handler : handlers_) {
    const auto frame = encode(handler->hello());
    const Envelope join = decode(frame);
    if (auto reason = admission.admit(join)) {
      spdlog::warn("rejecting client: {}", *reason);
      try {
        handler->on_message(make_error(0, join.client_id, *reason));
      } catch (const std::exception&) {
        // The rejected client records its own failure.
      }
      continue;
    }
    slots_[join.client_id] = handler;
  }
  if (!admission.complete()) {
    std::string ids;
    for (auto id : admission.missing()) ids += (ids.empty() ? "" : ", ") + std::to_string(id);
    throw TransportError("handshake incomplete: no JOIN from client(s) " + ids);
  }
  if (parallel_) {
    for (std::uint32_t id = 0; id < clients; ++id) {
      auto w = std::make_unique<Worker>();
      w->id = id;
      w->handler = slots_[id];
      Worker* raw = w.get();
      w->thread = std::thread([this, raw] {
        while (true) {
          std::vector<std::uint8_t> frame;
          {
            std::unique_lock lock(raw->mu);
            raw->cv.wait(lock, [&] { return raw->stop || !raw->queue.empty(); });
            if (raw->queue.empty()) return;
            frame = std::move(raw->queue.front());
            raw->queue.pop_front();
          }
          deliver(raw->id, *raw->handler, frame);
        }
      });
      workers_.push_back(std::move(w));
    }
  }
  for (std::uint32_t id = 0; id < clients; ++id) send(id, encode(ack(id)));
}

void InProcessHub::send(std::uint32_t client_id, std::span<const std::uint8_t> frame) {
  if (client_id >= slots_.size()) throw TransportError("no client with id " + std::to_string(client_id));
  std::vector<std::uint8_t> copy(frame.begin(), frame.end());
  if (!parallel_) {
    deliver(client_id, *slots_[client_id], copy);
    return;
  }
  Worker& w = *workers_[client_id];
  {
    std::lock_guard lock(w.mu);
    w.queue.push_back(std::move(copy));
  }
  w.cv.notify_one();
}

std::optional<Inbound> InProcessHub::receive(Clock::time_point deadline) { return inbox_.pop(deadline); }

void InProcessHub::deliver(std::uint32_t client_id, MessageHandler& handler, const std::vector<std::uint8_t>& frame) {
  std::vector<Envelope> replies;
  const Envelope env = decode(frame);
  const auto start = Clock::now();
  try {
    replies = handler.on_message(env);
  } catch (const std::exception& e) {
    replies = {make_error(env.round, client_id, e.what())};
  }
  if (env.kind == MessageKind::kGlobalModel) {
    record_compute(std::chrono::duration<double, std::milli>(Clock::now() - start).count());
  }
  for (const auto& reply : replies) {
    auto bytes = encode(reply);
    inbox_.push(Inbound{client_id, decode(bytes), {}, bytes.size()});
  }
}

void InProcessHub::record_compute(double ms) {
  std::lock_guard lock(compute_mu_);
  compute_sum_ms_ += ms;
  compute_max_ms_ = std::max(compute_max_ms_, ms);
}

double InProcessHub::take_client_compute_ms() {
  std::lock_guard lock(compute_mu_);
  const double out = parallel_ ? compute_max_ms_ : compute_sum_ms_;
  compute_sum_ms_ = compute_max_ms_ = 0.0;
  return out;
}

}  // namespace flc::transport
