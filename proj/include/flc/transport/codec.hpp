#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flc/algo_kind.hpp"
#include "flc/models.hpp"
#include "flc/param_vector.hpp"

namespace flc::transport {

enum class MessageKind : std::uint8_t {
  kJoin = 0,
  kJoinAck = 1,
  kGlobalModel = 2,
  kLocalUpdate = 3,
  kDone = 4,
  kError = 5,
};

std::string_view to_string(MessageKind kind);

struct Envelope {
  MessageKind kind = MessageKind::kJoin;
  std::uint32_t round = 0;
  std::uint32_t client_id = 0;
  std::vector<std::uint8_t> payload;

  bool operator==(const Envelope&) const = default;
};

// Frame layout (all integers little-endian):
//   "FLMP" | version u8 | kind u8 | round u32 | client_id u32 | payload_len u64 | payload
inline constexpr std::size_t kFrameHeaderSize = 22;
inline constexpr std::uint8_t kProtocolVersion = 0x01;
inline constexpr std::uint64_t kMaxPayloadBytes = std::uint64_t{1} << 32;

struct FrameHeader {
  MessageKind kind;
  std::uint32_t round;
  std::uint32_t client_id;
  std::uint64_t payload_len;
};

std::vector<std::uint8_t> encode(const Envelope& env);

/// Decodes exactly one frame; trailing bytes are an error.
Envelope decode(std::span<const std::uint8_t> frame);

/// Validates and parses the fixed 22-byte header.
FrameHeader decode_header(std::span<const std::uint8_t> header);

/// Concatenated vectors, each as count u64 followed by count f64 values.
std::vector<std::uint8_t> encode_vectors(std::span<const ParamVector> vectors);
std::vector<std::uint8_t> encode_vector(std::span<const double> v);

/// Decodes exactly `expected` vectors filling the whole payload.
std::vector<ParamVector> decode_vectors(std::span<const std::uint8_t> payload, std::size_t expected);

/// Upstream LOCAL_UPDATE payload bytes per client: one vector for FedAvg and
/// IIADMM, two (z then lambda) for ICEADMM.
std::uint64_t payload_size(AlgoKind kind, std::uint64_t m);

/// Session parameters the server hands to each client at admission.
struct JoinAck {
  ModelSpec model;
  AlgoKind algo = AlgoKind::kIiAdmm;
  std::uint32_t rounds = 0;
  ParamVector initial_w;

  bool operator==(const JoinAck&) const = default;
};

// JOIN_ACK payload: model kind u8 | input_dim u32 | output_dim u32 |
// hidden_dim u32 | algo kind u8 | rounds u32 | vector(w1)
std::vector<std::uint8_t> encode_join_ack(const JoinAck& ack);
JoinAck decode_join_ack(std::span<const std::uint8_t> payload);

Envelope make_error(std::uint32_t round, std::uint32_t client_id, std::string_view message);
std::string error_text(const Envelope& env);

}  // namespace flc::transport
