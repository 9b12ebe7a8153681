#include "flc/transport/codec.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <string>

#include "flc/errors.hpp"

namespace flc::transport {
namespace {

constexpr std::uint8_t kMagic[4] = {'F', 'L', 'M', 'P'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

// Bounds-checked little-endian reader over a byte span.
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes, std::uint64_t base = 0) : bytes_(bytes), base_(base) {}

  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::uint64_t offset() const { return base_ + pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n) throw ProtocolError(std::string("truncated ") + what, offset());
  }

  std::span<const std::uint8_t> bytes_;
  std::uint64_t base_;
  std::size_t pos_ = 0;
};

ParamVector read_vector(Reader& r) {
  const std::uint64_t count = r.u64("vector length");
  if (count > r.remaining() / 8) throw ProtocolError("vector length exceeds payload", r.offset() - 8);
  ParamVector v(static_cast<std::size_t>(count));
  for (double& x : v) x = r.f64("vector value");
  return v;
}

}  // namespace

std::string_view to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::kJoin: return "JOIN";
    case MessageKind::kJoinAck: return "JOIN_ACK";
    case MessageKind::kGlobalModel: return "GLOBAL_MODEL";
    case MessageKind::kLocalUpdate: return "LOCAL_UPDATE";
    case MessageKind::kDone: return "DONE";
    case MessageKind::kError: return "ERROR";
  }
  return "UNKNOWN";
}

std::vector<std::uint8_t> encode(const Envelope& env) {
  if (env.payload.size() > kMaxPayloadBytes) throw ProtocolError("payload exceeds 2^32 bytes");
  std::vector<std::uint8_t> out;
  out.reserve(kFrameHeaderSize + env.payload.size());
  for (std::uint8_t b : kMagic) out.push_back(b);
  out.push_back(kProtocolVersion);
  out.push_back(static_cast<std::uint8_t>(env.kind));
  put_u32(out, env.round);
  put_u32(out, env.client_id);
  put_u64(out, env.payload.size());
  out.insert(out.end(), env.payload.begin(), env.payload.end());
  return out;
}

FrameHeader decode_header(std::span<const std::uint8_t> header) {
  if (header.size() < 4) throw ProtocolError("truncated magic", header.size());
  for (std::size_t i = 0; i < 4; ++i) {
    if (header[i] != kMagic[i]) throw ProtocolError("bad magic", i);
  }
  Reader r(header.subspan(4), 4);
  const std::uint8_t version = r.u8("version");
  if (version != kProtocolVersion) throw ProtocolError("unsupported protocol version " + std::to_string(version), 4);
  const std::uint8_t kind = r.u8("kind");
  if (kind > static_cast<std::uint8_t>(MessageKind::kError)) {
    throw ProtocolError("unknown message kind " + std::to_string(kind), 5);
  }
  FrameHeader h{};
  h.kind = static_cast<MessageKind>(kind);
  h.round = r.u32("round");
  h.client_id = r.u32("client id");
  h.payload_len = r.u64("payload length");
  if (h.payload_len > kMaxPayloadBytes) throw ProtocolError("payload length exceeds 2^32 bytes", 14);
  return h;
}

Envelope decode(std::span<const std::uint8_t> frame) {
  const FrameHeader h = decode_header(frame.first(std::min(frame.size(), kFrameHeaderSize)));
  const auto body = frame.subspan(kFrameHeaderSize);
  if (body.size() < h.payload_len) throw ProtocolError("truncated payload", frame.size());
  if (body.size() > h.payload_len) throw ProtocolError("trailing bytes after payload", kFrameHeaderSize + h.payload_len);
  return Envelope{h.kind, h.round, h.client_id, std::vector<std::uint8_t>(body.begin(), body.end())};
}

std::vector<std::uint8_t> encode_vector(std::span<const double> v) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + 8 * v.size());
  put_u64(out, v.size());
  for (double x : v) put_u64(out, std::bit_cast<std::uint64_t>(x));
  return out;
}

std::vector<std::uint8_t> encode_vectors(std::span<const ParamVector> vectors) {
  std::vector<std::uint8_t> out;
  for (const auto& v : vectors) {
    const auto part = encode_vector(v);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

std::vector<ParamVector> decode_vectors(std::span<const std::uint8_t> payload, std::size_t expected) {
  Reader r(payload, kFrameHeaderSize);
  std::vector<ParamVector> out;
  out.reserve(expected);
  for (std::size_t i = 0; i < expected; ++i) out.push_back(read_vector(r));
  if (r.remaining() != 0) throw ProtocolError("unexpected bytes after vector payload", r.offset());
  return out;
}

std::uint64_t payload_size(AlgoKind kind, std::uint64_t m) {
  const std::uint64_t one = 8 + 8 * m;
  return kind == AlgoKind::kIceAdmm ? 2 * one : one;
}

std::vector<std::uint8_t> encode_join_ack(const JoinAck& ack) {
  std::vector<std::uint8_t> out;
  out.push_back(static_cast<std::uint8_t>(ack.model.kind));
  put_u32(out, ack.model.input_dim);
  put_u32(out, ack.model.output_dim);
  put_u32(out, ack.model.hidden_dim);
  out.push_back(static_cast<std::uint8_t>(ack.algo));
  put_u32(out, ack.rounds);
  const auto w = encode_vector(ack.initial_w);
  out.insert(out.end(), w.begin(), w.end());
  return out;
}

JoinAck decode_join_ack(std::span<const std::uint8_t> payload) {
  Reader r(payload, kFrameHeaderSize);
  JoinAck ack;
  const std::uint8_t model = r.u8("model kind");
  if (model > static_cast<std::uint8_t>(ModelKind::kMlp1)) throw ProtocolError("unknown model kind", kFrameHeaderSize);
  ack.model.kind = static_cast<ModelKind>(model);
  ack.model.input_dim = r.u32("input_dim");
  ack.model.output_dim = r.u32("output_dim");
  ack.model.hidden_dim = r.u32("hidden_dim");
  const std::uint8_t algo = r.u8("algorithm kind");
  if (algo > static_cast<std::uint8_t>(AlgoKind::kIiAdmm)) {
    throw ProtocolError("unknown algorithm kind", r.offset() - 1);
  }
  ack.algo = static_cast<AlgoKind>(algo);
  ack.rounds = r.u32("rounds");
  ack.initial_w = read_vector(r);
  if (r.remaining() != 0) throw ProtocolError("unexpected bytes after JOIN_ACK", r.offset());
  return ack;
}

Envelope make_error(std::uint32_t round, std::uint32_t client_id, std::string_view message) {
  return Envelope{MessageKind::kError, round, client_id, std::vector<std::uint8_t>(message.begin(), message.end())};
}

std::string error_text(const Envelope& env) { return std::string(env.payload.begin(), env.payload.end()); }

}  // namespace flc::transport
