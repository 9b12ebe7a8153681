#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace flc {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration values or command-line usage.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Operands whose dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity appeared where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed dataset file; carries the byte offset of the failure.
class IngestionError : public Error {
 public:
  IngestionError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Malformed wire frame; carries the byte offset of the failure.
class ProtocolError : public Error {
 public:
  ProtocolError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  explicit ProtocolError(const std::string& what) : Error(what), offset_(0) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Connection-level failure (lost peer, refused connection, rejected handshake).
class TransportError : public Error {
 public:
  using Error::Error;
};

/// A synchronous round could not complete (timeout waiting on clients).
class RoundFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace flc
