#pragma once

#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <span>
#include <string>
#include <utility>

#include "anonpads/wire.hpp"

namespace anonpads {

/// Transport failure with the endpoint it concerns.
class TransportError : public std::runtime_error {
 public:
  TransportError(const std::string& what, std::string endpoint)
      : std::runtime_error(what + " [" + endpoint + "]"), endpoint_(std::move(endpoint)) {}
  const std::string& endpoint() const { return endpoint_; }

 private:
  std::string endpoint_;
};

/// Owning TCP socket with blocking reads and writes.
class TcpStream {
 public:
  TcpStream() = default;
  explicit TcpStream(int fd) : fd_(fd) {}
  TcpStream(TcpStream&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  TcpStream& operator=(TcpStream&& other) noexcept;
  TcpStream(const TcpStream&) = delete;
  TcpStream& operator=(const TcpStream&) = delete;
  ~TcpStream() { close(); }

  /// Resolves host (name or dotted IPv4) and connects within `timeout`.
  static TcpStream connect(const std::string& host, std::uint16_t port,
                           std::chrono::milliseconds timeout = std::chrono::seconds(10));

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }

  void write_all(ByteView bytes);
  /// Returns 0 on orderly shutdown by the peer. Throws on error.
  std::size_t read_some(std::span<std::uint8_t> buf);
  /// Reads exactly buf.size() bytes; throws on EOF or error.
  void read_exact(std::span<std::uint8_t> buf);
  /// Bounds every subsequent read; zero clears the bound.
  void set_read_timeout(std::chrono::milliseconds timeout);

  void shutdown_write();
  /// Wakes any thread blocked in read_some().
  void shutdown_both();
  void close();

 private:
  int fd_ = -1;
};

class TcpListener {
 public:
  TcpListener() = default;
  TcpListener(TcpListener&& other) noexcept : fd_(std::exchange(other.fd_, -1)), port_(other.port_) {}
  TcpListener& operator=(TcpListener&& other) noexcept;
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;
  ~TcpListener() { close(); }

  /// Binds and listens; port 0 picks an ephemeral port (see port()).
  static TcpListener bind(const std::string& host, std::uint16_t port);

  /// Waits up to `timeout` for a connection; returns an invalid stream on timeout.
  TcpStream accept(std::chrono::milliseconds timeout);

  std::uint16_t port() const { return port_; }
  bool valid() const { return fd_ >= 0; }
  void close();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// Plain TCP connection to a direct endpoint.
TcpStream connect_direct(const Endpoint& ep, std::chrono::milliseconds timeout = std::chrono::seconds(10));

}  // namespace anonpads
