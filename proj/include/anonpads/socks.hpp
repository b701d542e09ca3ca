#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "anonpads/socket.hpp"
#include "anonpads/wire.hpp"

namespace anonpads {

/// SOCKS5 client settings. Defaults match a local Tor daemon.
struct SocksConfig {
  std::string proxy_host = "127.0.0.1";
  std::uint16_t proxy_port = 9050;
  int connect_retries = 10;
  int initial_backoff_ms = 2000;
  int max_backoff_ms = 30000;
  std::chrono::milliseconds io_timeout{30000};

  void validate() const;

  /// Applies ANONPADS_SOCKS_PROXY (host:port) when it is set.
  SocksConfig with_env_override() const;
};

inline constexpr char kSocksProxyEnv[] = "ANONPADS_SOCKS_PROXY";

namespace socks5 {
inline constexpr std::uint8_t kVersion = 0x05;
inline constexpr std::uint8_t kMethodNoAuth = 0x00;
inline constexpr std::uint8_t kMethodNoneAcceptable = 0xFF;
inline constexpr std::uint8_t kCmdConnect = 0x01;
inline constexpr std::uint8_t kAtypIpv4 = 0x01;
inline constexpr std::uint8_t kAtypDomain = 0x03;
inline constexpr std::uint8_t kAtypIpv6 = 0x04;
inline constexpr std::uint8_t kReplySucceeded = 0x00;

/// Method negotiation offering only "no authentication": 05 01 00.
Bytes greeting();
/// CONNECT by domain name: 05 01 00 03 <len> <host> <port BE>.
Bytes connect_request(const Endpoint& dest);
const char* reply_text(std::uint8_t rep);
}  // namespace socks5

/// Every attempt failed; carries the attempt count and the last reason.
class SocksConnectFailed : public TransportError {
 public:
  SocksConnectFailed(const std::string& what, const std::string& endpoint, int attempts)
      : TransportError(what + " after " + std::to_string(attempts) + " attempt(s)", endpoint), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

struct SocksConnection {
  TcpStream stream;
  int attempts = 0;
  /// Backoff waits taken between attempts.
  std::vector<std::chrono::milliseconds> backoffs;
};

using SleepFn = std::function<void(std::chrono::milliseconds)>;

/// Backoff before retry number `retry` (1-based): initial * 2^(retry-1), capped.
std::chrono::milliseconds socks_backoff(const SocksConfig& cfg, int retry);

/// RFC 1928 handshake (no-auth) then CONNECT by domain name through the proxy,
/// retrying with exponential backoff. Throws SocksConnectFailed.
SocksConnection socks_connect(const SocksConfig& cfg, const Endpoint& dest, const SleepFn& sleep = {});

}  // namespace anonpads
