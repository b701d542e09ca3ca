#include "anonpads/socks.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <thread>

namespace anonpads {

void SocksConfig::validate() const {
  if (proxy_host.empty()) throw std::invalid_argument("SOCKS proxy host is empty");
  if (proxy_port == 0) throw std::invalid_argument("SOCKS proxy port must be in 1..65535");
  if (connect_retries < 1) throw std::invalid_argument("connect_retries must be >= 1");
  if (initial_backoff_ms < 0 || max_backoff_ms < 0) throw std::invalid_argument("backoff must be non-negative");
}

SocksConfig SocksConfig::with_env_override() const {
  SocksConfig out = *this;
  if (const char* env = std::getenv(kSocksProxyEnv); env != nullptr && *env != '\0') {
    Endpoint ep = parse_endpoint(env, Scheme::direct);
    out.proxy_host = ep.host;
    out.proxy_port = ep.port;
  }
  return out;
}

namespace socks5 {

Bytes greeting() { return {kVersion, 0x01, kMethodNoAuth}; }

Bytes connect_request(const Endpoint& dest) {
  if (dest.host.empty() || dest.host.size() > 255)
    throw std::invalid_argument("SOCKS domain must be 1..255 bytes");
  Bytes out{kVersion, kCmdConnect, 0x00, kAtypDomain, static_cast<std::uint8_t>(dest.host.size())};
  out.insert(out.end(), dest.host.begin(), dest.host.end());
  out.push_back(static_cast<std::uint8_t>(dest.port >> 8));
  out.push_back(static_cast<std::uint8_t>(dest.port));
  return out;
}

const char* reply_text(std::uint8_t rep) {
  switch (rep) {
    case 0x00:
      return "succeeded";
    case 0x01:
      return "general SOCKS server failure";
    case 0x02:
      return "connection not allowed by ruleset";
    case 0x03:
      return "network unreachable";
    case 0x04:
      return "host unreachable";
    case 0x05:
      return "connection refused";
    case 0x06:
      return "TTL expired";
    case 0x07:
      return "command not supported";
    case 0x08:
      return "address type not supported";
    default:
      return "unassigned reply code";
  }
}

}  // namespace socks5

std::chrono::milliseconds socks_backoff(const SocksConfig& cfg, int retry) {
  long long ms = cfg.initial_backoff_ms;
  for (int i = 1; i < retry && ms < cfg.max_backoff_ms; ++i) ms *= 2;
  return std::chrono::milliseconds(std::min<long long>(ms, cfg.max_backoff_ms));
}

namespace {

// One attempt: returns the tunneled stream or throws TransportError.
TcpStream attempt(const SocksConfig& cfg, const Endpoint& dest) {
  TcpStream s = TcpStream::connect(cfg.proxy_host, cfg.proxy_port, cfg.io_timeout);
  s.set_read_timeout(cfg.io_timeout);
  s.write_all(socks5::greeting());
  std::array<std::uint8_t, 2> method{};
  s.read_exact(method);
  if (method[0] != socks5::kVersion) throw TransportError("proxy is not SOCKS5", dest.to_string());
  if (method[1] != socks5::kMethodNoAuth) throw TransportError("proxy refused no-auth method", dest.to_string());

  s.write_all(socks5::connect_request(dest));
  std::array<std::uint8_t, 2> head{};
  s.read_exact(head);
  if (head[0] != socks5::kVersion) throw TransportError("malformed SOCKS reply", dest.to_string());
  if (head[1] != socks5::kReplySucceeded)
    throw TransportError(std::string("CONNECT rejected: ") + socks5::reply_text(head[1]), dest.to_string());

  std::array<std::uint8_t, 2> rsv_atyp{};
  s.read_exact(rsv_atyp);
  std::size_t addr_len = 0;
  switch (rsv_atyp[1]) {
    case socks5::kAtypIpv4:
      addr_len = 4;
      break;
    case socks5::kAtypIpv6:
      addr_len = 16;
      break;
    case socks5::kAtypDomain: {
      std::array<std::uint8_t, 1> len{};
      s.read_exact(len);
      addr_len = len[0];
      break;
    }
    default:
      throw TransportError("unknown address type in SOCKS reply", dest.to_string());
  }
  std::vector<std::uint8_t> bound(addr_len + 2);
  s.read_exact(bound);
  s.set_read_timeout(std::chrono::milliseconds(0));
  return s;
}

}  // namespace

SocksConnection socks_connect(const SocksConfig& cfg, const Endpoint& dest, const SleepFn& sleep) {
  cfg.validate();
  if (dest.host.empty() || dest.host.size() > 255)
    throw std::invalid_argument("SOCKS destination host must be 1..255 bytes");
  SocksConnection out;
  std::string last_error;
  for (int i = 1; i <= cfg.connect_retries; ++i) {
    if (i > 1) {
      auto wait = socks_backoff(cfg, i - 1);
      out.backoffs.push_back(wait);
      if (sleep) {
        sleep(wait);
      } else {
        std::this_thread::sleep_for(wait);
      }
    }
    out.attempts = i;
    try {
      out.stream = attempt(cfg, dest);
      return out;
    } catch (const TransportError& e) {
      last_error = e.what();
    }
  }
  throw SocksConnectFailed("SOCKS connect failed (" + last_error + ")", dest.to_string(), out.attempts);
}

}  // namespace anonpads
