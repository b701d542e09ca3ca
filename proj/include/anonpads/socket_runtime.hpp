#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <variant>
#include <vector>

#include "anonpads/runtime.hpp"
#include "anonpads/socket.hpp"
#include "anonpads/socks.hpp"

namespace anonpads {

struct SocketRuntimeConfig {
  /// direct: connect straight to peers; socks: every connect goes through the proxy.
  Scheme transport = Scheme::direct;
  std::string bind_host = "127.0.0.1";
  std::uint16_t bind_port = 0;
  bool listen = true;
  /// Advertised endpoint (e.g. the onion name mapped to the bind port). When
  /// unset, direct://bind_host:<bound port>. Port 0 means the bound port.
  std::optional<Endpoint> advertise;
  SocksConfig socks;
  int direct_connect_retries = 5;
  int direct_backoff_ms = 100;
  std::chrono::milliseconds connect_timeout{10000};
};

/// Hosts one actor over real TCP sockets. A logic thread runs the actor;
/// acceptor, connector and per-connection reader threads feed it through a
/// single event queue.
class SocketRuntime final : public NetContext {
 public:
  /// Binds the listener immediately so listen_endpoint() is known before run().
  SocketRuntime(Actor& actor, SocketRuntimeConfig cfg);
  ~SocketRuntime() override;
  SocketRuntime(const SocketRuntime&) = delete;
  SocketRuntime& operator=(const SocketRuntime&) = delete;

  /// Runs the actor until it calls finish() or stop() is called.
  void run();
  /// Thread-safe request to end run().
  void stop();

  std::uint16_t bound_port() const { return listener_.port(); }
  std::uint64_t bytes_sent() const { return bytes_sent_; }

  double now_ms() const override;
  Endpoint listen_endpoint() const override { return advertised_; }
  ConnId connect(const Endpoint& ep) override;
  void send(ConnId conn, const Message& msg) override;
  void close(ConnId conn) override;
  void set_timer(double delay_ms, std::uint64_t token) override;
  void finish() override { finished_ = true; }

 private:
  struct Conn {
    TcpStream stream;
    std::thread reader;
    bool closed = false;
  };
  struct Accepted {
    ConnId id;
  };
  struct Connected {
    ConnId id;
  };
  struct ConnectFailed {
    ConnId id;
    std::string reason;
  };
  struct Inbound {
    ConnId id;
    Message msg;
  };
  struct Closed {
    ConnId id;
    std::string reason;
  };
  using Event = std::variant<Accepted, Connected, ConnectFailed, Inbound, Closed>;

  void push(Event ev);
  void accept_loop();
  void read_loop(ConnId id, const std::shared_ptr<Conn>& conn);
  void start_reader(ConnId id, TcpStream stream, Event announce);
  TcpStream open_stream(const Endpoint& ep);
  void interruptible_sleep(std::chrono::milliseconds d);
  void dispatch(Event& ev);
  void shutdown_all();

  Actor& actor_;
  SocketRuntimeConfig cfg_;
  TcpListener listener_;
  Endpoint advertised_;
  std::chrono::steady_clock::time_point start_;

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Event> events_;
  std::map<ConnId, std::shared_ptr<Conn>> conns_;
  std::vector<std::thread> helpers_;
  std::atomic<bool> stopping_{false};
  std::atomic<ConnId> next_id_{1};

  std::multimap<double, std::uint64_t> timers_;  // logic thread only
  bool finished_ = false;
  std::uint64_t bytes_sent_ = 0;
  std::thread acceptor_;
};

}  // namespace anonpads
