#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "anonpads/latency.hpp"
#include "anonpads/reliability.hpp"
#include "anonpads/runtime.hpp"

namespace anonpads {

/// Settings of the in-process anonymizing overlay.
struct EmuConfig {
  CircuitConfig circuit;
  /// Extra faults injected on every link, on top of circuit churn.
  FaultConfig faults;
  ReliabilityConfig reliability;
  /// Sleep mode waits real time for every delay; ledger mode only advances
  /// a virtual clock.
  bool sleep_mode = false;
  /// Real milliseconds per virtual millisecond in sleep mode.
  double time_scale = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct EmuStats {
  std::uint64_t segments_sent = 0;
  std::uint64_t segments_dropped = 0;
  std::uint64_t bytes_sent = 0;
  std::uint64_t frames_delivered = 0;
  std::uint64_t retransmissions = 0;
  std::uint64_t circuit_rebuilds = 0;
  std::uint64_t link_failures = 0;
  std::uint64_t channel_failures = 0;
};

/// Single-threaded discrete-event host for actors talking over emulated
/// circuits. Every connection gets its own circuit, fault injector and a
/// reliability shim per side; delivery order within a connection is FIFO
/// except where the fault injector reorders.
class EmuRuntime {
 public:
  explicit EmuRuntime(EmuConfig cfg);
  ~EmuRuntime();
  EmuRuntime(const EmuRuntime&) = delete;
  EmuRuntime& operator=(const EmuRuntime&) = delete;

  /// Hosts `actor` at emu://anon:<token>:<port>. The actor must outlive run().
  Endpoint add_actor(Actor& actor, const std::string& token, std::uint16_t port = 9000);

  enum class Outcome { all_finished, idle, time_limit };
  /// Processes events until every actor called finish(), nothing is left to
  /// do, or virtual time passes `limit_ms`.
  Outcome run(double limit_ms = 1e15);

  double now_ms() const { return now_; }
  const EmuStats& stats() const { return stats_; }
  const EmuConfig& config() const { return cfg_; }

 private:
  class Context;
  struct Conn;
  struct Event {
    double at = 0.0;
    std::uint64_t seq = 0;
    std::function<void()> fn;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.at != b.at ? a.at > b.at : a.seq > b.seq;
    }
  };

  void schedule(double at, std::function<void()> fn);
  void advance_clock(double event_at);

  ConnId do_connect(std::size_t actor, const Endpoint& ep);
  void do_send(std::size_t actor, ConnId id, const Message& msg);
  void do_close(std::size_t actor, ConnId id);

  Conn* conn_of(ConnId id, int* side);
  void flush_backlog(Conn& c, int side);
  void transmit(Conn& c, int from_side, const Segment& seg);
  void arrive(std::size_t conn_index, int to_side, std::uint64_t generation, const Segment& seg);
  void arm_tick(Conn& c, int side);
  void on_tick(std::size_t conn_index, int side, double armed_at);
  void reset_link(Conn& c);
  void fail_conn(Conn& c, const std::string& reason);
  void maybe_finish_close(Conn& c, int side);
  bool actor_live(std::size_t actor) const;

  EmuConfig cfg_;
  std::vector<std::unique_ptr<Context>> actors_;
  std::map<std::pair<std::string, std::uint16_t>, std::size_t> listeners_;
  std::vector<std::unique_ptr<Conn>> conns_;
  std::priority_queue<Event, std::vector<Event>, Later> events_;
  std::uint64_t next_seq_ = 0;
  double now_ = 0.0;
  Rng rng_;
  EmuStats stats_;
  std::chrono::steady_clock::time_point real_start_;
};

}  // namespace anonpads
