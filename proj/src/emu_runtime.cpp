#include "anonpads/emu_runtime.hpp"

#include <algorithm>
#include <array>
#include <thread>

namespace anonpads {

void EmuConfig::validate() const {
  circuit.validate();
  faults.validate();
  if (!(time_scale > 0.0)) throw std::invalid_argument("emu time_scale must be positive");
}

class EmuRuntime::Context final : public NetContext {
 public:
  Context(EmuRuntime& rt, std::size_t index, Actor& actor, Endpoint ep)
      : rt_(rt), index_(index), actor_(actor), ep_(std::move(ep)) {}

  double now_ms() const override { return rt_.now_; }
  Endpoint listen_endpoint() const override { return ep_; }
  ConnId connect(const Endpoint& ep) override { return rt_.do_connect(index_, ep); }
  void send(ConnId conn, const Message& msg) override { rt_.do_send(index_, conn, msg); }
  void close(ConnId conn) override { rt_.do_close(index_, conn); }
  void set_timer(double delay_ms, std::uint64_t token) override {
    rt_.schedule(rt_.now_ + std::max(0.0, delay_ms), [this, token] {
      if (!finished) actor_.on_timer(*this, token);
    });
  }
  void finish() override { finished = true; }

  Actor& actor() { return actor_; }

  bool finished = false;

 private:
  EmuRuntime& rt_;
  std::size_t index_;
  Actor& actor_;
  Endpoint ep_;
};

struct EmuRuntime::Conn {
  Conn(std::size_t idx, std::size_t initiator, std::size_t acceptor, const EmuConfig& cfg, std::uint64_t seed)
      : index(idx),
        actor{initiator, acceptor},
        rng(hash_combine(seed, idx)),
        faults(cfg.faults, hash_combine(seed, idx + 0x5eed)),
        rel{ReliabilityState(cfg.reliability), ReliabilityState(cfg.reliability)} {}

  std::size_t index;
  std::array<std::size_t, 2> actor;
  CircuitState circuit;
  Rng rng;
  FaultInjector faults;
  std::array<ReliabilityState, 2> rel;
  std::array<std::deque<Bytes>, 2> backlog;
  std::array<double, 2> last_arrival{0.0, 0.0};
  std::array<std::optional<double>, 2> tick_at;
  std::array<bool, 2> close_requested{false, false};
  std::array<bool, 2> closed{false, false};
  std::uint64_t generation = 0;
  bool link_down = false;
  bool failed = false;
};

namespace {

ConnId make_id(std::size_t conn_index, int side) { return (static_cast<ConnId>(conn_index) << 1 | side) + 1; }

std::size_t segment_wire_size(const Segment& s) {
  return s.kind == Segment::Kind::ack ? 1 + kHeaderSize + 4 : 1 + 4 + s.frame.size();
}

}  // namespace

EmuRuntime::EmuRuntime(EmuConfig cfg) : cfg_(std::move(cfg)), rng_(mix64(cfg_.seed)) { cfg_.validate(); }

EmuRuntime::~EmuRuntime() = default;

Endpoint EmuRuntime::add_actor(Actor& actor, const std::string& token, std::uint16_t port) {
  Endpoint ep{Scheme::emu, "anon:" + token, port};
  ep.validate();
  auto key = std::make_pair(ep.host, ep.port);
  if (listeners_.count(key) != 0) throw std::invalid_argument("emu endpoint already in use: " + ep.to_string());
  const std::size_t index = actors_.size();
  actors_.push_back(std::make_unique<Context>(*this, index, actor, ep));
  listeners_[key] = index;
  schedule(now_, [this, index] {
    auto& ctx = *actors_[index];
    if (!ctx.finished) ctx.actor().on_start(ctx);
  });
  return ep;
}

void EmuRuntime::schedule(double at, std::function<void()> fn) {
  events_.push(Event{at, next_seq_++, std::move(fn)});
}

void EmuRuntime::advance_clock(double event_at) {
  if (cfg_.sleep_mode) {
    using namespace std::chrono;
    const auto target = real_start_ + duration_cast<steady_clock::duration>(
                                          duration<double, std::milli>(event_at * cfg_.time_scale));
    std::this_thread::sleep_until(target);
    const double real_ms = duration<double, std::milli>(steady_clock::now() - real_start_).count();
    now_ = std::max({now_, event_at, real_ms / cfg_.time_scale});
  } else {
    now_ = std::max(now_, event_at);
  }
}

bool EmuRuntime::actor_live(std::size_t actor) const { return !actors_[actor]->finished; }

EmuRuntime::Outcome EmuRuntime::run(double limit_ms) {
  real_start_ = std::chrono::steady_clock::now() -
                std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                    std::chrono::duration<double, std::milli>(now_ * cfg_.time_scale));
  for (;;) {
    const bool all_done = !actors_.empty() && std::all_of(actors_.begin(), actors_.end(),
                                                           [](const auto& a) { return a->finished; });
    if (all_done) return Outcome::all_finished;
    if (events_.empty()) return Outcome::idle;
    if (events_.top().at > limit_ms) return Outcome::time_limit;
    Event ev = events_.top();
    events_.pop();
    advance_clock(ev.at);
    ev.fn();
  }
}

EmuRuntime::Conn* EmuRuntime::conn_of(ConnId id, int* side) {
  if (id == 0) return nullptr;
  const std::size_t index = static_cast<std::size_t>((id - 1) >> 1);
  if (index >= conns_.size()) return nullptr;
  *side = static_cast<int>((id - 1) & 1);
  return conns_[index].get();
}

ConnId EmuRuntime::do_connect(std::size_t actor, const Endpoint& ep) {
  const std::size_t index = conns_.size();
  auto it = listeners_.find({ep.host, ep.port});
  const bool reachable = ep.scheme == Scheme::emu && it != listeners_.end();
  conns_.push_back(std::make_unique<Conn>(index, actor, reachable ? it->second : actor, cfg_, rng_()));
  Conn& c = *conns_.back();
  c.circuit = open_circuit(cfg_.circuit, now_, c.rng);
  const double rtt = emu_sample_rtt(c.circuit, c.rng);
  const ConnId id = make_id(index, 0);
  if (!reachable) {
    c.failed = true;
    schedule(now_ + rtt, [this, actor, id, ep] {
      auto& ctx = *actors_[actor];
      if (!ctx.finished) ctx.actor().on_connect_failed(ctx, id, "no hidden service at " + ep.to_string());
    });
    return id;
  }
  // Nothing the acceptor sends may overtake the initiator's connect completion.
  c.last_arrival = {now_ + rtt, now_ + rtt / 2.0};
  const std::size_t acceptor = c.actor[1];
  schedule(now_ + rtt / 2.0, [this, acceptor, index] {
    auto& ctx = *actors_[acceptor];
    if (!ctx.finished && !conns_[index]->failed) ctx.actor().on_accepted(ctx, make_id(index, 1));
  });
  schedule(now_ + rtt, [this, actor, index] {
    auto& ctx = *actors_[actor];
    if (!ctx.finished && !conns_[index]->failed) ctx.actor().on_connected(ctx, make_id(index, 0));
  });
  return id;
}

void EmuRuntime::do_send(std::size_t actor, ConnId id, const Message& msg) {
  int side = 0;
  Conn* c = conn_of(id, &side);
  if (c == nullptr || c->actor[side] != actor) throw std::invalid_argument("send on unknown connection");
  if (c->failed || c->close_requested[side] || c->closed[side]) return;
  c->backlog[side].push_back(encode_frame(msg));
  flush_backlog(*c, side);
}

void EmuRuntime::do_close(std::size_t actor, ConnId id) {
  int side = 0;
  Conn* c = conn_of(id, &side);
  if (c == nullptr || c->actor[side] != actor) return;
  c->close_requested[side] = true;
  maybe_finish_close(*c, side);
}

void EmuRuntime::maybe_finish_close(Conn& c, int side) {
  if (!c.close_requested[side] || c.closed[side] || c.failed) return;
  if (!c.backlog[side].empty() || c.rel[side].unacked_count() != 0) return;
  c.closed[side] = true;
  const int peer = 1 - side;
  const double at = std::max(now_ + emu_sample_delay(c.circuit, c.rng), c.last_arrival[peer]);
  const std::size_t index = c.index;
  schedule(at, [this, index, peer] {
    Conn& conn = *conns_[index];
    if (conn.closed[peer] || conn.failed) return;
    conn.closed[peer] = true;
    auto& ctx = *actors_[conn.actor[peer]];
    if (!ctx.finished) ctx.actor().on_closed(ctx, make_id(index, peer), "closed by peer");
  });
}

void EmuRuntime::flush_backlog(Conn& c, int side) {
  while (!c.failed && !c.backlog[side].empty() && c.rel[side].can_send()) {
    Bytes frame = std::move(c.backlog[side].front());
    c.backlog[side].pop_front();
    for (const auto& seg : c.rel[side].send(std::move(frame), now_)) transmit(c, side, seg);
  }
  arm_tick(c, side);
}

void EmuRuntime::transmit(Conn& c, int from_side, const Segment& seg) {
  if (c.failed) return;
  auto adv = emu_advance(c.circuit, cfg_.circuit, now_, c.rng);
  if (adv.rebuilt) {
    c.circuit = adv.circuit;
    ++stats_.circuit_rebuilds;
    if (adv.failure) reset_link(c);
  }
  ++stats_.segments_sent;
  stats_.bytes_sent += segment_wire_size(seg);
  if (c.link_down) {
    ++stats_.segments_dropped;
    return;
  }
  const auto fate = c.faults.next_emission();
  if (fate.copies.empty()) ++stats_.segments_dropped;
  const int to = 1 - from_side;
  const std::uint64_t generation = c.generation;
  const std::size_t index = c.index;
  for (double extra : fate.copies) {
    double at = now_ + emu_sample_delay(c.circuit, c.rng);
    if (extra == 0.0) {
      at = std::max(at, c.last_arrival[to]);
      c.last_arrival[to] = at;
    } else {
      at += extra;
    }
    schedule(at, [this, index, to, generation, seg] { arrive(index, to, generation, seg); });
  }
  if (fate.reset_after) reset_link(c);
}

void EmuRuntime::reset_link(Conn& c) {
  ++c.generation;
  ++stats_.link_failures;
  c.link_down = true;
  c.last_arrival = {now_, now_};
  // The overlay needs a round trip to build a replacement circuit.
  const double restore_at = now_ + emu_sample_rtt(c.circuit, c.rng);
  const std::size_t index = c.index;
  schedule(restore_at, [this, index] {
    Conn& conn = *conns_[index];
    conn.link_down = false;
    conn.last_arrival = {std::max(conn.last_arrival[0], now_), std::max(conn.last_arrival[1], now_)};
    for (int side = 0; side < 2 && !conn.failed; ++side) {
      for (const auto& seg : conn.rel[side].on_link_reset(now_)) transmit(conn, side, seg);
      arm_tick(conn, side);
    }
  });
}

void EmuRuntime::arrive(std::size_t conn_index, int to_side, std::uint64_t generation, const Segment& seg) {
  Conn& c = *conns_[conn_index];
  if (c.failed || generation != c.generation) {
    ++stats_.segments_dropped;
    return;
  }
  auto received = c.rel[to_side].on_receive(seg, now_);
  for (const auto& e : received.emissions) transmit(c, to_side, e);
  if (seg.kind == Segment::Kind::ack) {
    flush_backlog(c, to_side);
    maybe_finish_close(c, to_side);
    return;
  }
  auto& ctx = *actors_[c.actor[to_side]];
  const ConnId id = make_id(conn_index, to_side);
  for (auto& frame : received.delivered) {
    ++stats_.frames_delivered;
    if (ctx.finished || c.closed[to_side] || c.failed) continue;
    auto decoded = decode_frame(frame);
    auto* d = std::get_if<Decoded>(&decoded);
    if (d == nullptr || d->consumed != frame.size()) {
      fail_conn(c, "malformed frame on emulated link");
      return;
    }
    ctx.actor().on_message(ctx, id, std::move(d->message));
  }
}

void EmuRuntime::arm_tick(Conn& c, int side) {
  auto deadline = c.rel[side].next_deadline();
  if (!deadline || c.failed) {
    c.tick_at[side].reset();
    return;
  }
  if (c.tick_at[side] && *c.tick_at[side] == *deadline) return;
  c.tick_at[side] = *deadline;
  const std::size_t index = c.index;
  const double at = *deadline;
  schedule(at, [this, index, side, at] { on_tick(index, side, at); });
}

void EmuRuntime::on_tick(std::size_t conn_index, int side, double armed_at) {
  Conn& c = *conns_[conn_index];
  if (c.failed || !c.tick_at[side] || *c.tick_at[side] != armed_at) return;
  c.tick_at[side].reset();
  try {
    const auto before = c.rel[side].retransmissions();
    for (const auto& seg : c.rel[side].tick(now_)) transmit(c, side, seg);
    stats_.retransmissions += c.rel[side].retransmissions() - before;
  } catch (const ChannelFailed& e) {
    fail_conn(c, std::string("channel-failed: ") + e.what());
    return;
  }
  arm_tick(c, side);
}

void EmuRuntime::fail_conn(Conn& c, const std::string& reason) {
  if (c.failed) return;
  c.failed = true;
  ++stats_.channel_failures;
  for (int side = 0; side < 2; ++side) {
    if (c.closed[side]) continue;
    c.closed[side] = true;
    auto& ctx = *actors_[c.actor[side]];
    if (!ctx.finished) ctx.actor().on_closed(ctx, make_id(c.index, side), reason);
  }
}

}  // namespace anonpads
