#pragma once

// Streams numbered frames across one emulated connection and checks that
// the receiver sees each exactly once and in order.

#include <string>

#include "anonpads/emu_runtime.hpp"

namespace anonpads::testing {

struct ChurnOutcome {
  bool ok = false;
  std::string error;
  std::uint32_t delivered = 0;
  EmuStats stats;
};

namespace detail {

class ChurnReceiver final : public Actor {
 public:
  explicit ChurnReceiver(std::uint32_t expected) : expected_(expected) {}
  void on_start(NetContext&) override {}
  void on_message(NetContext& ctx, ConnId, Message msg) override {
    const auto* ack = std::get_if<Ack>(&msg);
    if (ack == nullptr || ack->cumulative_seq != next_) {
      error = "frame " + std::to_string(next_) + " expected, got " +
              (ack ? std::to_string(ack->cumulative_seq) : std::string(type_name(type_of(msg))));
      ctx.finish();
      return;
    }
    if (++next_ == expected_) ctx.finish();
  }
  void on_closed(NetContext& ctx, ConnId, const std::string& reason) override {
    if (next_ != expected_ && error.empty()) error = "closed early: " + reason;
    ctx.finish();
  }
  std::uint32_t received() const { return next_; }
  std::string error;

 private:
  std::uint32_t expected_;
  std::uint32_t next_ = 0;
};

class ChurnSender final : public Actor {
 public:
  ChurnSender(Endpoint to, std::uint32_t n) : to_(std::move(to)), n_(n) {}
  void on_start(NetContext& ctx) override { ctx.connect(to_); }
  void on_connected(NetContext& ctx, ConnId c) override {
    for (std::uint32_t i = 0; i < n_; ++i) ctx.send(c, Ack{i});
    ctx.close(c);
  }
  void on_connect_failed(NetContext& ctx, ConnId, const std::string& reason) override {
    error = "connect failed: " + reason;
    ctx.finish();
  }
  void on_message(NetContext&, ConnId, Message) override {}
  void on_closed(NetContext& ctx, ConnId, const std::string&) override { ctx.finish(); }
  std::string error;

 private:
  Endpoint to_;
  std::uint32_t n_;
};

}  // namespace detail

inline ChurnOutcome run_churn(const EmuConfig& cfg, std::uint32_t frames) {
  EmuRuntime rt(cfg);
  detail::ChurnReceiver rx(frames);
  const Endpoint at = rt.add_actor(rx, "rx");
  detail::ChurnSender tx(at, frames);
  rt.add_actor(tx, "tx");
  rt.run();
  ChurnOutcome out;
  out.delivered = rx.received();
  out.stats = rt.stats();
  out.error = !rx.error.empty() ? rx.error : tx.error;
  out.ok = out.error.empty() && out.delivered == frames;
  if (out.ok && rt.stats().channel_failures != 0) {
    out.ok = false;
    out.error = "channel failure after full delivery";
  }
  if (!out.ok && out.error.empty()) out.error = "stalled after " + std::to_string(out.delivered) + " frames";
  return out;
}

/// The fault mix used for churn checks: 20% drop, 10% duplication, a link
/// reset every 50 emissions, fast circuits so runs stay short.
inline EmuConfig churn_config(std::uint64_t seed) {
  EmuConfig cfg;
  cfg.seed = seed;
  cfg.circuit.params = LatencyParams::from_moments(40.0, 20.0);
  cfg.faults.drop = 0.2;
  cfg.faults.duplicate = 0.1;
  cfg.faults.reset_every = 50;
  cfg.reliability.max_retries = 40;
  return cfg;
}

}  // namespace anonpads::testing
