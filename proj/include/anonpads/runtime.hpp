#pragma once

#include <cstdint>
#include <string>

#include "anonpads/wire.hpp"

namespace anonpads {

/// Connection handle, unique within one runtime.
using ConnId = std::uint64_t;

/// What an actor may ask of the runtime hosting it. All calls come from the
/// actor's own logic context.
class NetContext {
 public:
  virtual ~NetContext() = default;

  /// Milliseconds since the runtime started: virtual in ledger mode, real otherwise.
  virtual double now_ms() const = 0;
  /// The endpoint peers should use to reach this actor.
  virtual Endpoint listen_endpoint() const = 0;
  /// Starts connecting; completion arrives as on_connected or on_connect_failed.
  virtual ConnId connect(const Endpoint& ep) = 0;
  virtual void send(ConnId conn, const Message& msg) = 0;
  /// Closes once queued frames are flushed.
  virtual void close(ConnId conn) = 0;
  virtual void set_timer(double delay_ms, std::uint64_t token) = 0;
  /// The actor is done; the runtime stops delivering events to it.
  virtual void finish() = 0;
};

/// Event-driven participant (coordinator, logical process, probe).
class Actor {
 public:
  virtual ~Actor() = default;

  virtual void on_start(NetContext& ctx) = 0;
  virtual void on_connected(NetContext&, ConnId) {}
  virtual void on_connect_failed(NetContext&, ConnId, const std::string& /*reason*/) {}
  virtual void on_accepted(NetContext&, ConnId) {}
  virtual void on_message(NetContext& ctx, ConnId conn, Message msg) = 0;
  virtual void on_closed(NetContext&, ConnId, const std::string& /*reason*/) {}
  virtual void on_timer(NetContext&, std::uint64_t /*token*/) {}
};

}  // namespace anonpads
