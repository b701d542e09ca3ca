#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "anonpads/runtime.hpp"
#include "anonpads/socket_runtime.hpp"
#include "anonpads/wire.hpp"

namespace anonpads {

class RegistrationRejected : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SimaPhase { collecting, broadcast_done };

/// Registration state of the bootstrap coordinator. Ids are handed out
/// densely in arrival order.
struct SimaState {
  std::uint32_t expected_lps = 1;
  std::map<std::uint32_t, LpIdentity> registered;
  SimaPhase phase = SimaPhase::collecting;

  explicit SimaState(std::uint32_t expected = 1);
};

struct RegisterOutcome {
  RegisterAck ack;
  /// Set when this registration completed the run: send it to everyone.
  std::optional<Roster> roster;
};

/// Throws RegistrationRejected after broadcast or when the endpoint is
/// already registered.
RegisterOutcome handle_register(SimaState& state, const Register& msg);

struct ExitReport {
  std::vector<LpIdentity> assigned;
  double elapsed_ms = 0.0;
  bool ok = false;
  std::string error;
  std::vector<std::string> log;
};

struct SimaOptions {
  std::uint32_t expected_lps = 1;
  double timeout_ms = 300'000.0;
};

/// The coordinator as an actor: serves registrations, broadcasts one roster
/// and finishes.
class SimaActor final : public Actor {
 public:
  explicit SimaActor(SimaOptions opts);

  void on_start(NetContext& ctx) override;
  void on_accepted(NetContext& ctx, ConnId conn) override;
  void on_message(NetContext& ctx, ConnId conn, Message msg) override;
  void on_closed(NetContext& ctx, ConnId conn, const std::string& reason) override;
  void on_timer(NetContext& ctx, std::uint64_t token) override;

  const SimaState& state() const { return state_; }
  const ExitReport& report() const { return report_; }

 private:
  void fail(NetContext& ctx, std::string why);

  SimaOptions opts_;
  SimaState state_;
  std::map<ConnId, std::uint32_t> conn_to_lp_;
  ExitReport report_;
  double started_at_ = 0.0;
};

/// Runs a coordinator over sockets until the roster is out. Throws
/// std::runtime_error on timeout or bind failure.
ExitReport run_sima(const SocketRuntimeConfig& net, const SimaOptions& opts);

}  // namespace anonpads
