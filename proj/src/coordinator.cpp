#include "anonpads/coordinator.hpp"

namespace anonpads {

namespace {
constexpr std::uint64_t kTimeoutToken = 1;
}

SimaState::SimaState(std::uint32_t expected) : expected_lps(expected) {
  if (expected == 0) throw std::invalid_argument("expected_lps must be >= 1");
}

RegisterOutcome handle_register(SimaState& state, const Register& msg) {
  if (state.phase != SimaPhase::collecting)
    throw RegistrationRejected("registration after roster broadcast from " + msg.listen_endpoint.to_string());
  for (const auto& [id, lp] : state.registered)
    if (lp.endpoint == msg.listen_endpoint)
      throw RegistrationRejected("endpoint " + msg.listen_endpoint.to_string() + " already registered as LP " +
                                 std::to_string(id));

  const auto id = static_cast<std::uint32_t>(state.registered.size());
  state.registered.emplace(id, LpIdentity{id, msg.listen_endpoint});

  RegisterOutcome out;
  out.ack = RegisterAck{id, state.expected_lps};
  if (state.registered.size() == state.expected_lps) {
    Roster roster;
    for (const auto& [lp_id, lp] : state.registered) roster.entries.push_back(lp);
    out.roster = std::move(roster);
    state.phase = SimaPhase::broadcast_done;
  }
  return out;
}

SimaActor::SimaActor(SimaOptions opts) : opts_(opts), state_(opts.expected_lps) {}

void SimaActor::on_start(NetContext& ctx) {
  started_at_ = ctx.now_ms();
  ctx.set_timer(opts_.timeout_ms, kTimeoutToken);
  report_.log.push_back("sima listening at " + ctx.listen_endpoint().to_string() + ", expecting " +
                        std::to_string(opts_.expected_lps) + " LPs");
}

void SimaActor::on_accepted(NetContext&, ConnId) {}

void SimaActor::on_message(NetContext& ctx, ConnId conn, Message msg) {
  auto* reg = std::get_if<Register>(&msg);
  if (reg == nullptr) {
    report_.log.push_back(std::string("ignoring unexpected ") + type_name(type_of(msg)));
    return;
  }
  RegisterOutcome outcome;
  try {
    outcome = handle_register(state_, *reg);
  } catch (const RegistrationRejected& e) {
    report_.log.push_back(std::string("rejected: ") + e.what());
    ctx.close(conn);
    return;
  }
  conn_to_lp_[conn] = outcome.ack.lp_id;
  report_.log.push_back("assigned pseudonym " + std::to_string(outcome.ack.lp_id) + " to " +
                        reg->listen_endpoint.to_string());
  ctx.send(conn, outcome.ack);
  if (!outcome.roster) return;

  for (const auto& [c, id] : conn_to_lp_) ctx.send(c, *outcome.roster);
  for (const auto& [c, id] : conn_to_lp_) ctx.close(c);
  report_.assigned = outcome.roster->entries;
  report_.ok = true;
  report_.elapsed_ms = ctx.now_ms() - started_at_;
  report_.log.push_back("roster of " + std::to_string(report_.assigned.size()) + " broadcast; exiting");
  ctx.finish();
}

void SimaActor::on_closed(NetContext&, ConnId conn, const std::string& reason) {
  if (state_.phase == SimaPhase::collecting && conn_to_lp_.count(conn) != 0)
    report_.log.push_back("registered LP " + std::to_string(conn_to_lp_[conn]) + " disconnected: " + reason);
}

void SimaActor::on_timer(NetContext& ctx, std::uint64_t token) {
  if (token != kTimeoutToken || state_.phase != SimaPhase::collecting) return;
  fail(ctx, "timeout waiting for registrations (" + std::to_string(state_.registered.size()) + " of " +
                std::to_string(state_.expected_lps) + ")");
}

void SimaActor::fail(NetContext& ctx, std::string why) {
  report_.ok = false;
  report_.error = std::move(why);
  report_.elapsed_ms = ctx.now_ms() - started_at_;
  report_.log.push_back("error: " + report_.error);
  ctx.finish();
}

ExitReport run_sima(const SocketRuntimeConfig& net, const SimaOptions& opts) {
  SimaActor sima(opts);
  SocketRuntime rt(sima, net);
  rt.run();
  if (!sima.report().ok) throw std::runtime_error(sima.report().error);
  return sima.report();
}

}  // namespace anonpads
