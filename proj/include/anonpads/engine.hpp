#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "anonpads/balancer.hpp"
#include "anonpads/model.hpp"
#include "anonpads/runtime.hpp"
#include "anonpads/wire.hpp"

namespace anonpads {

enum class Placement { round_robin, seeded_random };

struct EngineConfig {
  ModelConfig model;
  std::uint64_t n_steps = 200;
  std::uint64_t seed = 1;
  BalancerConfig balancer;
  Placement placement = Placement::round_robin;
  /// Registration through roster.
  double bootstrap_timeout_ms = 300'000.0;
  /// Longest wait for any single step to complete.
  double step_timeout_ms = 600'000.0;
  /// Keep the per-message trace used by the barrier-safety checker.
  bool record_trace = false;

  void validate() const;
};

/// Initial owner of an entity.
std::uint32_t initial_lp(std::uint32_t entity_id, std::uint32_t n_lps, std::uint64_t seed, Placement p);

struct StepRecord {
  std::uint64_t step = 0;
  std::uint64_t pings_total = 0;
  std::uint64_t pings_remote = 0;
  std::uint64_t digest_frames = 0;
  std::uint64_t ping_frames = 0;
  std::uint64_t migrate_frames = 0;
  std::uint64_t migrations = 0;
  /// Entities hosted after the boundary.
  std::uint64_t local_entities = 0;
  /// Hash of the whole directory after the boundary.
  std::uint64_t directory_hash = 0;

  bool operator==(const StepRecord&) const = default;
};

struct RunMetrics {
  double wct_s = 0.0;
  double init_s = 0.0;
  std::uint64_t pings_total = 0;
  std::uint64_t pings_remote = 0;
  std::uint64_t digest_frames = 0;
  std::uint64_t ping_frames = 0;
  std::uint64_t migrate_frames = 0;
  std::uint64_t migrations = 0;
  std::vector<StepRecord> per_step;

  bool operator==(const RunMetrics&) const = default;
};

/// Exact number of committed migrations.
inline std::uint64_t migration_stats(const RunMetrics& m) { return m.migrations; }

struct TraceEvent {
  enum class Kind { applied, barrier_open };
  Kind kind = Kind::applied;
  std::uint64_t step = 0;
  std::uint32_t peer = 0;
  MsgType type = MsgType::step_end;
  /// sent_count for StepEnd entries.
  std::uint32_t value = 0;
};

/// Checks one LP's trace: nothing stamped t+1 is applied before barrier t
/// opens, and every barrier opens only after each peer's announced frames
/// for that step were applied. Returns a description of the first violation.
std::optional<std::string> check_barrier_trace(const std::vector<TraceEvent>& trace, std::uint32_t self_lp,
                                               std::uint32_t n_lps);

struct LpResult {
  bool ok = false;
  std::string error;
  std::uint32_t lp_id = 0;
  Roster roster;
  RunMetrics metrics;
  std::vector<SmhEntity> final_entities;
  std::vector<TraceEvent> trace;
  /// Channels this LP opened, by peer id.
  std::vector<std::uint32_t> initiated_to;
  /// Channels this LP accepted, by peer id.
  std::vector<std::uint32_t> accepted_from;
};

/// A logical process: registers with the SIMA, builds its part of the mesh
/// and runs the time-stepped model to completion.
class LogicalProcess final : public Actor {
 public:
  LogicalProcess(EngineConfig cfg, Endpoint sima);

  void on_start(NetContext& ctx) override;
  void on_connected(NetContext& ctx, ConnId conn) override;
  void on_connect_failed(NetContext& ctx, ConnId conn, const std::string& reason) override;
  void on_accepted(NetContext& ctx, ConnId conn) override;
  void on_message(NetContext& ctx, ConnId conn, Message msg) override;
  void on_closed(NetContext& ctx, ConnId conn, const std::string& reason) override;
  void on_timer(NetContext& ctx, std::uint64_t token) override;

  const LpResult& result() const { return result_; }
  bool done() const { return phase_ == Phase::done || phase_ == Phase::failed; }

 private:
  enum class Phase { registering, meshing, running, done, failed };

  struct StepState {
    std::map<std::uint32_t, std::vector<PositionEntry>> digests;
    std::map<std::uint32_t, std::uint32_t> announced;
    std::map<std::uint32_t, std::uint32_t> received;
    std::vector<SmhEntity> arrivals;
    std::vector<MigrateNotice> notices;
    std::map<std::uint32_t, std::uint32_t> sent;
    bool computed = false;
    StepRecord record;
  };

  void handle_sima(NetContext& ctx, Message& msg);
  void on_roster(NetContext& ctx, Roster roster);
  void identify(NetContext& ctx, ConnId conn, std::uint32_t peer);
  void maybe_start(NetContext& ctx);
  void begin_step(NetContext& ctx);
  void route(NetContext& ctx, std::uint32_t peer, Message msg);
  void apply(std::uint32_t peer, Message& msg);
  void advance(NetContext& ctx);
  void compute_step(NetContext& ctx);
  void plan_and_migrate(NetContext& ctx);
  bool barrier_open() const;
  void commit_step(NetContext& ctx);
  void complete(NetContext& ctx);
  void fail(NetContext& ctx, const std::string& why);
  void send_peer(NetContext& ctx, std::uint32_t peer, const Message& msg);
  std::uint32_t n_lps() const { return static_cast<std::uint32_t>(result_.roster.entries.size()); }

  EngineConfig cfg_;
  Endpoint sima_;
  Phase phase_ = Phase::registering;
  LpResult result_;

  ConnId sima_conn_ = 0;
  bool have_ack_ = false;
  bool have_roster_ = false;
  std::uint32_t me_ = 0;
  std::map<ConnId, std::uint32_t> connecting_;
  std::set<ConnId> unidentified_;
  std::map<ConnId, std::uint32_t> conn_peer_;
  std::map<std::uint32_t, ConnId> peer_conn_;
  /// Peers whose last StepEnd arrived, so their close is expected.
  std::set<std::uint32_t> peer_finished_;

  std::map<std::uint32_t, SmhEntity> local_;
  std::vector<std::uint32_t> directory_;
  std::map<std::uint32_t, std::uint64_t> arrived_at_;
  InteractionWindow<std::uint32_t> window_;
  std::map<std::uint64_t, std::vector<std::pair<std::uint32_t, Message>>> inbox_;
  std::uint64_t step_ = 0;
  StepState st_;

  double started_at_ = 0.0;
  double run_started_at_ = 0.0;
  double last_progress_ = 0.0;
};

/// Single-process reference run over the same model and RNG streams.
struct SequentialResult {
  std::vector<std::uint64_t> pings_per_step;
  std::vector<SmhEntity> final_entities;
};
SequentialResult run_sequential(const EngineConfig& cfg);

std::uint64_t directory_hash(const std::vector<std::uint32_t>& directory);

}  // namespace anonpads
