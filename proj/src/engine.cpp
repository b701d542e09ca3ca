#include "anonpads/engine.hpp"

#include <algorithm>

#include "anonpads/rng.hpp"

namespace anonpads {

namespace {

constexpr std::uint64_t kWatchdog = 1;

std::optional<std::uint64_t> step_of(const Message& m) {
  return std::visit(
      [](const auto& v) -> std::optional<std::uint64_t> {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, PositionDigest> || std::is_same_v<T, PingBatch> ||
                      std::is_same_v<T, StepEnd> || std::is_same_v<T, Migrate> ||
                      std::is_same_v<T, MigrateNotice>) {
          return v.step;
        } else {
          return std::nullopt;
        }
      },
      m);
}

}  // namespace

void EngineConfig::validate() const {
  model.validate();
  balancer.validate();
  if (model.n_entities == 0) throw std::invalid_argument("n_entities must be >= 1");
  if (!(bootstrap_timeout_ms > 0.0) || !(step_timeout_ms > 0.0))
    throw std::invalid_argument("timeouts must be positive");
}

std::uint32_t initial_lp(std::uint32_t entity_id, std::uint32_t n_lps, std::uint64_t seed, Placement p) {
  if (n_lps == 0) throw std::invalid_argument("n_lps must be >= 1");
  if (p == Placement::round_robin) return entity_id % n_lps;
  Rng rng = entity_rng(seed, entity_id, 0, RngPurpose::placement);
  return static_cast<std::uint32_t>(rng.uniform_int(0, n_lps - 1));
}

std::uint64_t directory_hash(const std::vector<std::uint32_t>& directory) {
  std::uint64_t h = mix64(directory.size());
  for (auto lp : directory) h = hash_combine(h, lp);
  return h;
}

std::optional<std::string> check_barrier_trace(const std::vector<TraceEvent>& trace, std::uint32_t self_lp,
                                               std::uint32_t n_lps) {
  // Barrier t may open once every peer's StepEnd(t) and announced frames are in.
  std::optional<std::uint64_t> opened;
  std::map<std::pair<std::uint64_t, std::uint32_t>, std::uint32_t> applied;
  std::map<std::pair<std::uint64_t, std::uint32_t>, std::uint32_t> announced;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& ev = trace[i];
    const std::string where = "trace[" + std::to_string(i) + "]: ";
    if (ev.kind == TraceEvent::Kind::applied) {
      const std::uint64_t current = opened ? *opened + 1 : 0;
      if (ev.step != current)
        return where + "message for step " + std::to_string(ev.step) + " applied while at step " +
               std::to_string(current);
      if (ev.type == MsgType::step_end)
        announced[{ev.step, ev.peer}] = ev.value;
      else
        ++applied[{ev.step, ev.peer}];
      continue;
    }
    const std::uint64_t expect = opened ? *opened + 1 : 0;
    if (ev.step != expect)
      return where + "barrier " + std::to_string(ev.step) + " opened out of order";
    for (std::uint32_t p = 0; p < n_lps; ++p) {
      if (p == self_lp) continue;
      auto a = announced.find({ev.step, p});
      if (a == announced.end())
        return where + "barrier " + std::to_string(ev.step) + " opened without StepEnd from LP " + std::to_string(p);
      if (applied[{ev.step, p}] != a->second)
        return where + "barrier " + std::to_string(ev.step) + " opened with " +
               std::to_string(applied[{ev.step, p}]) + " of " + std::to_string(a->second) + " frames from LP " +
               std::to_string(p);
    }
    opened = ev.step;
  }
  return std::nullopt;
}

LogicalProcess::LogicalProcess(EngineConfig cfg, Endpoint sima)
    : cfg_(std::move(cfg)), sima_(std::move(sima)), window_(cfg_.balancer.window) {
  cfg_.validate();
}

void LogicalProcess::on_start(NetContext& ctx) {
  started_at_ = ctx.now_ms();
  sima_conn_ = ctx.connect(sima_);
  ctx.set_timer(cfg_.bootstrap_timeout_ms, kWatchdog);
}

void LogicalProcess::on_connected(NetContext& ctx, ConnId conn) {
  if (done()) return;
  if (conn == sima_conn_) {
    ctx.send(conn, Register{ctx.listen_endpoint()});
    return;
  }
  auto it = connecting_.find(conn);
  if (it == connecting_.end()) return;
  const std::uint32_t peer = it->second;
  connecting_.erase(it);
  ctx.send(conn, Hello{me_});
  result_.initiated_to.push_back(peer);
  identify(ctx, conn, peer);
  maybe_start(ctx);
}

void LogicalProcess::on_connect_failed(NetContext& ctx, ConnId conn, const std::string& reason) {
  if (conn == sima_conn_) {
    fail(ctx, "SIMA unreachable: " + reason);
  } else if (auto it = connecting_.find(conn); it != connecting_.end()) {
    fail(ctx, "LP " + std::to_string(it->second) + " unreachable: " + reason);
  }
}

void LogicalProcess::on_accepted(NetContext&, ConnId conn) {
  if (!done()) unidentified_.insert(conn);
}

void LogicalProcess::on_message(NetContext& ctx, ConnId conn, Message msg) {
  if (done()) return;
  if (conn == sima_conn_) {
    handle_sima(ctx, msg);
    return;
  }
  if (unidentified_.count(conn) != 0) {
    auto* hello = std::get_if<Hello>(&msg);
    if (hello == nullptr) {
      fail(ctx, std::string("expected Hello on inbound channel, got ") + type_name(type_of(msg)));
      return;
    }
    unidentified_.erase(conn);
    if (have_roster_ && (hello->lp_id <= me_ || hello->lp_id >= n_lps())) {
      fail(ctx, "Hello with unexpected id " + std::to_string(hello->lp_id));
      return;
    }
    if (peer_conn_.count(hello->lp_id) != 0) {
      fail(ctx, "second channel from LP " + std::to_string(hello->lp_id));
      return;
    }
    result_.accepted_from.push_back(hello->lp_id);
    identify(ctx, conn, hello->lp_id);
    maybe_start(ctx);
    return;
  }
  auto it = conn_peer_.find(conn);
  if (it == conn_peer_.end()) return;
  if (!step_of(msg)) {
    fail(ctx, std::string("unexpected ") + type_name(type_of(msg)) + " from LP " + std::to_string(it->second));
    return;
  }
  route(ctx, it->second, std::move(msg));
}

void LogicalProcess::on_closed(NetContext& ctx, ConnId conn, const std::string& reason) {
  if (done()) return;
  if (conn == sima_conn_) {
    sima_conn_ = 0;
    if (!have_roster_) fail(ctx, "SIMA closed the connection before the roster: " + reason);
    return;
  }
  if (unidentified_.erase(conn) != 0) return;
  if (auto it = connecting_.find(conn); it != connecting_.end()) {
    fail(ctx, "channel to LP " + std::to_string(it->second) + " lost while connecting: " + reason);
    return;
  }
  auto it = conn_peer_.find(conn);
  if (it == conn_peer_.end()) return;
  if (cfg_.n_steps == 0 || peer_finished_.count(it->second) != 0) return;
  fail(ctx, "channel to LP " + std::to_string(it->second) + " failed: " + reason);
}

void LogicalProcess::on_timer(NetContext& ctx, std::uint64_t token) {
  if (token != kWatchdog || done()) return;
  const bool running = phase_ == Phase::running;
  const double deadline = running ? last_progress_ + cfg_.step_timeout_ms : started_at_ + cfg_.bootstrap_timeout_ms;
  if (ctx.now_ms() + 1e-9 < deadline) {
    ctx.set_timer(deadline - ctx.now_ms(), kWatchdog);
    return;
  }
  if (!running) {
    fail(ctx, have_roster_ ? "timeout building the mesh" : "roster timeout");
  } else {
    std::string missing;
    for (std::uint32_t p = 0; p < n_lps(); ++p) {
      if (p == me_) continue;
      if (st_.digests.count(p) == 0 || st_.announced.count(p) == 0) missing += " " + std::to_string(p);
    }
    fail(ctx, (st_.computed ? "barrier timeout" : "digest timeout") + std::string(", waiting on LPs") + missing);
  }
}

void LogicalProcess::handle_sima(NetContext& ctx, Message& msg) {
  if (auto* ack = std::get_if<RegisterAck>(&msg)) {
    if (have_ack_) return fail(ctx, "duplicate RegisterAck");
    have_ack_ = true;
    me_ = ack->lp_id;
    result_.lp_id = me_;
  } else if (auto* roster = std::get_if<Roster>(&msg)) {
    if (!have_ack_) return fail(ctx, "roster before RegisterAck");
    on_roster(ctx, std::move(*roster));
  } else {
    fail(ctx, std::string("unexpected ") + type_name(type_of(msg)) + " from SIMA");
  }
}

void LogicalProcess::on_roster(NetContext& ctx, Roster roster) {
  if (have_roster_) return fail(ctx, "duplicate roster");
  const auto n = roster.entries.size();
  for (std::size_t i = 0; i < n; ++i)
    if (roster.entries[i].lp_id != i) return fail(ctx, "roster ids are not dense");
  if (me_ >= n) return fail(ctx, "own id " + std::to_string(me_) + " missing from roster");
  if (roster.entries[me_].endpoint != ctx.listen_endpoint())
    return fail(ctx, "roster lists " + roster.entries[me_].endpoint.to_string() + " for this LP");
  result_.roster = std::move(roster);
  have_roster_ = true;
  phase_ = Phase::meshing;
  ctx.close(sima_conn_);
  sima_conn_ = 0;

  for (const auto& [peer, conn] : peer_conn_)
    if (peer <= me_ || peer >= n) return fail(ctx, "Hello with unexpected id " + std::to_string(peer));
  // Lower-identifier rule: open channels only toward lower ids.
  for (std::uint32_t j = 0; j < me_; ++j) connecting_[ctx.connect(result_.roster.entries[j].endpoint)] = j;
  maybe_start(ctx);
}

void LogicalProcess::identify(NetContext&, ConnId conn, std::uint32_t peer) {
  conn_peer_[conn] = peer;
  peer_conn_[peer] = conn;
}

void LogicalProcess::maybe_start(NetContext& ctx) {
  if (phase_ != Phase::meshing || peer_conn_.size() + 1 != n_lps()) return;
  phase_ = Phase::running;
  run_started_at_ = ctx.now_ms();
  last_progress_ = run_started_at_;
  result_.metrics.init_s = (run_started_at_ - started_at_) / 1000.0;
  directory_.resize(cfg_.model.n_entities);
  for (std::uint32_t id = 0; id < cfg_.model.n_entities; ++id) {
    directory_[id] = initial_lp(id, n_lps(), cfg_.seed, cfg_.placement);
    if (directory_[id] == me_) local_.emplace(id, make_entity(id, cfg_.seed, cfg_.model));
  }
  if (cfg_.n_steps == 0) return complete(ctx);
  begin_step(ctx);
  advance(ctx);
}

void LogicalProcess::send_peer(NetContext& ctx, std::uint32_t peer, const Message& msg) {
  ctx.send(peer_conn_.at(peer), msg);
  if (std::holds_alternative<StepEnd>(msg)) return;
  ++st_.sent[peer];
  auto& r = st_.record;
  switch (type_of(msg)) {
    case MsgType::position_digest: ++r.digest_frames; break;
    case MsgType::ping_batch: ++r.ping_frames; break;
    case MsgType::migrate: ++r.migrate_frames; break;
    default: break;
  }
}

void LogicalProcess::begin_step(NetContext& ctx) {
  st_ = StepState{};
  st_.record.step = step_;
  PositionDigest digest{step_, {}};
  digest.entries.reserve(local_.size());
  for (const auto& [id, e] : local_) digest.entries.push_back({id, e.x, e.y});
  for (const auto& [peer, conn] : peer_conn_) send_peer(ctx, peer, digest);

  auto pending = inbox_.extract(step_);
  if (pending.empty()) return;
  for (auto& [peer, msg] : pending.mapped()) {
    apply(peer, msg);
    if (done()) return;
  }
}

void LogicalProcess::route(NetContext& ctx, std::uint32_t peer, Message msg) {
  const std::uint64_t s = *step_of(msg);
  if (auto* end = std::get_if<StepEnd>(&msg); end && cfg_.n_steps > 0 && end->step == cfg_.n_steps - 1)
    peer_finished_.insert(peer);
  if (phase_ != Phase::running || s > step_) {
    inbox_[s].emplace_back(peer, std::move(msg));
    return;
  }
  if (s < step_) return fail(ctx, std::string("stale ") + type_name(type_of(msg)) + " for step " + std::to_string(s) +
                                  " from LP " + std::to_string(peer));
  apply(peer, msg);
  if (!result_.error.empty()) return fail(ctx, result_.error);
  advance(ctx);
}

// Records an inbound frame of the current step. Errors are left in
// result_.error for the caller to act on.
void LogicalProcess::apply(std::uint32_t peer, Message& msg) {
  if (cfg_.record_trace) {
    TraceEvent ev{TraceEvent::Kind::applied, step_, peer, type_of(msg), 0};
    if (auto* end = std::get_if<StepEnd>(&msg)) ev.value = end->sent_count;
    result_.trace.push_back(ev);
  }
  auto bad = [&](std::string why) {
    if (result_.error.empty()) result_.error = std::move(why);
  };
  if (auto* end = std::get_if<StepEnd>(&msg)) {
    if (end->lp_id != peer) return bad("StepEnd from LP " + std::to_string(peer) + " claims id " + std::to_string(end->lp_id));
    if (!st_.announced.emplace(peer, end->sent_count).second) bad("duplicate StepEnd from LP " + std::to_string(peer));
    return;
  }
  ++st_.received[peer];
  if (auto* d = std::get_if<PositionDigest>(&msg)) {
    if (!st_.digests.emplace(peer, std::move(d->entries)).second)
      bad("duplicate digest from LP " + std::to_string(peer));
  } else if (auto* m = std::get_if<Migrate>(&msg)) {
    try {
      SmhEntity e = deserialize_entity(m->entity_blob);
      if (e.entity_id >= directory_.size() || directory_[e.entity_id] != peer)
        return bad("LP " + std::to_string(peer) + " migrated entity " + std::to_string(e.entity_id) + " it does not own");
      st_.arrivals.push_back(e);
    } catch (const ModelError& err) {
      bad(std::string("bad Migrate blob: ") + err.what());
    }
  } else if (auto* n = std::get_if<MigrateNotice>(&msg)) {
    if (n->entity_id >= directory_.size() || n->new_lp >= n_lps())
      return bad("MigrateNotice out of range from LP " + std::to_string(peer));
    st_.notices.push_back(*n);
  }
  // PingBatch only needs counting: the pings' targets are already known here.
}

void LogicalProcess::advance(NetContext& ctx) {
  while (phase_ == Phase::running) {
    if (!result_.error.empty()) return fail(ctx, result_.error);
    if (!st_.computed && st_.digests.size() + 1 == n_lps()) compute_step(ctx);
    if (done() || !st_.computed || !barrier_open()) return;
    commit_step(ctx);
  }
}

void LogicalProcess::compute_step(NetContext& ctx) {
  std::vector<PositionEntry> positions;
  positions.reserve(cfg_.model.n_entities);
  for (const auto& [id, e] : local_) positions.push_back({id, e.x, e.y});
  for (const auto& [peer, entries] : st_.digests) positions.insert(positions.end(), entries.begin(), entries.end());
  if (positions.size() != cfg_.model.n_entities)
    return fail(ctx, "digests cover " + std::to_string(positions.size()) + " of " +
                         std::to_string(cfg_.model.n_entities) + " entities");

  std::vector<PingPair> pings;
  try {
    pings = compute_pings(positions, cfg_.model);
  } catch (const ModelError& e) {
    return fail(ctx, e.what());
  }
  std::map<std::uint32_t, PingBatch> batches;
  for (const auto& p : pings) {
    if (local_.count(p.src) == 0) continue;
    ++st_.record.pings_total;
    const std::uint32_t host = directory_[p.dst];
    if (host != me_) {
      ++st_.record.pings_remote;
      auto& b = batches[host];
      b.step = step_;
      b.pairs.push_back(p);
    }
    if (cfg_.balancer.enabled) window_.record_interaction(p.src, p.dst, 1, step_);
  }
  for (const auto& [host, batch] : batches) send_peer(ctx, host, batch);

  for (auto& [id, e] : local_) {
    Rng rng = entity_rng(cfg_.seed, id, step_, RngPurpose::mobility);
    e = rwp_step(e, rng, cfg_.model);
  }

  plan_and_migrate(ctx);
  for (const auto& [peer, conn] : peer_conn_) send_peer(ctx, peer, StepEnd{step_, me_, st_.sent[peer]});
  st_.computed = true;
}

void LogicalProcess::plan_and_migrate(NetContext& ctx) {
  if (!evaluation_due(cfg_.balancer, step_, me_, n_lps())) return;
  std::vector<EntityLocality> localities;
  localities.reserve(local_.size());
  for (const auto& [id, e] : local_) {
    EntityLocality loc;
    loc.entity_id = id;
    for (const auto& [partner, count] : window_.totals(id, step_)) loc.per_lp[directory_[partner]] += count;
    if (auto it = arrived_at_.find(id); it != arrived_at_.end()) loc.arrived_at = it->second;
    localities.push_back(std::move(loc));
  }
  for (const auto& order : plan_migrations(localities, cfg_.balancer, me_, step_)) {
    send_peer(ctx, order.dest_lp, Migrate{step_, serialize_entity(local_.at(order.entity_id))});
    const MigrateNotice notice{step_, order.entity_id, order.dest_lp};
    for (const auto& [peer, conn] : peer_conn_) send_peer(ctx, peer, notice);
    st_.notices.push_back(notice);
    local_.erase(order.entity_id);
    window_.forget(order.entity_id);
    arrived_at_.erase(order.entity_id);
    ++st_.record.migrations;
  }
}

bool LogicalProcess::barrier_open() const {
  if (st_.announced.size() + 1 != n_lps()) return false;
  for (const auto& [peer, count] : st_.announced) {
    auto it = st_.received.find(peer);
    if ((it == st_.received.end() ? 0u : it->second) < count) return false;
  }
  return true;
}

void LogicalProcess::commit_step(NetContext& ctx) {
  for (const auto& e : st_.arrivals) {
    if (!local_.emplace(e.entity_id, e).second)
      return fail(ctx, "inbound duplicate entity " + std::to_string(e.entity_id));
    arrived_at_[e.entity_id] = step_;
  }
  for (const auto& n : st_.notices) directory_[n.entity_id] = n.new_lp;
  for (const auto& [id, e] : local_)
    if (directory_[id] != me_) return fail(ctx, "directory places local entity " + std::to_string(id) + " elsewhere");

  auto& r = st_.record;
  r.local_entities = local_.size();
  r.directory_hash = directory_hash(directory_);
  auto& m = result_.metrics;
  m.pings_total += r.pings_total;
  m.pings_remote += r.pings_remote;
  m.digest_frames += r.digest_frames;
  m.ping_frames += r.ping_frames;
  m.migrate_frames += r.migrate_frames;
  m.migrations += r.migrations;
  m.per_step.push_back(r);
  if (cfg_.record_trace) result_.trace.push_back({TraceEvent::Kind::barrier_open, step_, me_, MsgType::step_end, 0});

  ++step_;
  last_progress_ = ctx.now_ms();
  if (step_ == cfg_.n_steps) return complete(ctx);
  begin_step(ctx);
}

void LogicalProcess::complete(NetContext& ctx) {
  result_.metrics.wct_s = (ctx.now_ms() - run_started_at_) / 1000.0;
  result_.final_entities.clear();
  for (const auto& [id, e] : local_) result_.final_entities.push_back(e);
  result_.ok = true;
  phase_ = Phase::done;
  for (const auto& [peer, conn] : peer_conn_) ctx.close(conn);
  ctx.finish();
}

void LogicalProcess::fail(NetContext& ctx, const std::string& why) {
  if (done()) return;
  const bool running = phase_ == Phase::running;
  phase_ = Phase::failed;
  result_.ok = false;
  result_.error = "LP " + std::to_string(me_) + (running ? " step " + std::to_string(step_) : std::string()) + ": " + why;
  if (sima_conn_ != 0) ctx.close(sima_conn_);
  for (const auto& [conn, peer] : conn_peer_) ctx.close(conn);
  for (const auto& [conn, peer] : connecting_) ctx.close(conn);
  for (auto conn : unidentified_) ctx.close(conn);
  ctx.finish();
}

SequentialResult run_sequential(const EngineConfig& cfg) {
  cfg.validate();
  SequentialResult out;
  std::vector<SmhEntity> entities;
  entities.reserve(cfg.model.n_entities);
  for (std::uint32_t id = 0; id < cfg.model.n_entities; ++id) entities.push_back(make_entity(id, cfg.seed, cfg.model));
  std::vector<PositionEntry> positions(entities.size());
  for (std::uint64_t step = 0; step < cfg.n_steps; ++step) {
    for (std::size_t i = 0; i < entities.size(); ++i) positions[i] = {entities[i].entity_id, entities[i].x, entities[i].y};
    out.pings_per_step.push_back(compute_pings(positions, cfg.model).size());
    for (auto& e : entities) {
      Rng rng = entity_rng(cfg.seed, e.entity_id, step, RngPurpose::mobility);
      e = rwp_step(e, rng, cfg.model);
    }
  }
  out.final_entities = std::move(entities);
  return out;
}

}  // namespace anonpads
