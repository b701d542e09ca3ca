#include "anonpads/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "anonpads/rng.hpp"
#include "anonpads/socket_runtime.hpp"

namespace anonpads {

namespace {

constexpr std::uint64_t kStartToken = ~std::uint64_t{0};

/// Holds back an actor's start so registrations reach the SIMA in a chosen order.
class DelayedStart final : public Actor {
 public:
  DelayedStart(Actor& inner, double delay_ms) : inner_(inner), delay_ms_(delay_ms) {}

  void on_start(NetContext& ctx) override {
    if (delay_ms_ <= 0.0) return inner_.on_start(ctx);
    ctx.set_timer(delay_ms_, kStartToken);
  }
  void on_timer(NetContext& ctx, std::uint64_t token) override {
    if (token == kStartToken) return inner_.on_start(ctx);
    inner_.on_timer(ctx, token);
  }
  void on_connected(NetContext& ctx, ConnId c) override { inner_.on_connected(ctx, c); }
  void on_connect_failed(NetContext& ctx, ConnId c, const std::string& r) override {
    inner_.on_connect_failed(ctx, c, r);
  }
  void on_accepted(NetContext& ctx, ConnId c) override { inner_.on_accepted(ctx, c); }
  void on_message(NetContext& ctx, ConnId c, Message m) override { inner_.on_message(ctx, c, std::move(m)); }
  void on_closed(NetContext& ctx, ConnId c, const std::string& r) override { inner_.on_closed(ctx, c, r); }

 private:
  Actor& inner_;
  double delay_ms_;
};

std::string opaque_token(std::uint64_t seed, std::uint64_t k) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(mix64(hash_combine(seed, k))));
  return buf;
}

double delay_of(const ClusterOptions& o, std::size_t k) {
  return k < o.start_delays_ms.size() ? o.start_delays_ms[k] : 0.0;
}

void finalize(ClusterResult& r, const std::vector<std::unique_ptr<LogicalProcess>>& lps, const SimaActor& sima,
              const std::string& runtime_error) {
  r.sima = sima.report();
  for (const auto& lp : lps) r.lps.push_back(lp->result());
  r.ok = r.sima.ok && std::all_of(r.lps.begin(), r.lps.end(), [](const LpResult& l) { return l.ok; });
  if (!r.ok) {
    for (const auto& l : r.lps)
      if (!l.ok && !l.error.empty()) {
        r.error = l.error;
        break;
      }
    if (r.error.empty() && !r.sima.error.empty()) r.error = "SIMA: " + r.sima.error;
    if (r.error.empty() && !runtime_error.empty()) r.error = runtime_error;
    if (r.error.empty()) r.error = r.sima.ok ? "run stopped before completion" : "SIMA did not complete";
    return;
  }
  std::sort(r.lps.begin(), r.lps.end(), [](const LpResult& a, const LpResult& b) { return a.lp_id < b.lp_id; });
  r.metrics = aggregate_metrics(r.lps);
}

ClusterResult run_emu_cluster(const ClusterOptions& o) {
  ClusterResult r;
  EmuRuntime rt(o.run.emu);
  SimaActor sima(SimaOptions{o.n_lps, o.sima_timeout_ms});
  const Endpoint sima_ep = rt.add_actor(sima, opaque_token(o.run.emu.seed, ~std::uint64_t{0}));
  std::vector<std::unique_ptr<LogicalProcess>> lps;
  std::vector<std::unique_ptr<DelayedStart>> wrappers;
  for (std::uint32_t k = 0; k < o.n_lps; ++k) {
    lps.push_back(std::make_unique<LogicalProcess>(o.run.engine, sima_ep));
    wrappers.push_back(std::make_unique<DelayedStart>(*lps.back(), delay_of(o, k)));
    rt.add_actor(*wrappers.back(), opaque_token(o.run.emu.seed, k));
  }
  const auto outcome = rt.run();
  r.emu = rt.stats();
  std::string why;
  if (outcome == EmuRuntime::Outcome::idle) why = "emulation went idle before every participant finished";
  if (outcome == EmuRuntime::Outcome::time_limit) why = "emulation hit its time limit";
  finalize(r, lps, sima, why);
  return r;
}

ClusterResult run_socket_cluster(const ClusterOptions& o) {
  ClusterResult r;
  SocketRuntimeConfig base;
  base.transport = o.transport;
  base.bind_host = o.bind_host;
  base.socks = o.socks;
  auto advertise = [&](const std::string& name) -> std::optional<Endpoint> {
    if (o.transport != Scheme::socks) return std::nullopt;
    return Endpoint{Scheme::socks, name.empty() ? o.bind_host : name, 0};
  };

  SimaActor sima(SimaOptions{o.n_lps, o.sima_timeout_ms});
  SocketRuntimeConfig sima_cfg = base;
  sima_cfg.advertise = advertise(o.sima_socks_name);
  std::vector<std::unique_ptr<SocketRuntime>> runtimes;
  runtimes.push_back(std::make_unique<SocketRuntime>(sima, sima_cfg));
  const Endpoint sima_ep = runtimes.front()->listen_endpoint();

  std::vector<std::unique_ptr<LogicalProcess>> lps;
  std::vector<std::unique_ptr<DelayedStart>> wrappers;
  for (std::uint32_t k = 0; k < o.n_lps; ++k) {
    lps.push_back(std::make_unique<LogicalProcess>(o.run.engine, sima_ep));
    wrappers.push_back(std::make_unique<DelayedStart>(*lps.back(), delay_of(o, k)));
    SocketRuntimeConfig cfg = base;
    cfg.advertise = advertise(k < o.socks_names.size() ? o.socks_names[k] : std::string());
    runtimes.push_back(std::make_unique<SocketRuntime>(*wrappers.back(), cfg));
  }

  // One participant failing must not leave the others waiting on timeouts.
  auto stop_all = [&] {
    for (auto& rt : runtimes) rt->stop();
  };
  std::mutex err_mu;
  std::string runtime_error;
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < runtimes.size(); ++i) {
    threads.emplace_back([&, i] {
      try {
        runtimes[i]->run();
      } catch (const std::exception& e) {
        std::lock_guard lock(err_mu);
        if (runtime_error.empty()) runtime_error = e.what();
      }
      const bool ok = i == 0 ? sima.report().ok : lps[i - 1]->result().ok;
      if (!ok) stop_all();
    });
  }
  for (auto& t : threads) t.join();
  runtimes.clear();
  finalize(r, lps, sima, runtime_error);
  return r;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string num(double v, int decimals) { return std::isfinite(v) ? format_fixed(v, decimals) : std::string(); }

}  // namespace

ClusterResult run_cluster(const ClusterOptions& opts) {
  if (opts.n_lps == 0) throw std::invalid_argument("n_lps must be >= 1");
  opts.run.engine.validate();
  const auto t0 = std::chrono::steady_clock::now();
  ClusterResult r = opts.transport == Scheme::emu ? run_emu_cluster(opts) : run_socket_cluster(opts);
  r.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

RunMetrics aggregate_metrics(const std::vector<LpResult>& lps) {
  RunMetrics m;
  for (const auto& lp : lps) {
    const auto& x = lp.metrics;
    m.wct_s = std::max(m.wct_s, x.wct_s);
    m.init_s = std::max(m.init_s, x.init_s);
    m.pings_total += x.pings_total;
    m.pings_remote += x.pings_remote;
    m.digest_frames += x.digest_frames;
    m.ping_frames += x.ping_frames;
    m.migrate_frames += x.migrate_frames;
    m.migrations += x.migrations;
    if (m.per_step.size() < x.per_step.size()) m.per_step.resize(x.per_step.size());
    for (std::size_t s = 0; s < x.per_step.size(); ++s) {
      auto& a = m.per_step[s];
      const auto& b = x.per_step[s];
      a.step = b.step;
      a.pings_total += b.pings_total;
      a.pings_remote += b.pings_remote;
      a.digest_frames += b.digest_frames;
      a.ping_frames += b.ping_frames;
      a.migrate_frames += b.migrate_frames;
      a.migrations += b.migrations;
      a.local_entities += b.local_entities;
      if (a.directory_hash == 0) a.directory_hash = b.directory_hash;
    }
  }
  return m;
}

std::optional<std::string> check_cluster_invariants(const ClusterResult& r, std::uint32_t n_entities) {
  if (!r.ok) return "run failed: " + r.error;
  if (r.lps.empty()) return std::string("no LPs");
  const auto n_lps = static_cast<std::uint32_t>(r.lps.size());
  const auto& first = r.lps.front();
  for (const auto& lp : r.lps) {
    if (lp.roster != first.roster) return "LP " + std::to_string(lp.lp_id) + " holds a different roster";
    if (lp.metrics.per_step.size() != first.metrics.per_step.size())
      return "LP " + std::to_string(lp.lp_id) + " ran a different number of steps";
    if (!lp.trace.empty())
      if (auto err = check_barrier_trace(lp.trace, lp.lp_id, n_lps)) return "LP " + std::to_string(lp.lp_id) + ": " + *err;
  }
  for (std::size_t s = 0; s < first.metrics.per_step.size(); ++s) {
    std::uint64_t hosted = 0;
    for (const auto& lp : r.lps) {
      const auto& rec = lp.metrics.per_step[s];
      hosted += rec.local_entities;
      if (rec.directory_hash != first.metrics.per_step[s].directory_hash)
        return "directories disagree after step " + std::to_string(s);
    }
    if (hosted != n_entities)
      return "step " + std::to_string(s) + " boundary hosts " + std::to_string(hosted) + " of " +
             std::to_string(n_entities) + " entities";
  }
  std::vector<std::uint32_t> ids;
  for (const auto& lp : r.lps)
    for (const auto& e : lp.final_entities) ids.push_back(e.entity_id);
  std::sort(ids.begin(), ids.end());
  if (ids.size() != n_entities) return "final state holds " + std::to_string(ids.size()) + " entities";
  for (std::uint32_t i = 0; i < n_entities; ++i)
    if (ids[i] != i) return "final state misses entity " + std::to_string(i);
  return std::nullopt;
}

std::string ScenarioConfig::label() const {
  if (!name.empty()) return name;
  return std::string(to_string(transport)) + (balancer_on() ? " ALL_ON" : " ALL_OFF");
}

void ScenarioConfig::validate() const {
  if (repetitions < 1) throw ConfigError(label() + ": repetitions must be >= 1");
  if (seeds.size() != repetitions)
    throw ConfigError(label() + ": " + std::to_string(seeds.size()) + " seeds for " + std::to_string(repetitions) +
                      " repetitions");
  if (n_lps < 1) throw ConfigError(label() + ": n_lps must be >= 1");
  run.engine.validate();
  run.emu.validate();
}

namespace {

void apply_scenario_setting(ScenarioConfig& sc, const std::string& key, const std::string& value) {
  if (key == "name") {
    sc.name = value;
  } else if (key == "transport") {
    auto s = parse_scheme(value);
    if (!s) throw ConfigError("transport: expected direct, socks or emu");
    sc.transport = *s;
  } else if (key == "balancer") {
    sc.run.engine.balancer.enabled = parse_bool(value);
  } else if (key == "n_lps") {
    sc.n_lps = static_cast<std::uint32_t>(parse_u64(value));
  } else if (key == "repetitions") {
    sc.repetitions = static_cast<std::uint32_t>(parse_u64(value));
  } else if (key == "seeds") {
    sc.seeds.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto b = item.find_first_not_of(' ');
      const auto e = item.find_last_not_of(' ');
      if (b == std::string::npos) throw ConfigError("seeds: empty entry");
      sc.seeds.push_back(parse_u64(item.substr(b, e - b + 1)));
    }
  } else if (key == "socks.proxy") {
    const Endpoint ep = parse_endpoint(value);
    sc.socks.proxy_host = ep.host;
    sc.socks.proxy_port = ep.port;
  } else {
    apply_setting(sc.run, key, value);
  }
}

}  // namespace

std::vector<ScenarioConfig> parse_scenarios(std::istream& in) {
  ScenarioConfig globals;
  globals.socks = SocksConfig{}.with_env_override();
  std::vector<ScenarioConfig> out;
  std::vector<char> explicit_seeds;
  bool global_seeds = false;
  for (const auto& kv : read_key_values(in)) {
    const std::string where = "line " + std::to_string(kv.line) + ": ";
    if (kv.section) {
      if (kv.key != "run") throw ConfigError(where + "unknown section [" + kv.key + "]");
      out.push_back(globals);
      explicit_seeds.push_back(global_seeds);
      continue;
    }
    ScenarioConfig& target = out.empty() ? globals : out.back();
    try {
      apply_scenario_setting(target, kv.key, kv.value);
    } catch (const std::exception& e) {
      throw ConfigError(where + e.what());
    }
    if (kv.key == "seeds") {
      if (out.empty())
        global_seeds = true;
      else
        explicit_seeds.back() = 1;
    }
  }
  if (out.empty()) {
    out.push_back(globals);
    explicit_seeds.push_back(global_seeds);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& sc = out[i];
    if (!explicit_seeds[i]) {
      sc.seeds.clear();
      for (std::uint32_t k = 0; k < sc.repetitions; ++k) sc.seeds.push_back(sc.run.engine.seed + k);
    }
    sc.validate();
  }
  return out;
}

std::vector<ScenarioConfig> load_scenarios(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file " + path.string());
  return parse_scenarios(in);
}

std::vector<RunRecord> run_scenario(const ScenarioConfig& cfg, const LogFn& log) {
  cfg.validate();
  std::vector<RunRecord> out;
  for (std::uint32_t rep = 0; rep < cfg.repetitions; ++rep) {
    ClusterOptions o;
    o.transport = cfg.transport;
    o.n_lps = cfg.n_lps;
    o.run = cfg.run;
    o.run.engine.seed = cfg.seeds[rep];
    o.run.emu.seed = hash_combine(cfg.run.emu.seed, cfg.seeds[rep]);
    o.socks = cfg.socks;
    RunRecord rec{cfg.label(), rep, cfg.seeds[rep], false, {}, {}};
    try {
      ClusterResult r = run_cluster(o);
      rec.ok = r.ok;
      rec.error = r.error;
      rec.metrics = r.metrics;
    } catch (const std::exception& e) {
      rec.error = e.what();
    }
    if (log) {
      if (rec.ok)
        log(rec.config + " rep " + std::to_string(rep) + ": wct " + format_fixed(rec.metrics.wct_s, 3) + " s, pings " +
            std::to_string(rec.metrics.pings_total) + " (" + std::to_string(rec.metrics.pings_remote) + " remote), " +
            std::to_string(rec.metrics.migrations) + " migrations");
      else
        log("warning: " + rec.config + " rep " + std::to_string(rep) + " failed and is excluded from stats: " +
            rec.error);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<ReportRow> summarize(const std::vector<ScenarioConfig>& scenarios,
                                 const std::vector<std::vector<RunRecord>>& records) {
  if (scenarios.size() != records.size()) throw std::invalid_argument("one record list per scenario expected");
  std::vector<ReportRow> rows;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    ReportRow row;
    row.config = scenarios[i].label();
    std::vector<double> wct;
    double pings_total = 0, pings_remote = 0, migrations = 0;
    for (const auto& rec : records[i]) {
      if (!rec.ok) {
        ++row.failed_runs;
        continue;
      }
      ++row.ok_runs;
      wct.push_back(rec.metrics.wct_s);
      pings_total += static_cast<double>(rec.metrics.pings_total);
      pings_remote += static_cast<double>(rec.metrics.pings_remote);
      migrations += static_cast<double>(rec.metrics.migrations);
    }
    if (row.ok_runs > 0) {
      const auto n = static_cast<double>(row.ok_runs);
      row.pings_total = pings_total / n;
      row.pings_remote = pings_remote / n;
      row.migrations = migrations / n;
    }
    if (wct.size() >= 2) {
      row.wct = stats(wct);
    } else if (wct.size() == 1) {
      const double nan = std::nan("");
      row.wct = StatsRow{1, wct[0], nan, wct[0], wct[0], nan};
    }
    rows.push_back(std::move(row));
  }
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    const auto& on = scenarios[i];
    if (!on.balancer_on() || !rows[i].wct) continue;
    for (std::size_t j = 0; j < scenarios.size(); ++j) {
      const auto& off = scenarios[j];
      if (off.balancer_on() || off.transport != on.transport || off.n_lps != on.n_lps ||
          off.run.engine.model.n_entities != on.run.engine.model.n_entities || !rows[j].wct)
        continue;
      rows[i].speedup_vs_all_off = speedup(rows[j].wct->mean, rows[i].wct->mean);
      break;
    }
  }
  return rows;
}

std::string format_summary_csv(const std::vector<ReportRow>& rows) {
  std::string out = "config,mean_wct_s,sd,min,max,ci90,pings_total,pings_remote,migrations,speedup_vs_all_off\n";
  for (const auto& r : rows) {
    const double nan = std::nan("");
    const StatsRow s = r.wct.value_or(StatsRow{0, nan, nan, nan, nan, nan});
    out += csv_field(r.config) + ',' + num(s.mean, 3) + ',' + num(s.sd, 3) + ',' + num(s.min, 3) + ',' +
           num(s.max, 3) + ',' + num(s.ci90, 3) + ',' + num(r.pings_total, 1) + ',' + num(r.pings_remote, 1) + ',' +
           num(r.migrations, 1) + ',' + (r.speedup_vs_all_off ? num(*r.speedup_vs_all_off, 2) : std::string()) + '\n';
  }
  if (!rows.empty())
    out += "# ci90 = 1.645*sd/sqrt(n) over successful runs (normal quantile); speedup = ALL_OFF mean / ALL_ON mean\n";
  return out;
}

std::string format_runs_csv(const std::vector<RunRecord>& runs) {
  std::string out =
      "config,rep,seed,ok,wct_s,init_s,pings_total,pings_remote,digest_frames,ping_frames,migrate_frames,migrations,"
      "error\n";
  for (const auto& r : runs) {
    const auto& m = r.metrics;
    out += csv_field(r.config) + ',' + std::to_string(r.rep) + ',' + std::to_string(r.seed) + ',' +
           (r.ok ? "1" : "0") + ',' + num(m.wct_s, 6) + ',' + num(m.init_s, 6) + ',' + std::to_string(m.pings_total) +
           ',' + std::to_string(m.pings_remote) + ',' + std::to_string(m.digest_frames) + ',' +
           std::to_string(m.ping_frames) + ',' + std::to_string(m.migrate_frames) + ',' + std::to_string(m.migrations) +
           ',' + csv_field(r.error) + '\n';
  }
  return out;
}

void emit_report(const std::filesystem::path& dir, const std::vector<ReportRow>& rows,
                 const std::vector<RunRecord>& runs) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  auto write = [&](const char* name, const std::string& body) {
    const auto path = dir / name;
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f || !(f << body) || !f.flush()) throw std::runtime_error("cannot write " + path.string());
  };
  write("summary.csv", format_summary_csv(rows));
  write("runs.csv", format_runs_csv(runs));
}

}  // namespace anonpads
