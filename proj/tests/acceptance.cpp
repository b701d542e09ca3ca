// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "anonpads/harness.hpp"
#include "anonpads/model.hpp"
#include "anonpads/probe.hpp"
#include "anonpads/socks.hpp"
#include "support/bootstrap_check.hpp"
#include "support/churn.hpp"
#include "support/fake_socks_proxy.hpp"
#include "support/published_tables.hpp"

namespace anonpads {
namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back((ok ? "ok: " : "FAILED: ") + what);
  }
  void note(const std::string& what) { notes.push_back(what); }
};

std::string fmt(double v, int dec = 2) { return format_fixed(v, dec); }

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// 1. Oracle equivalence.
Verdict oracle_equivalence() {
  Verdict v;
  const auto t0 = Clock::now();
  EngineConfig eng;
  eng.model.n_entities = 300;
  eng.n_steps = 200;
  eng.seed = 2024;
  const auto oracle = run_sequential(eng);

  struct Variant {
    std::string name;
    Scheme transport;
    bool balancer;
  };
  for (const Variant& var : {Variant{"3-LP direct ALL_OFF", Scheme::direct, false},
                             Variant{"3-LP direct ALL_ON", Scheme::direct, true},
                             Variant{"3-LP emu ALL_ON", Scheme::emu, true}}) {
    ClusterOptions o;
    o.transport = var.transport;
    o.n_lps = 3;
    o.run.engine = eng;
    o.run.engine.balancer.enabled = var.balancer;
    o.run.engine.record_trace = true;
    const auto r = run_cluster(o);
    if (!r.ok) {
      v.check(false, var.name + " run: " + r.error);
      continue;
    }
    bool pings_equal = r.metrics.per_step.size() == oracle.pings_per_step.size();
    for (std::size_t s = 0; pings_equal && s < oracle.pings_per_step.size(); ++s)
      pings_equal = r.metrics.per_step[s].pings_total == oracle.pings_per_step[s];
    std::vector<SmhEntity> finals;
    for (const auto& lp : r.lps) finals.insert(finals.end(), lp.final_entities.begin(), lp.final_entities.end());
    std::sort(finals.begin(), finals.end(), [](const auto& a, const auto& b) { return a.entity_id < b.entity_id; });
    bool bits_equal = finals.size() == oracle.final_entities.size();
    for (std::size_t i = 0; bits_equal && i < finals.size(); ++i)
      bits_equal = serialize_entity(finals[i]) == serialize_entity(oracle.final_entities[i]);
    v.check(pings_equal, var.name + ": per-step ping totals equal the sequential run");
    v.check(bits_equal, var.name + ": final entity states bit-identical");
    const auto inv = check_cluster_invariants(r, eng.model.n_entities);
    v.check(!inv, var.name + ": conservation, directory and barrier invariants" + (inv ? " (" + *inv + ")" : ""));
    v.note(var.name + ": " + std::to_string(r.metrics.pings_remote) + " remote pings, " +
           std::to_string(r.metrics.migrations) + " migrations");
  }
  const double took = seconds_since(t0);
  v.check(took < 60.0, "runtime " + fmt(took) + " s < 60 s");
  return v;
}

// 2. Statistics regression against the published tables.
Verdict statistics_regression() {
  Verdict v;
  int exact = 0;
  bool within = true;
  for (const auto& row : testing::kPublishedRows) {
    const long long shown = std::llround(ci90_from_sd(row.sd, testing::kPublishedRuns));
    exact += shown == row.ci;
    if (std::llabs(shown - row.ci) > 1) {
      within = false;
      v.note("CI off by more than 1: " + std::string(row.table) + " " + std::string(row.config));
    }
  }
  v.check(within, "all 12 CIs within +-1");
  v.check(exact >= 10, std::to_string(exact) + " of 12 CIs exact");
  for (const auto& s : testing::kPublishedSpeedups) {
    const double got = speedup(s.off, s.on);
    const bool ok = s.tolerance == 0.0 ? format_fixed(got, 2) == format_fixed(s.printed, 2)
                                       : std::abs(got - s.printed) <= s.tolerance;
    v.check(ok, fmt(s.off, 0) + "/" + fmt(s.on, 0) + " = " + fmt(got, 3) + " vs printed " + fmt(s.printed));
  }
  return v;
}

// 3. Emulated Tor latency against the RTT table.
Verdict latency_emulation() {
  Verdict v;
  const auto t0 = Clock::now();
  struct Row {
    const char* name;
    double mean, sd;
  };
  using namespace tor_presets;
  for (const Row& row : {Row{"dublin-okeanos", kDublinOkeanosMean, kDublinOkeanosStd},
                         Row{"okeanos-frankfurt", kOkeanosFrankfurtMean, kOkeanosFrankfurtStd},
                         Row{"frankfurt-dublin", kFrankfurtDublinMean, kFrankfurtDublinStd}}) {
    TcpPingConfig c;
    c.via = Scheme::emu;
    c.target = Endpoint{Scheme::emu, "anon:probe", 9000};
    c.n = 200;
    c.interval_s = 3;
    c.emu.circuit.params = LatencyParams::from_moments(row.mean, row.sd);
    c.emu.seed = 7;
    const auto r = tcpping(c);
    if (!r.stats) {
      v.check(false, std::string(row.name) + ": no samples");
      continue;
    }
    const double dm = r.stats->mean / row.mean - 1.0;
    const double ds = r.stats->sd / row.sd - 1.0;
    v.check(std::abs(dm) <= 0.15, std::string(row.name) + " mean " + fmt(r.stats->mean) + " ms vs " +
                                      fmt(row.mean) + " (" + fmt(100 * dm, 1) + "%)");
    v.check(std::abs(ds) <= 0.40, std::string(row.name) + " sd " + fmt(r.stats->sd) + " ms vs " + fmt(row.sd) +
                                      " (" + fmt(100 * ds, 1) + "%)");
  }
  const double took = seconds_since(t0);
  v.check(took < 5.0, "runtime " + fmt(took) + " s < 5 s");
  return v;
}

// 4. Table shape at desk scale.
Verdict table_shape(double time_scale, std::uint32_t reps, const std::string& out_dir) {
  Verdict v;
  const auto t0 = Clock::now();
  std::vector<ScenarioConfig> scenarios;
  for (Scheme t : {Scheme::direct, Scheme::emu})
    for (bool on : {false, true}) {
      ScenarioConfig s;
      s.transport = t;
      s.n_lps = 3;
      s.repetitions = reps;
      for (std::uint32_t k = 0; k < reps; ++k) s.seeds.push_back(1 + k);
      s.run.engine.model.n_entities = 300;
      s.run.engine.n_steps = 200;
      s.run.engine.balancer.enabled = on;
      s.run.emu.sleep_mode = true;
      s.run.emu.time_scale = time_scale;
      scenarios.push_back(s);
    }
  std::vector<std::vector<RunRecord>> records;
  std::vector<RunRecord> all;
  for (const auto& s : scenarios) {
    records.push_back(run_scenario(s, [](const std::string& m) { std::cout << "    " << m << std::endl; }));
    all.insert(all.end(), records.back().begin(), records.back().end());
  }
  const auto rows = summarize(scenarios, records);
  if (!out_dir.empty()) emit_report(out_dir, rows, all);
  for (const auto& r : rows) {
    if (!r.wct) {
      v.check(false, r.config + ": no successful runs");
      return v;
    }
    v.note(r.config + ": mean WCT " + fmt(r.wct->mean, 3) + " s (sd " + fmt(r.wct->sd, 3) + "), remote pings " +
           fmt(r.pings_remote, 1) + ", migrations " + fmt(r.migrations, 1) + ", failed runs " +
           std::to_string(r.failed_runs));
  }
  const auto& d_off = rows[0];
  const auto& d_on = rows[1];
  const auto& e_off = rows[2];
  const auto& e_on = rows[3];
  v.check(e_off.wct->mean > 3 * d_off.wct->mean,
          "ALL_OFF: emu/direct WCT ratio " + fmt(e_off.wct->mean / d_off.wct->mean, 1) + " > 3");
  v.check(e_on.wct->mean > 3 * d_on.wct->mean,
          "ALL_ON: emu/direct WCT ratio " + fmt(e_on.wct->mean / d_on.wct->mean, 1) + " > 3");
  const double cut = 1.0 - e_on.pings_remote / e_off.pings_remote;
  v.check(cut >= 0.30, "emu ALL_ON cuts remote pings by " + fmt(100 * cut, 1) + "% (>= 30%)");
  const double factor = speedup(e_off.wct->mean, e_on.wct->mean);
  v.check(factor >= 1.2, "emu ALL_OFF/ALL_ON WCT factor " + fmt(factor, 3) + " (>= 1.2)");
  const double took = seconds_since(t0);
  v.check(took < 900.0, "runtime " + fmt(took, 1) + " s < 900 s");
  return v;
}

// 5. Bootstrap and mesh construction.
Verdict bootstrap_mesh() {
  Verdict v;
  Rng rng(55);
  for (std::uint32_t n : {1u, 2u, 3u, 5u, 8u}) {
    int good = 0;
    const int trials = 10;
    for (int t = 0; t < trials; ++t) {
      ClusterOptions o;
      o.transport = Scheme::emu;
      o.n_lps = n;
      o.run.engine.n_steps = 0;
      o.run.engine.model.n_entities = 16;
      o.run.emu.seed = rng();
      for (std::uint32_t k = 0; k < n; ++k) o.start_delays_ms.push_back(rng.uniform(0, 10'000));
      const auto err = testing::check_bootstrap(run_cluster(o), n);
      if (err) v.note("N=" + std::to_string(n) + " trial " + std::to_string(t) + ": " + *err);
      good += !err;
    }
    ClusterOptions d;
    d.transport = Scheme::direct;
    d.n_lps = n;
    d.run.engine.n_steps = 0;
    d.run.engine.model.n_entities = 16;
    for (std::uint32_t k = 0; k < n; ++k) d.start_delays_ms.push_back(rng.uniform(0, 50));
    const auto derr = testing::check_bootstrap(run_cluster(d), n);
    v.check(good == trials && !derr, "N=" + std::to_string(n) + ": " + std::to_string(good) + "/" +
                                         std::to_string(trials) + " emulated shuffles and a direct run give ids 0.." +
                                         std::to_string(n - 1) + ", equal rosters, " +
                                         std::to_string(n * (n - 1) / 2) + " channels opened by the higher id" +
                                         (derr ? " (direct: " + *derr + ")" : ""));
  }
  return v;
}

// 6. Reliability under churn.
Verdict churn() {
  Verdict v;
  const auto t0 = Clock::now();
  int ok = 0;
  std::uint64_t retx = 0, resets = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto r = testing::run_churn(testing::churn_config(seed), 10'000);
    if (r.ok)
      ++ok;
    else
      v.note("schedule " + std::to_string(seed) + ": " + r.error);
    retx += r.stats.retransmissions;
    resets += r.stats.link_failures;
  }
  v.check(ok == 100, std::to_string(ok) + "/100 schedules delivered 10000 frames exactly once, in order");
  v.note(std::to_string(retx) + " retransmissions, " + std::to_string(resets) + " link resets in total");
  const double took = seconds_since(t0);
  v.check(took < 30.0, "runtime " + fmt(took) + " s < 30 s");
  return v;
}

// 7. SOCKS5 transcripts.
Verdict socks_bytes() {
  Verdict v;
  const Endpoint onion{Scheme::socks, "abcdefghijklmnop.onion", 9001};
  auto sink = TcpListener::bind("127.0.0.1", 0);
  std::thread accept([&] { sink.accept(std::chrono::seconds(5)); });

  testing::FakeSocksProxy proxy;
  proxy.script = {0x05};
  proxy.names[onion.host] = {"127.0.0.1", sink.port()};
  proxy.start();
  SocksConfig cfg;
  cfg.proxy_port = proxy.port();
  try {
    auto c = socks_connect(cfg, onion, [](auto) {});
    v.check(c.attempts == 2, "connected on attempt " + std::to_string(c.attempts) + " after a TTL-expired reply");
    v.check(c.backoffs == std::vector<std::chrono::milliseconds>{std::chrono::milliseconds(2000)},
            "one 2000 ms backoff before the retry");
  } catch (const std::exception& e) {
    v.check(false, std::string("connect: ") + e.what());
  }
  proxy.stop();
  accept.join();
  std::ifstream in(std::string(ANONPADS_GOLDEN_DIR) + "/socks_retry_transcript.txt");
  std::stringstream golden;
  golden << in.rdbuf();
  const auto got = testing::FakeSocksProxy::render(proxy.transcripts());
  v.check(!golden.str().empty() && got == golden.str(), "transcript matches golden file byte for byte");
  if (got != golden.str()) v.note("transcript was:\n" + got);

  testing::FakeSocksProxy failing;
  failing.script = {0x05, 0x05, 0x05, 0x05};
  failing.start();
  cfg.proxy_port = failing.port();
  cfg.connect_retries = 4;
  std::vector<std::chrono::milliseconds> slept;
  try {
    socks_connect(cfg, onion, [&](auto d) { slept.push_back(d); });
    v.check(false, "all-failing proxy must raise");
  } catch (const SocksConnectFailed& e) {
    using std::chrono::milliseconds;
    v.check(e.attempts() == 4 && slept == std::vector<milliseconds>{milliseconds(2000), milliseconds(4000),
                                                                      milliseconds(8000)},
            "backoff doubles 2000, 4000, 8000 ms and gives up after 4 attempts");
  }
  failing.stop();
  return v;
}

// 8. Model-layer oracle.
Verdict model_oracle() {
  Verdict v;
  Rng rng(808);
  int matched = 0;
  for (int trial = 0; trial < 100; ++trial) {
    ModelConfig cfg;
    cfg.space_l = rng.uniform(300, 20000);
    cfg.radius = rng.uniform(1, cfg.space_l / 2 - 1);
    const auto n = rng.uniform_int(0, 200);
    std::vector<PositionEntry> ps;
    for (std::uint32_t i = 0; i < n; ++i)
      ps.push_back({i * 13 + 1, wrap_coord(rng.uniform(0, cfg.space_l), cfg.space_l),
                    wrap_coord(rng.uniform(0, cfg.space_l), cfg.space_l)});
    std::vector<PingPair> brute;
    for (const auto& a : ps)
      for (const auto& b : ps)
        if (a.entity_id != b.entity_id && toroidal_dist({a.x, a.y}, {b.x, b.y}, cfg.space_l) <= cfg.radius)
          brute.push_back({a.entity_id, b.entity_id});
    std::sort(brute.begin(), brute.end());
    matched += compute_pings(ps, cfg) == brute;
  }
  v.check(matched == 100, std::to_string(matched) + "/100 random configurations match brute force");

  ModelConfig cfg;
  cfg.pause_max = 5;
  cfg.v_max = 500;
  bool inside = true;
  SmhEntity e = make_entity(3, 99, cfg);
  for (std::uint64_t s = 0; s < 100'000 && inside; ++s) {
    Rng r = entity_rng(99, 3, s, RngPurpose::mobility);
    e = rwp_step(e, r, cfg);
    inside = e.x >= 0 && e.x < cfg.space_l && e.y >= 0 && e.y < cfg.space_l && e.waypoint_x >= 0 &&
             e.waypoint_x < cfg.space_l && e.waypoint_y >= 0 && e.waypoint_y < cfg.space_l;
  }
  v.check(inside, "RWP stays inside [0,L)^2 for 10^5 steps");

  int metric_ok = 0;
  const double l = 10000;
  for (int i = 0; i < 10000; ++i) {
    const Point a{rng.uniform(0, l), rng.uniform(0, l)}, b{rng.uniform(0, l), rng.uniform(0, l)},
        c{rng.uniform(0, l), rng.uniform(0, l)};
    const double ab = toroidal_dist(a, b, l);
    metric_ok += ab >= 0 && toroidal_dist(a, a, l) == 0 && ab == toroidal_dist(b, a, l) &&
                 ab <= toroidal_dist(a, c, l) + toroidal_dist(c, b, l) + 1e-9;
  }
  v.check(metric_ok == 10000, std::to_string(metric_ok) + "/10000 triples satisfy the metric axioms");
  return v;
}

}  // namespace
}  // namespace anonpads

int main(int argc, char** argv) {
  using namespace anonpads;
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  double time_scale = 0.25;
  std::uint32_t reps = 5;
  std::string out_dir;
  bool verbose = false;
  app.add_option("--only", only, "Criteria to run (default all)")->check(CLI::Range(1, 8));
  app.add_option("--time-scale", time_scale, "Real ms per emulated ms in criterion 4")->check(CLI::PositiveNumber);
  app.add_option("--reps", reps, "Repetitions per configuration in criterion 4")->check(CLI::Range(2, 100));
  app.add_option("--out", out_dir, "Write criterion 4 CSVs here");
  app.add_flag("-v,--verbose", verbose, "Print details of passing criteria too");
  CLI11_PARSE(app, argc, argv);

  struct Criterion {
    int id;
    const char* name;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> all{
      {1, "oracle equivalence", oracle_equivalence},
      {2, "statistics regression", statistics_regression},
      {3, "latency emulation", latency_emulation},
      {4, "table shape", [&] { return table_shape(time_scale, reps, out_dir); }},
      {5, "bootstrap and mesh", bootstrap_mesh},
      {6, "reliability under churn", churn},
      {7, "SOCKS5 byte-exactness", socks_bytes},
      {8, "model oracle", model_oracle},
  };
  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v.check(false, std::string("exception: ") + e.what());
    }
    const double took = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d %-24s %s (%.1f s)\n", c.id, c.name, v.pass ? "PASS" : "FAIL", took);
    if (!v.pass || verbose)
      for (const auto& n : v.notes) std::printf("    %s\n", n.c_str());
    std::fflush(stdout);
    failed += !v.pass;
  }
  return failed == 0 ? 0 : 1;
}
