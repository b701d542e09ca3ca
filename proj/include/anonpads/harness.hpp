#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "anonpads/config.hpp"
#include "anonpads/coordinator.hpp"
#include "anonpads/emu_runtime.hpp"
#include "anonpads/engine.hpp"
#include "anonpads/socks.hpp"
#include "anonpads/stats.hpp"

namespace anonpads {

using LogFn = std::function<void(const std::string&)>;

/// One SIMA plus n_lps LPs inside this process.
struct ClusterOptions {
  Scheme transport = Scheme::emu;
  std::uint32_t n_lps = 3;
  RunConfig run;
  std::string bind_host = "127.0.0.1";
  SocksConfig socks;
  /// Host advertised over socks by LP k (launch order); bind_host when absent.
  std::vector<std::string> socks_names;
  std::string sima_socks_name;
  /// Delay before LP k registers, to shuffle arrival order at the SIMA.
  std::vector<double> start_delays_ms;
  double sima_timeout_ms = 300'000.0;
};

struct ClusterResult {
  bool ok = false;
  std::string error;
  ExitReport sima;
  /// Sorted by lp_id when the run succeeded, launch order otherwise.
  std::vector<LpResult> lps;
  RunMetrics metrics;
  EmuStats emu;
  /// Real seconds spent on the whole cluster.
  double wall_s = 0.0;
};

ClusterResult run_cluster(const ClusterOptions& opts);

/// Whole-run view: WCT and init are the slowest LP's, counters are summed,
/// per-step series are summed element-wise.
RunMetrics aggregate_metrics(const std::vector<LpResult>& lps);

/// Entity conservation, directory agreement, full final coverage and, when
/// traces were kept, barrier safety. Returns the first violation.
std::optional<std::string> check_cluster_invariants(const ClusterResult& r, std::uint32_t n_entities);

struct ScenarioConfig {
  std::string name;
  Scheme transport = Scheme::emu;
  std::uint32_t n_lps = 3;
  std::uint32_t repetitions = 10;
  std::vector<std::uint64_t> seeds;
  RunConfig run;
  SocksConfig socks;

  bool balancer_on() const { return run.engine.balancer.enabled; }
  /// e.g. "emu ALL_ON"; the name when one was given.
  std::string label() const;
  void validate() const;
};

/// Global keys first, then one "[run]" section per scenario inheriting them.
/// Scenario keys on top of the run config: name, transport, balancer
/// (ALL_ON or ALL_OFF), n_lps, repetitions, seeds (comma list; default
/// seed, seed+1, ...), socks.proxy (host:port).
std::vector<ScenarioConfig> parse_scenarios(std::istream& in);
std::vector<ScenarioConfig> load_scenarios(const std::filesystem::path& path);

struct RunRecord {
  std::string config;
  std::uint32_t rep = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  RunMetrics metrics;
};

/// Runs every repetition. A failed run is recorded with its error, logged,
/// and later left out of the statistics.
std::vector<RunRecord> run_scenario(const ScenarioConfig& cfg, const LogFn& log = {});

struct ReportRow {
  std::string config;
  std::optional<StatsRow> wct;
  /// Means over successful runs; NaN (an empty CSV cell) when there are none.
  double pings_total = std::numeric_limits<double>::quiet_NaN();
  double pings_remote = std::numeric_limits<double>::quiet_NaN();
  double migrations = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> speedup_vs_all_off;
  std::size_t ok_runs = 0;
  std::size_t failed_runs = 0;
};

/// One row per scenario over its successful runs. ALL_ON rows get the
/// speedup against the ALL_OFF scenario with the same transport, LP count
/// and entity count.
std::vector<ReportRow> summarize(const std::vector<ScenarioConfig>& scenarios,
                                 const std::vector<std::vector<RunRecord>>& records);

std::string format_summary_csv(const std::vector<ReportRow>& rows);
std::string format_runs_csv(const std::vector<RunRecord>& runs);

/// Writes summary.csv and runs.csv into dir (created if missing).
void emit_report(const std::filesystem::path& dir, const std::vector<ReportRow>& rows,
                 const std::vector<RunRecord>& runs);

}  // namespace anonpads
