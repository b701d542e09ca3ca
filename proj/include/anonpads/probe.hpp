#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "anonpads/emu_runtime.hpp"
#include "anonpads/socks.hpp"
#include "anonpads/stats.hpp"
#include "anonpads/wire.hpp"

namespace anonpads {

/// Connection-establishment RTT probe, the TCP-level stand-in for ping.
struct TcpPingConfig {
  Endpoint target;
  /// direct: plain connect; socks: greeting plus CONNECT through the proxy;
  /// emu: a connect across a fresh emulated circuit.
  Scheme via = Scheme::direct;
  std::uint32_t n = 200;
  double interval_s = 3.0;
  std::chrono::milliseconds timeout{10000};
  SocksConfig socks;
  EmuConfig emu;
};

struct TcpPingResult {
  std::vector<double> rtt_ms;
  std::uint64_t misses = 0;
  /// Empty with fewer than two answered probes.
  std::optional<StatsRow> stats;
  std::vector<HistogramBin> histogram;
};

TcpPingResult tcpping(const TcpPingConfig& cfg);

/// rtt.csv (probe,rtt_ms) and histogram.csv (bin_lo_ms,bin_hi_ms,count).
void write_tcpping_csv(const std::filesystem::path& dir, const TcpPingResult& r);

}  // namespace anonpads
