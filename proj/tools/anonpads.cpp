// anonpads: coordinator, logical process, benchmark driver and RTT probe.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>

#include "anonpads/config.hpp"
#include "anonpads/coordinator.hpp"
#include "anonpads/engine.hpp"
#include "anonpads/harness.hpp"
#include "anonpads/probe.hpp"
#include "anonpads/socket_runtime.hpp"

namespace {

using namespace anonpads;

const std::map<std::string, Scheme> kTransports{{"direct", Scheme::direct}, {"socks", Scheme::socks}};
const std::map<std::string, Scheme> kProbeTransports{
    {"direct", Scheme::direct}, {"socks", Scheme::socks}, {"emu", Scheme::emu}};

// The emulated overlay lives inside one process, so the multi-process roles
// only accept real transports. "emu" gets a pointed message instead of
// CLI11's generic one.
void reject_emu(const std::string& transport) {
  if (transport == "emu")
    throw CLI::ValidationError("--transport",
                               "emu runs in-process only; use 'anonpads bench' with transport=emu instead");
}

// Direct endpoints bind where they point. Onion endpoints are advertised as
// given and bound on loopback at the same port, which is where the hidden
// service forwards.
SocketRuntimeConfig net_config(Scheme transport, const Endpoint& listen) {
  SocketRuntimeConfig cfg;
  cfg.transport = transport;
  cfg.socks = cfg.socks.with_env_override();
  cfg.bind_port = listen.port;
  if (transport == Scheme::socks) {
    cfg.bind_host = "127.0.0.1";
    cfg.advertise = Endpoint{Scheme::socks, listen.host, listen.port};
  } else {
    cfg.bind_host = listen.host;
  }
  return cfg;
}

int cmd_sima(const std::string& listen, std::uint32_t expected, const std::string& transport, double timeout_s) {
  reject_emu(transport);
  const Scheme t = kTransports.at(transport);
  const auto report = run_sima(net_config(t, parse_endpoint(listen, t)), SimaOptions{expected, timeout_s * 1000.0});
  for (const auto& line : report.log) std::cout << line << '\n';
  for (const auto& id : report.assigned) std::cout << "lp " << id.lp_id << " at " << id.endpoint.to_string() << '\n';
  if (!report.ok) {
    std::cerr << "sima: " << report.error << '\n';
    return 1;
  }
  std::printf("bootstrap complete: %zu LPs in %.3f s\n", report.assigned.size(), report.elapsed_ms / 1000.0);
  return 0;
}

int cmd_lp(const std::string& sima, const std::string& listen, const std::string& transport,
           const std::string& config) {
  reject_emu(transport);
  const Scheme t = kTransports.at(transport);
  const RunConfig run = config.empty() ? RunConfig{} : load_run_config(config);
  LogicalProcess lp(run.engine, parse_endpoint(sima, t));
  SocketRuntime rt(lp, net_config(t, parse_endpoint(listen, t)));
  rt.run();
  const auto& r = lp.result();
  if (!r.ok) {
    std::cerr << "lp: " << r.error << '\n';
    return 1;
  }
  const auto& m = r.metrics;
  std::printf("lp %u: init %.3f s, wct %.3f s, pings %llu (%llu remote), %llu migrations\n", r.lp_id, m.init_s,
              m.wct_s, static_cast<unsigned long long>(m.pings_total),
              static_cast<unsigned long long>(m.pings_remote), static_cast<unsigned long long>(m.migrations));
  return 0;
}

int cmd_bench(const std::string& scenario, const std::string& out) {
  const auto scenarios = load_scenarios(scenario);
  std::vector<std::vector<RunRecord>> per;
  std::vector<RunRecord> all;
  for (const auto& s : scenarios) {
    per.push_back(run_scenario(s, [](const std::string& line) { std::cerr << line << '\n'; }));
    all.insert(all.end(), per.back().begin(), per.back().end());
  }
  const auto rows = summarize(scenarios, per);
  emit_report(out, rows, all);
  std::cout << format_summary_csv(rows);
  bool any_failed = false;
  for (const auto& r : rows) any_failed |= !r.wct.has_value();
  return any_failed ? 1 : 0;
}

int cmd_tcpping(TcpPingConfig cfg, const std::string& target, const std::string& via, const std::string& preset,
                const std::string& out) {
  cfg.via = kProbeTransports.at(via);
  cfg.target = parse_endpoint(target, cfg.via);
  cfg.socks = cfg.socks.with_env_override();
  if (cfg.via == Scheme::emu) {
    using namespace tor_presets;
    const std::map<std::string, std::pair<double, double>> presets{
        {"dublin-okeanos", {kDublinOkeanosMean, kDublinOkeanosStd}},
        {"okeanos-frankfurt", {kOkeanosFrankfurtMean, kOkeanosFrankfurtStd}},
        {"frankfurt-dublin", {kFrankfurtDublinMean, kFrankfurtDublinStd}}};
    const auto [mean, sd] = presets.at(preset);
    cfg.emu.circuit.params = LatencyParams::from_moments(mean, sd);
  }
  const auto r = tcpping(cfg);
  if (!out.empty()) write_tcpping_csv(out, r);
  std::printf("%zu answered, %llu missed\n", r.rtt_ms.size(), static_cast<unsigned long long>(r.misses));
  if (!r.stats) {
    std::cerr << "tcpping: fewer than two answered probes\n";
    return 1;
  }
  std::printf("rtt mean %.2f ms, sd %.2f ms, min %.2f, max %.2f, ci90 %.2f\n", r.stats->mean, r.stats->sd,
              r.stats->min, r.stats->max, r.stats->ci90);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed simulation over anonymity overlays"};
  app.require_subcommand(1);

  std::string listen, transport = "direct", sima_ep, config, scenario, out, target, via = "direct";
  std::string preset = "dublin-okeanos";
  std::uint32_t expected = 1;
  double timeout_s = 300;
  TcpPingConfig probe;

  auto* sima = app.add_subcommand("sima", "Run the bootstrap coordinator");
  sima->add_option("--listen", listen, "Endpoint to listen on, e.g. direct://0.0.0.0:7000")->required();
  sima->add_option("--expected", expected, "Number of LPs to wait for")->required()->check(CLI::Range(1u, 65535u));
  sima->add_option("--transport", transport, "direct or socks")->check(CLI::IsMember({"direct", "socks", "emu"}));
  sima->add_option("--timeout-s", timeout_s, "Give up if the LPs have not all registered by then")
      ->check(CLI::PositiveNumber);

  auto* lp = app.add_subcommand("lp", "Run one logical process");
  lp->add_option("--sima", sima_ep, "Coordinator endpoint")->required();
  lp->add_option("--listen", listen, "Endpoint to listen on and advertise")->required();
  lp->add_option("--transport", transport, "direct or socks")->check(CLI::IsMember({"direct", "socks", "emu"}));
  lp->add_option("--config", config, "key=value run configuration")->check(CLI::ExistingFile);

  auto* bench = app.add_subcommand("bench", "Run a scenario matrix and write CSV reports");
  bench->add_option("--scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  bench->add_option("--out", out, "Output directory")->required();

  auto* ping = app.add_subcommand("tcpping", "Measure connection-establishment RTT");
  ping->add_option("--target", target, "Endpoint to probe")->required();
  ping->add_option("--via", via, "direct, socks or emu")->check(CLI::IsMember({"direct", "socks", "emu"}));
  ping->add_option("-n", probe.n, "Number of probes")->check(CLI::Range(1u, 1'000'000u));
  ping->add_option("--interval", probe.interval_s, "Seconds between probes")->check(CLI::NonNegativeNumber);
  ping->add_option("--preset", preset, "Latency row for --via emu")
      ->check(CLI::IsMember({"dublin-okeanos", "okeanos-frankfurt", "frankfurt-dublin"}));
  ping->add_option("--seed", probe.emu.seed, "Seed for --via emu");
  ping->add_option("--out", out, "Write rtt.csv and histogram.csv here");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sima) return cmd_sima(listen, expected, transport, timeout_s);
    if (*lp) return cmd_lp(sima_ep, listen, transport, config);
    if (*bench) return cmd_bench(scenario, out);
    return cmd_tcpping(probe, target, via, preset, out);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "anonpads: " << e.what() << '\n';
    return 2;
  }
}
