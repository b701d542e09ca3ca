#include "anonpads/probe.hpp"

#include <fstream>
#include <thread>

#include "anonpads/socket.hpp"

namespace anonpads {

namespace {

/// Accepts and ignores everything; the probe only times the handshake.
class Sink final : public Actor {
 public:
  void on_start(NetContext&) override {}
  void on_message(NetContext&, ConnId, Message) override {}
};

class EmuProber final : public Actor {
 public:
  EmuProber(Endpoint target, std::uint32_t n, double interval_ms, double timeout_ms)
      : target_(std::move(target)), n_(n), interval_ms_(interval_ms), timeout_ms_(timeout_ms) {}

  void on_start(NetContext& ctx) override { probe(ctx); }
  void on_connected(NetContext& ctx, ConnId conn) override {
    if (conn != current_) return;
    const double rtt = ctx.now_ms() - sent_at_;
    if (rtt <= timeout_ms_)
      result.rtt_ms.push_back(rtt);
    else
      ++result.misses;
    ctx.close(conn);
    next(ctx);
  }
  void on_connect_failed(NetContext& ctx, ConnId conn, const std::string&) override {
    if (conn != current_) return;
    ++result.misses;
    next(ctx);
  }
  void on_timer(NetContext& ctx, std::uint64_t) override { probe(ctx); }
  void on_message(NetContext&, ConnId, Message) override {}

  TcpPingResult result;

 private:
  void probe(NetContext& ctx) {
    sent_at_ = ctx.now_ms();
    current_ = ctx.connect(target_);
  }
  void next(NetContext& ctx) {
    if (++done_ >= n_) return ctx.finish();
    current_ = 0;
    ctx.set_timer(std::max(0.0, interval_ms_ - (ctx.now_ms() - sent_at_)), 0);
  }

  Endpoint target_;
  std::uint32_t n_;
  double interval_ms_;
  double timeout_ms_;
  std::uint32_t done_ = 0;
  ConnId current_ = 0;
  double sent_at_ = 0.0;
};

TcpPingResult emu_tcpping(const TcpPingConfig& cfg) {
  EmuRuntime rt(cfg.emu);
  Sink sink;
  const std::string token = cfg.target.host.rfind("anon:", 0) == 0 ? cfg.target.host.substr(5) : cfg.target.host;
  const Endpoint ep = rt.add_actor(sink, token.empty() ? "target" : token, cfg.target.port == 0 ? 9000 : cfg.target.port);
  EmuProber prober(ep, cfg.n, cfg.interval_s * 1000.0, static_cast<double>(cfg.timeout.count()));
  rt.add_actor(prober, "prober");
  rt.run();
  return prober.result;
}

TcpPingResult socket_tcpping(const TcpPingConfig& cfg) {
  TcpPingResult r;
  SocksConfig socks = cfg.socks;
  socks.connect_retries = 1;
  socks.io_timeout = cfg.timeout;
  for (std::uint32_t i = 0; i < cfg.n; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if (cfg.via == Scheme::socks) {
        auto c = socks_connect(socks, cfg.target);
        c.stream.close();
      } else {
        auto s = TcpStream::connect(cfg.target.host, cfg.target.port, cfg.timeout);
        s.close();
      }
      r.rtt_ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    } catch (const std::exception&) {
      ++r.misses;
    }
    if (i + 1 < cfg.n) {
      const auto next = t0 + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                 std::chrono::duration<double>(cfg.interval_s));
      std::this_thread::sleep_until(next);
    }
  }
  return r;
}

}  // namespace

TcpPingResult tcpping(const TcpPingConfig& cfg) {
  if (cfg.n == 0) throw std::invalid_argument("tcpping needs n >= 1");
  if (cfg.interval_s < 0.0) throw std::invalid_argument("tcpping interval must be >= 0");
  TcpPingResult r = cfg.via == Scheme::emu ? emu_tcpping(cfg) : socket_tcpping(cfg);
  if (r.rtt_ms.size() >= 2) r.stats = stats(r.rtt_ms);
  r.histogram = histogram(r.rtt_ms, 20);
  return r;
}

void write_tcpping_csv(const std::filesystem::path& dir, const TcpPingResult& r) {
  std::filesystem::create_directories(dir);
  std::ofstream raw(dir / "rtt.csv", std::ios::trunc);
  raw << "probe,rtt_ms\n";
  for (std::size_t i = 0; i < r.rtt_ms.size(); ++i) raw << i << ',' << format_fixed(r.rtt_ms[i], 3) << '\n';
  std::ofstream hist(dir / "histogram.csv", std::ios::trunc);
  hist << "bin_lo_ms,bin_hi_ms,count\n";
  for (const auto& b : r.histogram) hist << format_fixed(b.lo, 3) << ',' << format_fixed(b.hi, 3) << ',' << b.count << '\n';
  if (!raw || !hist) throw std::runtime_error("cannot write tcpping CSVs to " + dir.string());
}

}  // namespace anonpads
