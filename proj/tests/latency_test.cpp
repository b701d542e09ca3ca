#include <gtest/gtest.h>

#include <cmath>

#include "anonpads/latency.hpp"
#include "anonpads/stats.hpp"

namespace anonpads {
namespace {

TEST(Latency, MomentMatchDublinOkeanos) {
  const auto p = moment_match(326.42, 278.52);
  EXPECT_NEAR(p.sigma * p.sigma, 0.5470, 5e-4);
  EXPECT_NEAR(p.mu, 5.5148, 5e-4);
}

TEST(Latency, MomentMatchInvertsExactly) {
  for (const auto [m, s] : {std::pair{326.42, 278.52}, {282.74, 104.83}, {540.74, 54.5}, {1.0, 10.0}, {100.0, 0.0}}) {
    const auto p = moment_match(m, s);
    const double mean = std::exp(p.mu + p.sigma * p.sigma / 2);
    const double sd = mean * std::sqrt(std::expm1(p.sigma * p.sigma));
    EXPECT_NEAR(mean / m, 1.0, 1e-9);
    EXPECT_NEAR(sd, s, 1e-9 * m);
  }
  EXPECT_THROW(moment_match(0.0, 1.0), std::domain_error);
  EXPECT_THROW(moment_match(10.0, -1.0), std::domain_error);
}

TEST(Latency, SampledRttMatchesTargetMoments) {
  CircuitConfig cfg;
  cfg.params = LatencyParams::from_moments(tor_presets::kDublinOkeanosMean, tor_presets::kDublinOkeanosStd);
  Rng rng(17);
  const auto c = open_circuit(cfg, 0, rng);
  std::vector<double> v(1'000'000);
  for (auto& x : v) x = emu_sample_rtt(c, rng);
  const auto s = stats(v);
  EXPECT_NEAR(s.mean / 326.42, 1.0, 0.01);
  EXPECT_NEAR(s.sd / 278.52, 1.0, 0.05);
  EXPECT_GT(s.min, 0.0);
}

TEST(Latency, ZeroSigmaIsDeterministic) {
  CircuitConfig cfg;
  cfg.params = LatencyParams::from_moments(100.0, 0.0);
  Rng rng(1);
  const auto c = open_circuit(cfg, 0, rng);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(emu_sample_delay(c, rng), 50.0);
}

TEST(Latency, FrankfurtDublinOneWay) {
  CircuitConfig cfg;
  cfg.params = LatencyParams::from_moments(tor_presets::kFrankfurtDublinMean, tor_presets::kFrankfurtDublinStd);
  Rng rng(3);
  const auto c = open_circuit(cfg, 0, rng);
  double sum = 0;
  const int n = 200'000;
  for (int i = 0; i < n; ++i) sum += emu_sample_delay(c, rng);
  EXPECT_NEAR(sum / n, 270.37, 0.02 * 270.37);
}

TEST(Latency, BaseOffsetAddsToBothDirections) {
  CircuitConfig cfg;
  cfg.params = LatencyParams::from_moments(100.0, 0.0);
  cfg.base_offset_max_ms = 40;
  Rng rng(8);
  const auto c = open_circuit(cfg, 0, rng);
  EXPECT_GE(c.base_offset_ms, 0.0);
  EXPECT_LE(c.base_offset_ms, 40.0);
  EXPECT_DOUBLE_EQ(emu_sample_rtt(c, rng), 100.0 + 2 * c.base_offset_ms);
}

TEST(Latency, DownCircuitCannotBeSampled) {
  CircuitConfig cfg;
  Rng rng(1);
  auto c = open_circuit(cfg, 0, rng);
  c.alive = false;
  EXPECT_THROW(emu_sample_rtt(c, rng), CircuitDown);
}

TEST(Latency, AdvanceKeepsLiveCircuit) {
  CircuitConfig cfg;
  Rng rng(2);
  const auto c = open_circuit(cfg, 1000, rng);
  const auto r = emu_advance(c, cfg, 1000 + c.lifetime_ms, rng);
  EXPECT_FALSE(r.rebuilt);
  EXPECT_FALSE(r.failure);
  EXPECT_EQ(r.circuit.generation, 0u);
}

TEST(Latency, AdvanceRebuildsExpiredOrDeadCircuit) {
  CircuitConfig cfg;
  Rng rng(2);
  const auto c = open_circuit(cfg, 0, rng);
  const auto r = emu_advance(c, cfg, c.lifetime_ms + 1, rng);
  EXPECT_TRUE(r.rebuilt);
  EXPECT_EQ(r.circuit.generation, 1u);
  EXPECT_EQ(r.circuit.established_at, c.lifetime_ms + 1);
  EXPECT_GE(r.circuit.lifetime_ms, cfg.min_lifetime_ms);
  EXPECT_LE(r.circuit.lifetime_ms, cfg.max_lifetime_ms);

  auto dead = c;
  dead.alive = false;
  EXPECT_TRUE(emu_advance(dead, cfg, 1, rng).rebuilt);
}

TEST(Latency, RebuildFailureFraction) {
  CircuitConfig cfg;
  cfg.p_reset = 0.05;
  Rng rng(99);
  auto c = open_circuit(cfg, 0, rng);
  int failures = 0;
  const int n = 20'000;
  for (int i = 0; i < n; ++i) {
    auto r = emu_advance(c, cfg, c.established_at + c.lifetime_ms + 1, rng);
    ASSERT_TRUE(r.rebuilt);
    failures += r.failure;
    c = r.circuit;
  }
  EXPECT_NEAR(static_cast<double>(failures) / n, 0.05, 0.01);
}

TEST(Latency, ConfigValidation) {
  CircuitConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.min_lifetime_ms = cfg.max_lifetime_ms + 1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.p_reset = 1.5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace anonpads
