#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "anonpads/model.hpp"
#include "anonpads/rng.hpp"

namespace anonpads {
namespace {

std::vector<PingPair> brute_force_pings(const std::vector<PositionEntry>& ps, const ModelConfig& cfg) {
  std::vector<PingPair> out;
  for (const auto& a : ps)
    for (const auto& b : ps)
      if (a.entity_id != b.entity_id && toroidal_dist({a.x, a.y}, {b.x, b.y}, cfg.space_l) <= cfg.radius)
        out.push_back({a.entity_id, b.entity_id});
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<PositionEntry> random_positions(Rng& rng, std::size_t n, double l) {
  std::vector<PositionEntry> ps;
  for (std::uint32_t i = 0; i < n; ++i)
    ps.push_back({static_cast<std::uint32_t>(i * 7 + 3), wrap_coord(rng.uniform(0, l), l), wrap_coord(rng.uniform(0, l), l)});
  return ps;
}

TEST(Model, ToroidalDistanceExamples) {
  EXPECT_DOUBLE_EQ(toroidal_dist({0, 0}, {9999, 0}, 10000), 1.0);
  EXPECT_DOUBLE_EQ(toroidal_dist({1, 2}, {4, 6}, 10000), 5.0);
  EXPECT_NEAR(toroidal_dist({500, 500}, {9500, 9500}, 10000), 1414.2135623730951, 1e-9);
}

TEST(Model, ToroidalDistanceIsAMetric) {
  Rng rng(3);
  const double l = 10000;
  for (int i = 0; i < 10000; ++i) {
    const Point a{rng.uniform(0, l), rng.uniform(0, l)};
    const Point b{rng.uniform(0, l), rng.uniform(0, l)};
    const Point c{rng.uniform(0, l), rng.uniform(0, l)};
    const double ab = toroidal_dist(a, b, l);
    EXPECT_EQ(ab, toroidal_dist(b, a, l));
    EXPECT_GE(ab, 0.0);
    EXPECT_EQ(toroidal_dist(a, a, l), 0.0);
    EXPECT_LE(ab, l / std::sqrt(2.0) + 1e-9);
    EXPECT_LE(ab, toroidal_dist(a, c, l) + toroidal_dist(c, b, l) + 1e-9);
  }
}

TEST(Model, RwpMovesTowardWaypoint) {
  ModelConfig cfg;
  Rng rng(1);
  SmhEntity e{1, 0, 0, 3, 4, 1, 0};
  const auto n = rwp_step(e, rng, cfg);
  EXPECT_NEAR(n.x, 0.6, 1e-12);
  EXPECT_NEAR(n.y, 0.8, 1e-12);
  EXPECT_EQ(n.waypoint_x, 3);
}

TEST(Model, RwpCrossesTheSeam) {
  ModelConfig cfg;
  Rng rng(1);
  const auto n = rwp_step(SmhEntity{1, 9999, 0, 2, 0, 1, 0}, rng, cfg);
  EXPECT_EQ(n.x, 0.0);
  EXPECT_EQ(n.y, 0.0);
}

TEST(Model, RwpArrivalRedrawsFromStream) {
  ModelConfig cfg;
  SmhEntity e{4, 10, 10, 10, 10, 5, 0};
  Rng a = entity_rng(1, 4, 9, RngPurpose::mobility);
  Rng b = entity_rng(1, 4, 9, RngPurpose::mobility);
  const auto n1 = rwp_step(e, a, cfg);
  const auto n2 = rwp_step(e, b, cfg);
  EXPECT_EQ(n1, n2);
  EXPECT_EQ(n1.x, 10);
  EXPECT_EQ(n1.pause_left, 0u);
  EXPECT_NE(n1.waypoint_x, 10);
  EXPECT_GE(n1.speed, cfg.v_min);
  EXPECT_LE(n1.speed, cfg.v_max);
}

TEST(Model, RwpPauseOnlyDecrements) {
  ModelConfig cfg;
  cfg.pause_max = 5;
  Rng rng(1);
  SmhEntity e{1, 1, 1, 50, 50, 3, 2};
  const auto n = rwp_step(e, rng, cfg);
  EXPECT_EQ(n.pause_left, 1u);
  EXPECT_EQ(n.x, 1);
}

TEST(Model, PositionsStayInsideTheTorus) {
  ModelConfig cfg;
  cfg.pause_max = 3;
  cfg.v_max = 400;
  for (std::uint32_t id = 0; id < 10; ++id) {
    SmhEntity e = make_entity(id, 5, cfg);
    for (std::uint64_t s = 0; s < 10000; ++s) {
      Rng rng = entity_rng(5, id, s, RngPurpose::mobility);
      e = rwp_step(e, rng, cfg);
      ASSERT_TRUE(e.x >= 0 && e.x < cfg.space_l && e.y >= 0 && e.y < cfg.space_l) << id << "@" << s;
      ASSERT_TRUE(e.waypoint_x >= 0 && e.waypoint_x < cfg.space_l);
      ASSERT_TRUE(e.speed >= cfg.v_min && e.speed <= cfg.v_max);
    }
  }
}

TEST(Model, WrapCoordEdges) {
  EXPECT_EQ(wrap_coord(10000, 10000), 0.0);
  EXPECT_EQ(wrap_coord(-1e-300, 10000), 0.0);
  EXPECT_EQ(wrap_coord(-1, 10000), 9999.0);
  EXPECT_EQ(wrap_coord(25000, 10000), 5000.0);
}

TEST(Model, PingsBoundaryIsInclusive) {
  ModelConfig cfg;
  const auto p = compute_pings({{1, 0, 0}, {2, 250, 0}}, cfg);
  EXPECT_EQ(p, (std::vector<PingPair>{{1, 2}, {2, 1}}));
  EXPECT_TRUE(compute_pings({{1, 0, 0}, {2, 250.0001, 0}}, cfg).empty());
  EXPECT_TRUE(compute_pings({{1, 5, 5}}, cfg).empty());
  EXPECT_TRUE(compute_pings({}, cfg).empty());
}

TEST(Model, PingsAcrossTheSeam) {
  ModelConfig cfg;
  const auto p = compute_pings({{1, 9990, 9990}, {2, 5, 5}}, cfg);
  EXPECT_EQ(p.size(), 2u);
}

TEST(Model, DuplicateIdsAreRejected) {
  ModelConfig cfg;
  EXPECT_THROW(compute_pings({{1, 0, 0}, {1, 3, 3}}, cfg), ModelError);
}

TEST(Model, PingsMatchBruteForce) {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    ModelConfig cfg;
    cfg.space_l = rng.uniform(500, 20000);
    cfg.radius = rng.uniform(1, cfg.space_l / 2 - 1);
    const auto n = static_cast<std::size_t>(rng.uniform_int(0, 200));
    const auto ps = random_positions(rng, n, cfg.space_l);
    const auto got = compute_pings(ps, cfg);
    ASSERT_EQ(got, brute_force_pings(ps, cfg)) << "trial " << trial << " n=" << n;
    EXPECT_EQ(got.size() % 2, 0u);
  }
}

TEST(Model, GridPathMatchesBruteForceAtScale) {
  Rng rng(5);
  ModelConfig cfg;
  const auto ps = random_positions(rng, 1500, cfg.space_l);
  EXPECT_EQ(compute_pings(ps, cfg), brute_force_pings(ps, cfg));
}

TEST(Model, MeanDegreeMatchesUniformDensity) {
  ModelConfig cfg;
  cfg.n_entities = 1000;
  std::vector<SmhEntity> es;
  for (std::uint32_t i = 0; i < cfg.n_entities; ++i) es.push_back(make_entity(i, 2024, cfg));
  double pings = 0;
  int samples = 0;
  for (std::uint64_t s = 0; s < 3000; ++s) {
    if (s % 50 == 0) {
      std::vector<PositionEntry> ps;
      for (const auto& e : es) ps.push_back({e.entity_id, e.x, e.y});
      pings += static_cast<double>(compute_pings(ps, cfg).size());
      ++samples;
    }
    for (auto& e : es) {
      Rng rng = entity_rng(2024, e.entity_id, s, RngPurpose::mobility);
      e = rwp_step(e, rng, cfg);
    }
  }
  const double degree = pings / samples / cfg.n_entities;
  const double expected = (cfg.n_entities - 1) * M_PI * cfg.radius * cfg.radius / (cfg.space_l * cfg.space_l);
  EXPECT_NEAR(degree, expected, 0.1 * expected);
}

TEST(Model, EntityBlobRoundTripsBitExactly) {
  ModelConfig cfg;
  for (std::uint32_t id = 0; id < 100; ++id) {
    SmhEntity e = make_entity(id, 8, cfg);
    e.pause_left = id * 3;
    const Bytes b = serialize_entity(e);
    ASSERT_EQ(b.size(), kEntityBlobSize);
    EXPECT_EQ(deserialize_entity(b), e);
  }
  EXPECT_THROW(deserialize_entity(Bytes(47)), ModelError);
}

TEST(Model, ConfigValidation) {
  ModelConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.radius = 5000;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.radius = 250;
  cfg.v_min = 11;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Model, EntityStreamsAreIndependentOfHost) {
  Rng a = entity_rng(1, 42, 3, RngPurpose::mobility);
  Rng b = entity_rng(1, 42, 3, RngPurpose::mobility);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
  std::set<std::uint64_t> firsts;
  for (std::uint32_t id = 0; id < 10000; ++id) firsts.insert(entity_rng(1, id, 3, RngPurpose::mobility)());
  EXPECT_EQ(firsts.size(), 10000u);
  EXPECT_NE(entity_rng(1, 42, 3, RngPurpose::mobility)(), entity_rng(1, 42, 3, RngPurpose::init)());
  EXPECT_NE(entity_rng(1, 42, 3, RngPurpose::mobility)(), entity_rng(1, 42, 4, RngPurpose::mobility)());
}

}  // namespace
}  // namespace anonpads
