#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "anonpads/rng.hpp"
#include "anonpads/wire.hpp"

namespace anonpads {

/// Simulated mobile host of the wireless benchmark.
struct SmhEntity {
  std::uint32_t entity_id = 0;
  double x = 0.0;
  double y = 0.0;
  double waypoint_x = 0.0;
  double waypoint_y = 0.0;
  double speed = 0.0;
  std::uint32_t pause_left = 0;

  bool operator==(const SmhEntity&) const = default;
};

struct ModelConfig {
  std::uint32_t n_entities = 300;
  double space_l = 10000.0;
  double radius = 250.0;
  double v_min = 1.0;
  double v_max = 10.0;
  std::uint32_t pause_max = 0;

  /// Throws std::invalid_argument unless 0 < radius < L/2 and 0 <= v_min <= v_max.
  void validate() const;
};

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Euclidean distance on the torus [0,L)^2 with per-axis wraparound.
double toroidal_dist(Point a, Point b, double space_l);

/// Wraps a coordinate into [0, L).
double wrap_coord(double v, double space_l);

/// One step of Random Waypoint mobility on the torus.
SmhEntity rwp_step(const SmhEntity& e, Rng& rng, const ModelConfig& cfg);

/// Draws the initial state of an entity from its init stream.
SmhEntity make_entity(std::uint32_t entity_id, std::uint64_t global_seed, const ModelConfig& cfg);

/// Every ordered pair (a, b), a != b, within `radius` (inclusive), sorted.
/// Throws ModelError on duplicate entity ids.
std::vector<PingPair> compute_pings(const std::vector<PositionEntry>& positions, const ModelConfig& cfg);

inline constexpr std::size_t kEntityBlobSize = 48;

Bytes serialize_entity(const SmhEntity& e);
/// Throws ModelError on wrong size.
SmhEntity deserialize_entity(ByteView blob);

}  // namespace anonpads
