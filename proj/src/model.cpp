#include "anonpads/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

namespace anonpads {

void ModelConfig::validate() const {
  if (!(space_l > 0.0)) throw std::invalid_argument("space_l must be positive");
  if (!(radius > 0.0 && radius < space_l / 2.0)) throw std::invalid_argument("radius must satisfy 0 < radius < L/2");
  if (!(v_min >= 0.0 && v_min <= v_max)) throw std::invalid_argument("speeds must satisfy 0 <= v_min <= v_max");
}

double wrap_coord(double v, double space_l) {
  v = std::fmod(v, space_l);
  if (v < 0.0) v += space_l;
  if (v >= space_l) v = 0.0;  // -tiny + L rounds up to L
  return v;
}

namespace {

double axis_gap(double a, double b, double space_l) {
  const double d = std::fabs(a - b);
  return std::min(d, space_l - d);
}

// Signed shortest displacement from a to b along one axis.
double axis_delta(double from, double to, double space_l) {
  double d = to - from;
  if (d > space_l / 2.0) d -= space_l;
  if (d < -space_l / 2.0) d += space_l;
  return d;
}

}  // namespace

double toroidal_dist(Point a, Point b, double space_l) {
  const double dx = axis_gap(a.x, b.x, space_l);
  const double dy = axis_gap(a.y, b.y, space_l);
  return std::sqrt(dx * dx + dy * dy);
}

SmhEntity rwp_step(const SmhEntity& e, Rng& rng, const ModelConfig& cfg) {
  SmhEntity out = e;
  if (out.pause_left > 0) {
    --out.pause_left;
    return out;
  }
  const double remaining = toroidal_dist({e.x, e.y}, {e.waypoint_x, e.waypoint_y}, cfg.space_l);
  if (remaining <= e.speed) {
    out.x = e.waypoint_x;
    out.y = e.waypoint_y;
    out.pause_left = static_cast<std::uint32_t>(rng.uniform_int(0, cfg.pause_max));
    out.waypoint_x = wrap_coord(rng.uniform(0.0, cfg.space_l), cfg.space_l);
    out.waypoint_y = wrap_coord(rng.uniform(0.0, cfg.space_l), cfg.space_l);
    out.speed = rng.uniform(cfg.v_min, cfg.v_max);
    return out;
  }
  const double dx = axis_delta(e.x, e.waypoint_x, cfg.space_l);
  const double dy = axis_delta(e.y, e.waypoint_y, cfg.space_l);
  out.x = wrap_coord(e.x + e.speed * dx / remaining, cfg.space_l);
  out.y = wrap_coord(e.y + e.speed * dy / remaining, cfg.space_l);
  return out;
}

SmhEntity make_entity(std::uint32_t entity_id, std::uint64_t global_seed, const ModelConfig& cfg) {
  Rng rng = entity_rng(global_seed, entity_id, 0, RngPurpose::init);
  SmhEntity e;
  e.entity_id = entity_id;
  // uniform(0, L) can round up to L itself.
  e.x = wrap_coord(rng.uniform(0.0, cfg.space_l), cfg.space_l);
  e.y = wrap_coord(rng.uniform(0.0, cfg.space_l), cfg.space_l);
  e.waypoint_x = wrap_coord(rng.uniform(0.0, cfg.space_l), cfg.space_l);
  e.waypoint_y = wrap_coord(rng.uniform(0.0, cfg.space_l), cfg.space_l);
  e.speed = rng.uniform(cfg.v_min, cfg.v_max);
  e.pause_left = 0;
  return e;
}

std::vector<PingPair> compute_pings(const std::vector<PositionEntry>& positions, const ModelConfig& cfg) {
  const std::size_t n = positions.size();
  {
    std::vector<std::uint32_t> ids;
    ids.reserve(n);
    for (const auto& p : positions) ids.push_back(p.entity_id);
    std::sort(ids.begin(), ids.end());
    auto dup = std::adjacent_find(ids.begin(), ids.end());
    if (dup != ids.end()) throw ModelError("duplicate entity id " + std::to_string(*dup) + " in position set");
  }

  std::vector<PingPair> out;
  auto consider = [&](const PositionEntry& a, const PositionEntry& b) {
    if (toroidal_dist({a.x, a.y}, {b.x, b.y}, cfg.space_l) <= cfg.radius) {
      out.push_back({a.entity_id, b.entity_id});
      out.push_back({b.entity_id, a.entity_id});
    }
  };

  // Uniform grid with cells at least `radius` wide; 3x3 neighborhoods are
  // distinct only with >= 3 cells per axis, otherwise fall back to all pairs.
  const auto cells = static_cast<std::size_t>(std::floor(cfg.space_l / cfg.radius));
  if (cells < 3 || n < 64) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) consider(positions[i], positions[j]);
  } else {
    const double cell_w = cfg.space_l / static_cast<double>(cells);
    auto cell_of = [&](double v) {
      auto c = static_cast<std::size_t>(v / cell_w);
      return std::min(c, cells - 1);
    };
    std::vector<std::vector<std::size_t>> grid(cells * cells);
    std::vector<std::size_t> home(n);
    for (std::size_t i = 0; i < n; ++i) {
      home[i] = cell_of(positions[i].y) * cells + cell_of(positions[i].x);
      grid[home[i]].push_back(i);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t cx = home[i] % cells;
      const std::size_t cy = home[i] / cells;
      for (std::size_t oy = 0; oy < 3; ++oy) {
        for (std::size_t ox = 0; ox < 3; ++ox) {
          const std::size_t nx = (cx + cells + ox - 1) % cells;
          const std::size_t ny = (cy + cells + oy - 1) % cells;
          for (std::size_t j : grid[ny * cells + nx])
            if (j > i) consider(positions[i], positions[j]);
        }
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

Bytes serialize_entity(const SmhEntity& e) {
  Bytes out;
  out.reserve(kEntityBlobSize);
  auto put = [&out](std::uint64_t v, int bytes) {
    for (int shift = 8 * (bytes - 1); shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
  };
  put(e.entity_id, 4);
  put(std::bit_cast<std::uint64_t>(e.x), 8);
  put(std::bit_cast<std::uint64_t>(e.y), 8);
  put(std::bit_cast<std::uint64_t>(e.waypoint_x), 8);
  put(std::bit_cast<std::uint64_t>(e.waypoint_y), 8);
  put(std::bit_cast<std::uint64_t>(e.speed), 8);
  put(e.pause_left, 4);
  return out;
}

SmhEntity deserialize_entity(ByteView blob) {
  if (blob.size() != kEntityBlobSize)
    throw ModelError("entity blob must be 48 bytes, got " + std::to_string(blob.size()));
  std::size_t pos = 0;
  auto get = [&](int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v = (v << 8) | blob[pos++];
    return v;
  };
  SmhEntity e;
  e.entity_id = static_cast<std::uint32_t>(get(4));
  e.x = std::bit_cast<double>(get(8));
  e.y = std::bit_cast<double>(get(8));
  e.waypoint_x = std::bit_cast<double>(get(8));
  e.waypoint_y = std::bit_cast<double>(get(8));
  e.speed = std::bit_cast<double>(get(8));
  e.pause_left = static_cast<std::uint32_t>(get(4));
  return e;
}

}  // namespace anonpads
