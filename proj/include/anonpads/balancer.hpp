#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace anonpads {

struct BalancerConfig {
  bool enabled = false;
  std::uint32_t window = 10;
  std::uint32_t eval_period = 10;
  double migration_factor = 1.0;
  double max_migrations_frac = 0.05;
  std::uint32_t cooldown = 20;

  void validate() const {
    if (window < 1) throw std::invalid_argument("balancer.window must be >= 1");
    if (eval_period < 1) throw std::invalid_argument("balancer.eval_period must be >= 1");
    if (!(migration_factor > 0.0)) throw std::invalid_argument("balancer.factor must be > 0");
    if (!(max_migrations_frac > 0.0 && max_migrations_frac <= 1.0))
      throw std::invalid_argument("balancer.max_frac must be in (0, 1]");
  }
};

/// Ring of the last `width` per-step buckets of counts per key.
template <typename Key>
class CountWindow {
 public:
  using Bucket = std::map<Key, std::uint64_t>;

  explicit CountWindow(std::uint32_t width) : slots_(width) {
    if (width == 0) throw std::invalid_argument("window width must be >= 1");
  }

  void record(std::uint64_t step, const Key& key, std::uint64_t count) {
    Slot& s = slots_[step % slots_.size()];
    if (!s.step || *s.step != step) {
      s.step = step;
      s.counts.clear();
    }
    s.counts[key] += count;
  }

  /// Bucket for `step` if it is still inside the ring.
  const Bucket* bucket(std::uint64_t step) const {
    const Slot& s = slots_[step % slots_.size()];
    return s.step && *s.step == step ? &s.counts : nullptr;
  }

  /// Sum over steps in (now_step - width, now_step].
  Bucket totals(std::uint64_t now_step) const {
    Bucket out;
    for (const Slot& s : slots_) {
      if (!s.step || *s.step > now_step || now_step - *s.step >= slots_.size()) continue;
      for (const auto& [k, v] : s.counts) out[k] += v;
    }
    return out;
  }

  std::uint32_t width() const { return static_cast<std::uint32_t>(slots_.size()); }

 private:
  struct Slot {
    std::optional<std::uint64_t> step;
    Bucket counts;
  };
  std::vector<Slot> slots_;
};

/// Per-entity interaction windows. Key is the hosting LP id for the plain
/// form; the engine keys by partner entity and folds through its directory
/// at evaluation time so counts follow partners that migrated.
template <typename Key = std::uint32_t>
class InteractionWindow {
 public:
  explicit InteractionWindow(std::uint32_t width = 10) : width_(width) {
    if (width == 0) throw std::invalid_argument("window width must be >= 1");
  }

  void record_interaction(std::uint32_t entity_id, const Key& key, std::uint64_t count, std::uint64_t step) {
    auto it = windows_.try_emplace(entity_id, width_).first;
    it->second.record(step, key, count);
  }

  std::map<Key, std::uint64_t> totals(std::uint32_t entity_id, std::uint64_t now_step) const {
    auto it = windows_.find(entity_id);
    return it == windows_.end() ? std::map<Key, std::uint64_t>{} : it->second.totals(now_step);
  }

  const CountWindow<Key>* window_of(std::uint32_t entity_id) const {
    auto it = windows_.find(entity_id);
    return it == windows_.end() ? nullptr : &it->second;
  }

  void forget(std::uint32_t entity_id) { windows_.erase(entity_id); }
  std::uint32_t width() const { return width_; }

 private:
  std::uint32_t width_;
  std::unordered_map<std::uint32_t, CountWindow<Key>> windows_;
};

/// Windowed interaction totals of one locally hosted entity.
struct EntityLocality {
  std::uint32_t entity_id = 0;
  /// Pings toward entities hosted on each LP, own LP included.
  std::map<std::uint32_t, std::uint64_t> per_lp;
  /// Step at which the entity last arrived here by migration.
  std::optional<std::uint64_t> arrived_at;
};

struct MigrationOrder {
  std::uint32_t entity_id = 0;
  std::uint32_t dest_lp = 0;
  std::uint64_t margin = 0;

  bool operator==(const MigrationOrder&) const = default;
};

/// Majority-interaction self-clustering. For each entity out of cooldown the
/// candidate is the LP it pings most (lower id on ties); it moves when that
/// count strictly exceeds factor * internal count. The plan keeps the
/// largest margins (lower entity id on ties), at most
/// floor(max_frac * localities.size()) of them.
std::vector<MigrationOrder> plan_migrations(std::span<const EntityLocality> localities, const BalancerConfig& cfg,
                                            std::uint32_t self_lp, std::uint64_t now_step);

/// Whether `lp` evaluates at the end of `step`. Evaluation is staggered by
/// lp * eval_period / n_lps so two LPs never move both ends of a split pair
/// at the same boundary.
bool evaluation_due(const BalancerConfig& cfg, std::uint64_t step, std::uint32_t lp, std::uint32_t n_lps);

}  // namespace anonpads
