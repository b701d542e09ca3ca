#include "anonpads/balancer.hpp"

#include <algorithm>
#include <cmath>

namespace anonpads {

std::vector<MigrationOrder> plan_migrations(std::span<const EntityLocality> localities, const BalancerConfig& cfg,
                                            std::uint32_t self_lp, std::uint64_t now_step) {
  std::vector<MigrationOrder> plan;
  if (!cfg.enabled) return plan;
  for (const auto& loc : localities) {
    if (loc.arrived_at && now_step - *loc.arrived_at < cfg.cooldown) continue;
    std::uint64_t internal = 0;
    std::optional<std::pair<std::uint32_t, std::uint64_t>> best;
    for (const auto& [lp, count] : loc.per_lp) {
      if (lp == self_lp) {
        internal = count;
      } else if (!best || count > best->second) {  // map order: lower id wins ties
        best = {lp, count};
      }
    }
    if (!best) continue;
    const auto external = best->second;
    if (static_cast<double>(external) > cfg.migration_factor * static_cast<double>(internal))
      plan.push_back({loc.entity_id, best->first, external > internal ? external - internal : 0});
  }
  std::sort(plan.begin(), plan.end(), [](const MigrationOrder& a, const MigrationOrder& b) {
    return a.margin != b.margin ? a.margin > b.margin : a.entity_id < b.entity_id;
  });
  const auto cap = static_cast<std::size_t>(
      std::floor(cfg.max_migrations_frac * static_cast<double>(localities.size()) + 1e-9));
  if (plan.size() > cap) plan.resize(cap);
  return plan;
}

bool evaluation_due(const BalancerConfig& cfg, std::uint64_t step, std::uint32_t lp, std::uint32_t n_lps) {
  if (!cfg.enabled || n_lps < 2) return false;
  const std::uint64_t offset = static_cast<std::uint64_t>(lp) * cfg.eval_period / n_lps;
  return (step + 1 + offset) % cfg.eval_period == 0;
}

}  // namespace anonpads
