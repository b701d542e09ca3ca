#include "anonpads/latency.hpp"

#include <cmath>
#include <limits>

namespace anonpads {

LogNormalParams moment_match(double mean_ms, double std_ms) {
  if (!(mean_ms > 0.0)) throw std::domain_error("moment_match: mean must be positive");
  if (!(std_ms >= 0.0)) throw std::domain_error("moment_match: std must be non-negative");
  const double cv = std_ms / mean_ms;
  const double sigma2 = std::log1p(cv * cv);
  return {std::log(mean_ms) - sigma2 / 2.0, std::sqrt(sigma2)};
}

LatencyParams LatencyParams::from_moments(double mean_ms, double std_ms) {
  const auto fit = moment_match(mean_ms, std_ms);
  return {mean_ms, std_ms, fit.mu, fit.sigma};
}

void CircuitConfig::validate() const {
  if (!(min_lifetime_ms > 0.0 && min_lifetime_ms <= max_lifetime_ms))
    throw std::invalid_argument("circuit lifetime bounds must satisfy 0 < min <= max");
  if (!(base_offset_max_ms >= 0.0)) throw std::invalid_argument("base offset bound must be non-negative");
  if (!(p_reset >= 0.0 && p_reset <= 1.0)) throw std::invalid_argument("p_reset must be in [0, 1]");
  if (!(params.mean_ms > 0.0)) throw std::invalid_argument("latency mean must be positive");
}

CircuitState open_circuit(const CircuitConfig& cfg, double now_ms, Rng& rng) {
  CircuitState c;
  c.established_at = now_ms;
  c.lifetime_ms = rng.uniform(cfg.min_lifetime_ms, cfg.max_lifetime_ms);
  c.params = cfg.params;
  c.base_offset_ms = rng.uniform(0.0, cfg.base_offset_max_ms);
  c.alive = true;
  return c;
}

double emu_sample_rtt(const CircuitState& circuit, Rng& rng) {
  if (!circuit.alive) throw CircuitDown();
  // exp(mu) with sigma=0 equals mean_ms only up to rounding; use the exact target.
  const double rtt = circuit.params.sigma == 0.0 ? circuit.params.mean_ms
                                                 : rng.lognormal(circuit.params.mu, circuit.params.sigma);
  return 2.0 * circuit.base_offset_ms + std::max(rtt, std::numeric_limits<double>::min());
}

double emu_sample_delay(const CircuitState& circuit, Rng& rng) {
  return emu_sample_rtt(circuit, rng) / 2.0;
}

AdvanceResult emu_advance(const CircuitState& circuit, const CircuitConfig& cfg, double now_ms, Rng& rng) {
  AdvanceResult r{circuit, false, false};
  if (circuit.alive && now_ms - circuit.established_at <= circuit.lifetime_ms) return r;
  const std::uint64_t generation = circuit.generation + 1;
  r.circuit = open_circuit(cfg, now_ms, rng);
  r.circuit.generation = generation;
  r.rebuilt = true;
  r.failure = rng.bernoulli(cfg.p_reset);
  return r;
}

}  // namespace anonpads
