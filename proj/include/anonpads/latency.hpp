#pragma once

#include <stdexcept>

#include "anonpads/rng.hpp"

namespace anonpads {

/// Lognormal log-space parameters.
struct LogNormalParams {
  double mu = 0.0;
  double sigma = 0.0;
};

/// Moment matching: the lognormal with the returned (mu, sigma) has the
/// given mean and standard deviation. Throws std::domain_error if mean <= 0
/// or std < 0.
LogNormalParams moment_match(double mean_ms, double std_ms);

/// Round-trip latency target of an emulated path plus its lognormal fit.
struct LatencyParams {
  double mean_ms = 100.0;
  double std_ms = 0.0;
  double mu = 0.0;
  double sigma = 0.0;

  static LatencyParams from_moments(double mean_ms, double std_ms);
};

/// Tor rows of the RTT table used as presets (mean, std in ms).
namespace tor_presets {
inline constexpr double kDublinOkeanosMean = 326.42;
inline constexpr double kDublinOkeanosStd = 278.52;
inline constexpr double kOkeanosFrankfurtMean = 282.74;
inline constexpr double kOkeanosFrankfurtStd = 104.83;
inline constexpr double kFrankfurtDublinMean = 540.74;
inline constexpr double kFrankfurtDublinStd = 54.5;
}  // namespace tor_presets

struct CircuitConfig {
  LatencyParams params = LatencyParams::from_moments(tor_presets::kDublinOkeanosMean, tor_presets::kDublinOkeanosStd);
  double min_lifetime_ms = 60'000.0;
  double max_lifetime_ms = 600'000.0;
  /// Per-circuit additive one-way offset is drawn from U[0, base_offset_max_ms].
  double base_offset_max_ms = 0.0;
  /// Probability that a rebuild also surfaces as a transient connection failure.
  double p_reset = 0.05;

  void validate() const;
};

struct CircuitState {
  double established_at = 0.0;
  double lifetime_ms = 0.0;
  LatencyParams params;
  double base_offset_ms = 0.0;
  bool alive = true;
  std::uint64_t generation = 0;
};

/// Raised when sampling from a circuit that is down.
class CircuitDown : public std::runtime_error {
 public:
  CircuitDown() : std::runtime_error("circuit down") {}
};

CircuitState open_circuit(const CircuitConfig& cfg, double now_ms, Rng& rng);

/// Full round trip: 2 * base_offset + one lognormal draw.
double emu_sample_rtt(const CircuitState& circuit, Rng& rng);

/// One-way delay: base_offset + lognormal / 2. Always > 0.
double emu_sample_delay(const CircuitState& circuit, Rng& rng);

struct AdvanceResult {
  CircuitState circuit;
  bool rebuilt = false;
  bool failure = false;
};

/// Rebuilds the circuit once its lifetime has elapsed (or it is down); with
/// probability p_reset the rebuild is reported as a transient failure.
AdvanceResult emu_advance(const CircuitState& circuit, const CircuitConfig& cfg, double now_ms, Rng& rng);

}  // namespace anonpads
