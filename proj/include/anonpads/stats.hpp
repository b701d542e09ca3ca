#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace anonpads {

class InsufficientSamples : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kZ90 = 1.645;

struct StatsRow {
  std::size_t n = 0;
  double mean = 0.0;
  /// Sample standard deviation (n - 1 denominator).
  double sd = 0.0;
  double min = 0.0;
  double max = 0.0;
  /// Half-width of the 90% interval, normal quantile: 1.645 * sd / sqrt(n).
  double ci90 = 0.0;

  long long ci90_rounded() const;
};

/// Throws InsufficientSamples when fewer than two values are given.
StatsRow stats(std::span<const double> values);

/// CI half-width from a published (sd, n) pair.
double ci90_from_sd(double sd, std::size_t n);

/// off / on. Throws std::invalid_argument unless on > 0.
double speedup(double wct_off_mean, double wct_on_mean);
/// Two-decimal rendering used in reports.
std::string format_fixed(double v, int decimals);

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::uint64_t count = 0;
};
/// Equal-width bins spanning [min, max]; the last bin is closed.
std::vector<HistogramBin> histogram(std::span<const double> values, std::size_t bins = 20);

}  // namespace anonpads
