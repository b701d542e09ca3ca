#include "anonpads/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace anonpads {

long long StatsRow::ci90_rounded() const { return std::llround(ci90); }

double ci90_from_sd(double sd, std::size_t n) {
  if (n == 0) throw InsufficientSamples("n must be positive");
  return kZ90 * sd / std::sqrt(static_cast<double>(n));
}

StatsRow stats(std::span<const double> values) {
  if (values.size() < 2) throw InsufficientSamples("stats needs at least 2 samples, got " + std::to_string(values.size()));
  StatsRow r;
  r.n = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  r.mean = sum / static_cast<double>(r.n);
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  r.sd = std::sqrt(ss / static_cast<double>(r.n - 1));
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  r.min = *lo;
  r.max = *hi;
  r.ci90 = ci90_from_sd(r.sd, r.n);
  return r;
}

double speedup(double wct_off_mean, double wct_on_mean) {
  if (!(wct_on_mean > 0.0)) throw std::invalid_argument("speedup needs a positive ALL_ON mean");
  return wct_off_mean / wct_on_mean;
}

std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::vector<HistogramBin> histogram(std::span<const double> values, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("histogram needs at least one bin");
  std::vector<HistogramBin> out;
  if (values.empty()) return out;
  auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  const double width = hi > lo ? (hi - lo) / static_cast<double>(bins) : 1.0;
  out.resize(bins);
  for (std::size_t i = 0; i < bins; ++i) {
    out[i].lo = lo + width * static_cast<double>(i);
    out[i].hi = i + 1 == bins ? std::max(hi, lo + width * static_cast<double>(bins)) : lo + width * static_cast<double>(i + 1);
  }
  for (double v : values) {
    auto i = static_cast<std::size_t>((v - lo) / width);
    ++out[std::min(i, bins - 1)].count;
  }
  return out;
}

}  // namespace anonpads
