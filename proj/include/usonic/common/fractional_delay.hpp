#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace usonic {

/// Length of the windowed-sinc fractional delay interpolator.
inline constexpr int kDelayTaps = 16;

/// One FIR coefficient: y[t] += weight * x[t - lag].
struct Tap {
  std::ptrdiff_t lag = 0;
  double weight = 0.0;
};

/// Taps realising a delay of `delay_samples` (may be negative). Integer delays
/// yield a single unit tap, so they are exact; fractional delays use 16
/// Hann-windowed sinc taps normalised to unit DC gain.
std::vector<Tap> delay_taps(double delay_samples, double gain = 1.0);

/// Collects taps from many delayed copies and merges equal lags.
class TapSet {
 public:
  void add(double delay_samples, double gain);
  void add(const Tap& tap) { taps_.push_back(tap); }
  /// Sorted by lag, duplicates summed, exact zeros removed.
  std::vector<Tap> finalize() const;

 private:
  std::vector<Tap> taps_;
};

/// y[t] += sum_k taps[k].weight * x[t - taps[k].lag] over 0 <= t < y.size(),
/// treating x as zero outside its range. Processed in cache-sized output
/// blocks; taps must be sorted by lag for good locality but any order is
/// correct.
void accumulate_fir(std::span<const double> x, std::span<const Tap> taps, std::span<double> y);

}  // namespace usonic
