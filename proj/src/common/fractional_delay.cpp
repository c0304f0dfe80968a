#include "usonic/common/fractional_delay.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace usonic {

namespace {

constexpr double kHalfWidth = kDelayTaps / 2;

double windowed_sinc(double u) {
  if (u == 0.0) return 1.0;
  const double pu = std::numbers::pi * u;
  const double hann = 0.5 * (1.0 + std::cos(std::numbers::pi * u / kHalfWidth));
  return std::sin(pu) / pu * hann;
}

}  // namespace

std::vector<Tap> delay_taps(double delay_samples, double gain) {
  const double whole = std::floor(delay_samples);
  const double frac = delay_samples - whole;
  const auto n = static_cast<std::ptrdiff_t>(whole);
  if (frac == 0.0) return {Tap{n, gain}};

  std::vector<Tap> taps(kDelayTaps);
  double sum = 0.0;
  for (int j = 0; j < kDelayTaps; ++j) {
    const std::ptrdiff_t lag = n - (kDelayTaps / 2 - 1) + j;
    const double w = windowed_sinc(static_cast<double>(lag) - delay_samples);
    taps[j] = Tap{lag, w};
    sum += w;
  }
  for (auto& t : taps) t.weight = gain * (t.weight / sum);
  return taps;
}

void TapSet::add(double delay_samples, double gain) {
  for (const Tap& t : delay_taps(delay_samples, gain)) taps_.push_back(t);
}

std::vector<Tap> TapSet::finalize() const {
  std::vector<Tap> sorted = taps_;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Tap& a, const Tap& b) { return a.lag < b.lag; });
  std::vector<Tap> merged;
  merged.reserve(sorted.size());
  for (const Tap& t : sorted) {
    if (!merged.empty() && merged.back().lag == t.lag) {
      merged.back().weight += t.weight;
    } else {
      merged.push_back(t);
    }
  }
  std::erase_if(merged, [](const Tap& t) { return t.weight == 0.0; });
  return merged;
}

void accumulate_fir(std::span<const double> x, std::span<const Tap> taps, std::span<double> y) {
  constexpr std::ptrdiff_t kBlock = 4096;
  const auto nx = static_cast<std::ptrdiff_t>(x.size());
  const auto ny = static_cast<std::ptrdiff_t>(y.size());
  const double* xp = x.data();
  double* yp = y.data();
  for (std::ptrdiff_t t0 = 0; t0 < ny; t0 += kBlock) {
    const std::ptrdiff_t t1 = std::min(ny, t0 + kBlock);
    for (const Tap& tap : taps) {
      // valid t satisfy 0 <= t - lag < nx
      const std::ptrdiff_t lo = std::max(t0, tap.lag);
      const std::ptrdiff_t hi = std::min(t1, nx + tap.lag);
      if (lo >= hi) continue;
      const double w = tap.weight;
      const double* xs = xp + (lo - tap.lag);
      double* ys = yp + lo;
      const std::ptrdiff_t len = hi - lo;
      for (std::ptrdiff_t i = 0; i < len; ++i) ys[i] += w * xs[i];
    }
  }
}

}  // namespace usonic
