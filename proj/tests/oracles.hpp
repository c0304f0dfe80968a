#pragma once

// Independent reference implementations used only by the tests.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

namespace oracle {

/// Direct O(N^2)-free DFT of one bin: sum_n x[n] e^{-2 pi i k n / N}.
inline std::complex<double> dft_bin(const std::vector<double>& x, std::size_t k) {
  std::complex<double> acc = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double ph = -2.0 * std::numbers::pi * static_cast<double>(k) * static_cast<double>(t) / n;
    acc += x[t] * std::complex<double>(std::cos(ph), std::sin(ph));
  }
  return acc;
}

/// Goertzel power of bin k; O(N) per bin, used for band-energy fractions on
/// long clips.
inline double goertzel_power(const std::vector<double>& x, std::size_t k) {
  const double w = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(x.size());
  const double coeff = 2.0 * std::cos(w);
  double s1 = 0.0;
  double s2 = 0.0;
  for (double v : x) {
    const double s0 = v + coeff * s1 - s2;
    s2 = s1;
    s1 = s0;
  }
  return s1 * s1 + s2 * s2 - coeff * s1 * s2;
}

inline double mean(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double stddev(const std::vector<double>& x) {
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size()));
}

inline double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = mean(a);
  const double mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

/// Lag (b relative to a, in samples) maximising the cross-correlation over
/// [-max_lag, max_lag].
inline long xcorr_peak_lag(const std::vector<double>& a, const std::vector<double>& b, long max_lag) {
  long best = 0;
  double best_v = -1e300;
  const long n = static_cast<long>(a.size());
  for (long lag = -max_lag; lag <= max_lag; ++lag) {
    double acc = 0.0;
    for (long t = 0; t < n; ++t) {
      const long u = t + lag;
      if (u >= 0 && u < n) acc += a[static_cast<std::size_t>(t)] * b[static_cast<std::size_t>(u)];
    }
    if (acc > best_v) {
      best_v = acc;
      best = lag;
    }
  }
  return best;
}

inline double power(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s / static_cast<double>(x.size());
}

}  // namespace oracle
