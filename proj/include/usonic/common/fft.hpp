#pragma once

#include <complex>
#include <span>

namespace usonic {

/// Real-input DFT of fixed size backed by FFTW. Plans are created with
/// FFTW_ESTIMATE so the arithmetic (and therefore every result) is identical
/// from run to run. Not thread-safe.
class RealFft {
 public:
  explicit RealFft(int n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  int size() const { return n_; }
  int num_bins() const { return n_ / 2 + 1; }

  /// Un-normalised forward transform; `out` has num_bins() entries.
  void forward(std::span<const double> in, std::span<std::complex<double>> out);
  /// Un-normalised inverse (the result is n times the true inverse).
  void inverse(std::span<const std::complex<double>> in, std::span<double> out);

 private:
  int n_;
  double* real_ = nullptr;
  void* spectrum_ = nullptr;
  void* fwd_plan_ = nullptr;
  void* inv_plan_ = nullptr;
};

}  // namespace usonic
