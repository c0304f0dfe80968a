#include "usonic/common/fft.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>

#include <fftw3.h>

namespace usonic {

RealFft::RealFft(int n) : n_(n) {
  if (n < 1) throw std::invalid_argument("RealFft: size must be positive");
  real_ = fftw_alloc_real(static_cast<std::size_t>(n));
  auto* spec = fftw_alloc_complex(static_cast<std::size_t>(num_bins()));
  spectrum_ = spec;
  fwd_plan_ = fftw_plan_dft_r2c_1d(n, real_, spec, FFTW_ESTIMATE);
  inv_plan_ = fftw_plan_dft_c2r_1d(n, spec, real_, FFTW_ESTIMATE);
  if (!real_ || !spec || !fwd_plan_ || !inv_plan_) throw std::runtime_error("FFTW planning failed");
}

RealFft::~RealFft() {
  if (fwd_plan_) fftw_destroy_plan(static_cast<fftw_plan>(fwd_plan_));
  if (inv_plan_) fftw_destroy_plan(static_cast<fftw_plan>(inv_plan_));
  fftw_free(real_);
  fftw_free(spectrum_);
}

void RealFft::forward(std::span<const double> in, std::span<std::complex<double>> out) {
  if (in.size() != static_cast<std::size_t>(n_) || out.size() != static_cast<std::size_t>(num_bins())) {
    throw std::invalid_argument("RealFft::forward: size mismatch");
  }
  std::copy(in.begin(), in.end(), real_);
  fftw_execute(static_cast<fftw_plan>(fwd_plan_));
  std::memcpy(out.data(), spectrum_, sizeof(fftw_complex) * out.size());
}

void RealFft::inverse(std::span<const std::complex<double>> in, std::span<double> out) {
  if (in.size() != static_cast<std::size_t>(num_bins()) || out.size() != static_cast<std::size_t>(n_)) {
    throw std::invalid_argument("RealFft::inverse: size mismatch");
  }
  std::memcpy(spectrum_, in.data(), sizeof(fftw_complex) * in.size());
  fftw_execute(static_cast<fftw_plan>(inv_plan_));
  std::copy(real_, real_ + n_, out.begin());
}

}  // namespace usonic
