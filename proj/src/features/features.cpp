#include "usonic/features/features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>

#include "usonic/common/error.hpp"
#include "usonic/common/fft.hpp"

namespace usonic::features {

namespace {

constexpr char kMagic[8] = {'U', 'S', 'F', 'E', 'A', 'T', '0', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("truncated feature file header");
  return v;
}

Spectrogram with_shape_of(const Spectrogram& spec) {
  Spectrogram out = spec;
  out.mag.clear();
  return out;
}

}  // namespace

void StftParams::validate() const {
  if (n_fft <= 0) throw std::invalid_argument("n_fft must be positive");
  if (hop <= 0 || hop > n_fft) throw std::invalid_argument("hop must lie in (0, n_fft]");
  if (sample_rate_hz <= 0) throw std::invalid_argument("sample rate must be positive");
}

std::vector<double> make_window(WindowFn fn, int n) {
  std::vector<double> w(static_cast<std::size_t>(n), 1.0);
  for (int i = 0; i < n; ++i) {
    const double c = std::cos(2.0 * std::numbers::pi * i / n);
    switch (fn) {
      case WindowFn::Hamming: w[static_cast<std::size_t>(i)] = 0.54 - 0.46 * c; break;
      case WindowFn::Hann: w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * c; break;
      case WindowFn::Rectangular: break;
    }
  }
  return w;
}

int frame_count(std::size_t num_samples, const StftParams& params) {
  if (num_samples < static_cast<std::size_t>(params.n_fft)) return 0;
  return static_cast<int>((num_samples - static_cast<std::size_t>(params.n_fft)) / static_cast<std::size_t>(params.hop)) + 1;
}

Spectrogram stft(const MonoSignal& signal, const StftParams& params) {
  params.validate();
  if (signal.sample_rate_hz != params.sample_rate_hz) {
    throw std::invalid_argument("signal sample rate " + std::to_string(signal.sample_rate_hz) +
                                " does not match STFT sample rate " + std::to_string(params.sample_rate_hz));
  }
  const int frames = frame_count(signal.samples.size(), params);
  if (frames == 0) throw std::invalid_argument("signal shorter than one STFT frame");

  Spectrogram spec;
  spec.num_bins = params.n_fft / 2 + 1;
  spec.num_frames = frames;
  spec.bin_hz = static_cast<double>(params.sample_rate_hz) / params.n_fft;
  spec.frame_s = static_cast<double>(params.hop) / params.sample_rate_hz;
  spec.first_bin = 0;
  spec.band_lo_hz = 0.0;
  spec.band_hi_hz = params.sample_rate_hz / 2.0;
  spec.nyquist_hz = spec.band_hi_hz;
  spec.mag.assign(static_cast<std::size_t>(spec.num_bins) * static_cast<std::size_t>(frames), 0.0f);

  const auto window = make_window(params.window, params.n_fft);
  RealFft fft(params.n_fft);
  std::vector<double> frame(static_cast<std::size_t>(params.n_fft));
  std::vector<std::complex<double>> bins(static_cast<std::size_t>(spec.num_bins));
  for (int t = 0; t < frames; ++t) {
    const double* x = signal.samples.data() + static_cast<std::size_t>(t) * static_cast<std::size_t>(params.hop);
    for (std::size_t i = 0; i < frame.size(); ++i) frame[i] = x[i] * window[i];
    fft.forward(frame, bins);
    for (int b = 0; b < spec.num_bins; ++b) {
      spec.mag[static_cast<std::size_t>(b) * static_cast<std::size_t>(frames) + static_cast<std::size_t>(t)] =
          static_cast<float>(std::abs(bins[static_cast<std::size_t>(b)]));
    }
  }
  return spec;
}

Spectrogram bandpass_bins(const Spectrogram& spec, double f_lo_hz, double f_hi_hz) {
  if (!(f_lo_hz < f_hi_hz)) throw std::invalid_argument("band requires f_lo < f_hi");
  if (f_hi_hz > spec.nyquist_hz) throw std::invalid_argument("band upper edge exceeds Nyquist");
  int lo = -1;
  int hi = -1;
  for (int b = 0; b < spec.num_bins; ++b) {
    const double f = (spec.first_bin + b) * spec.bin_hz;
    if (f >= f_lo_hz && f <= f_hi_hz) {
      if (lo < 0) lo = b;
      hi = b;
    }
  }
  if (lo < 0) throw std::invalid_argument("band-pass keeps no bins");
  Spectrogram out = with_shape_of(spec);
  out.num_bins = hi - lo + 1;
  out.first_bin = spec.first_bin + lo;
  out.band_lo_hz = f_lo_hz;
  out.band_hi_hz = f_hi_hz;
  const auto row = static_cast<std::size_t>(spec.num_frames);
  out.mag.assign(spec.mag.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(lo) * row),
                 spec.mag.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(hi + 1) * row));
  return out;
}

Spectrogram normalize_minmax(const Spectrogram& spec) {
  Spectrogram out = spec;
  if (spec.mag.empty()) return out;
  const auto [mn, mx] = std::minmax_element(spec.mag.begin(), spec.mag.end());
  const double lo = *mn;
  const double range = static_cast<double>(*mx) - lo;
  if (!(range > 0.0)) {
    std::fill(out.mag.begin(), out.mag.end(), 0.0f);
    return out;
  }
  for (float& v : out.mag) v = static_cast<float>(std::clamp((v - lo) / range, 0.0, 1.0));
  return out;
}

Spectrogram gamma_correct(const Spectrogram& spec, double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("gamma must be positive");
  Spectrogram out = spec;
  if (gamma == 1.0) return out;
  for (float& v : out.mag) {
    if (v < 0.0f || v > 1.0f) throw std::invalid_argument("gamma correction expects values in [0, 1]");
    v = static_cast<float>(std::pow(static_cast<double>(v), gamma));
  }
  return out;
}

int window_count(int num_frames, int win_frames, int hop_frames) {
  if (win_frames <= 0 || hop_frames <= 0) throw std::invalid_argument("window and hop must be positive");
  if (num_frames < win_frames) return 0;
  return (num_frames - win_frames) / hop_frames + 1;
}

void extract_window(const Spectrogram& spec, int origin_frame, int win_frames, std::span<float> out) {
  if (origin_frame < 0 || origin_frame + win_frames > spec.num_frames) {
    throw std::out_of_range("window exceeds the spectrogram");
  }
  if (out.size() != static_cast<std::size_t>(spec.num_bins) * static_cast<std::size_t>(win_frames)) {
    throw std::invalid_argument("window buffer has the wrong size");
  }
  for (int b = 0; b < spec.num_bins; ++b) {
    const float* src = spec.mag.data() + static_cast<std::size_t>(b) * static_cast<std::size_t>(spec.num_frames) +
                       static_cast<std::size_t>(origin_frame);
    std::copy(src, src + win_frames, out.data() + static_cast<std::size_t>(b) * static_cast<std::size_t>(win_frames));
  }
}

WindowBatch slide(const Spectrogram& spec, int win_frames, int hop_frames) {
  const int count = window_count(spec.num_frames, win_frames, hop_frames);
  if (count == 0) throw std::invalid_argument("spectrogram shorter than one window");
  WindowBatch batch;
  batch.count = count;
  batch.rows = spec.num_bins;
  batch.win_frames = win_frames;
  batch.stride_frames = hop_frames;
  const std::size_t sz = static_cast<std::size_t>(spec.num_bins) * static_cast<std::size_t>(win_frames);
  batch.data.resize(sz * static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    extract_window(spec, batch.origin_frame(i), win_frames,
                   std::span<float>(batch.data.data() + static_cast<std::size_t>(i) * sz, sz));
  }
  return batch;
}

void FeatureParams::validate() const {
  stft.validate();
  if (!(band_lo_hz < band_hi_hz)) throw std::invalid_argument("band requires f_lo < f_hi");
  if (band_hi_hz > stft.sample_rate_hz / 2.0) throw std::invalid_argument("band upper edge exceeds Nyquist");
  if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
  if (win_frames <= 0 || hop_frames <= 0) throw std::invalid_argument("window and hop must be positive");
}

Spectrogram prepare(const MonoSignal& signal, const FeatureParams& params) {
  params.validate();
  return gamma_correct(normalize_minmax(bandpass_bins(stft(signal, params.stft), params.band_lo_hz, params.band_hi_hz)),
                       params.gamma);
}

void write_feature_file(const std::filesystem::path& path, const FeatureFile& file) {
  const std::size_t expected = static_cast<std::size_t>(file.count) * file.rows * file.cols;
  if (file.data.size() != expected) throw std::invalid_argument("feature payload size does not match its header");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put(out, kVersion);
  put(out, static_cast<std::uint32_t>(file.kind));
  put(out, file.count);
  put(out, file.rows);
  put(out, file.cols);
  put(out, file.bin_hz);
  put(out, file.frame_s);
  put(out, file.band_lo_hz);
  put(out, file.band_hi_hz);
  put(out, file.gamma);
  put(out, file.stride_frames);
  out.write(reinterpret_cast<const char*>(file.data.data()), static_cast<std::streamsize>(file.data.size() * sizeof(float)));
  if (!out) throw DataError("failed writing " + path.string());
}

FeatureFile read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError(path.string() + " is not a feature file");
  }
  if (get<std::uint32_t>(in) != kVersion) throw DataError("unsupported feature file version in " + path.string());
  FeatureFile f;
  const auto kind = get<std::uint32_t>(in);
  if (kind != 1 && kind != 2) throw DataError("unknown feature kind in " + path.string());
  f.kind = static_cast<FeatureFile::Kind>(kind);
  f.count = get<std::uint32_t>(in);
  f.rows = get<std::uint32_t>(in);
  f.cols = get<std::uint32_t>(in);
  f.bin_hz = get<double>(in);
  f.frame_s = get<double>(in);
  f.band_lo_hz = get<double>(in);
  f.band_hi_hz = get<double>(in);
  f.gamma = get<double>(in);
  f.stride_frames = get<std::uint32_t>(in);
  f.data.resize(static_cast<std::size_t>(f.count) * f.rows * f.cols);
  if (!in.read(reinterpret_cast<char*>(f.data.data()), static_cast<std::streamsize>(f.data.size() * sizeof(float)))) {
    throw DataError("truncated feature payload in " + path.string());
  }
  return f;
}

FeatureFile to_file(const Spectrogram& spec, double gamma) {
  FeatureFile f;
  f.kind = FeatureFile::Kind::Spectrogram;
  f.count = 1;
  f.rows = static_cast<std::uint32_t>(spec.num_bins);
  f.cols = static_cast<std::uint32_t>(spec.num_frames);
  f.bin_hz = spec.bin_hz;
  f.frame_s = spec.frame_s;
  f.band_lo_hz = spec.band_lo_hz;
  f.band_hi_hz = spec.band_hi_hz;
  f.gamma = gamma;
  f.data = spec.mag;
  return f;
}

FeatureFile to_file(const WindowBatch& batch, const Spectrogram& source, double gamma) {
  FeatureFile f = to_file(source, gamma);
  f.kind = FeatureFile::Kind::Windows;
  f.count = static_cast<std::uint32_t>(batch.count);
  f.rows = static_cast<std::uint32_t>(batch.rows);
  f.cols = static_cast<std::uint32_t>(batch.win_frames);
  f.stride_frames = static_cast<std::uint32_t>(batch.stride_frames);
  f.data = batch.data;
  return f;
}

}  // namespace usonic::features
