#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "usonic/common/types.hpp"

namespace usonic::features {

enum class WindowFn { Hamming, Hann, Rectangular };

struct StftParams {
  int n_fft = 512;
  int hop = 128;
  int sample_rate_hz = 96000;
  WindowFn window = WindowFn::Hamming;

  void validate() const;
};

/// Periodic analysis window of length n.
std::vector<double> make_window(WindowFn fn, int n);

/// Magnitude spectrogram stored bin-major: mag[b * num_frames + t].
struct Spectrogram {
  int num_bins = 0;
  int num_frames = 0;
  std::vector<float> mag;
  double bin_hz = 0.0;
  double frame_s = 0.0;
  int first_bin = 0;  ///< index of row 0 in the full n_fft/2 + 1 bin range
  double band_lo_hz = 0.0;
  double band_hi_hz = 0.0;
  double nyquist_hz = 0.0;

  float at(int bin, int frame) const {
    return mag[static_cast<std::size_t>(bin) * static_cast<std::size_t>(num_frames) + static_cast<std::size_t>(frame)];
  }
};

/// Number of complete frames: floor((N - n_fft) / hop) + 1.
int frame_count(std::size_t num_samples, const StftParams& params);

/// |X(n, k)| with an un-normalised DFT. Throws std::invalid_argument if the
/// signal is shorter than one frame or the sample rates disagree.
Spectrogram stft(const MonoSignal& signal, const StftParams& params);

/// Keeps bins whose centre frequency lies in [f_lo, f_hi].
Spectrogram bandpass_bins(const Spectrogram& spec, double f_lo_hz = 20000.0, double f_hi_hz = 48000.0);

/// Maps the whole spectrogram to [0, 1]. A constant spectrogram maps to zeros.
Spectrogram normalize_minmax(const Spectrogram& spec);

/// Element-wise x^gamma. Inputs must already lie in [0, 1].
Spectrogram gamma_correct(const Spectrogram& spec, double gamma);

/// Count of win-frame windows at stride hop: floor((T - win) / hop) + 1.
int window_count(int num_frames, int win_frames, int hop_frames);

/// Windows of num_bins x win_frames taken every hop_frames frames. Window i
/// starts at frame i * hop_frames; each window is stored bin-major.
struct WindowBatch {
  int count = 0;
  int rows = 0;        ///< frequency bins
  int win_frames = 0;
  int stride_frames = 0;
  std::vector<float> data;

  int origin_frame(int i) const { return i * stride_frames; }
  std::span<const float> window(int i) const {
    const std::size_t sz = static_cast<std::size_t>(rows) * static_cast<std::size_t>(win_frames);
    return {data.data() + static_cast<std::size_t>(i) * sz, sz};
  }
};

WindowBatch slide(const Spectrogram& spec, int win_frames = 24, int hop_frames = 8);

/// Copies window starting at `origin_frame` into `out` (rows * win_frames floats).
void extract_window(const Spectrogram& spec, int origin_frame, int win_frames, std::span<float> out);

/// The complete feature chain for one waveform.
struct FeatureParams {
  StftParams stft;
  double band_lo_hz = 20000.0;
  double band_hi_hz = 48000.0;
  double gamma = 1.5;
  int win_frames = 24;
  int hop_frames = 8;

  void validate() const;
};

/// stft -> band-pass -> per-clip min-max -> gamma. Windows are sliced from
/// the result, so gamma sees the whole clip's normalisation.
Spectrogram prepare(const MonoSignal& signal, const FeatureParams& params);

/// Flat binary container shared by spectrograms and window batches.
struct FeatureFile {
  enum class Kind : std::uint32_t { Spectrogram = 1, Windows = 2 };
  Kind kind = Kind::Spectrogram;
  std::uint32_t count = 1;  ///< matrices stored
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  double bin_hz = 0.0;
  double frame_s = 0.0;
  double band_lo_hz = 0.0;
  double band_hi_hz = 0.0;
  double gamma = 1.0;
  std::uint32_t stride_frames = 0;
  std::vector<float> data;
};

void write_feature_file(const std::filesystem::path& path, const FeatureFile& file);
/// Throws DataError on a bad magic, version or truncated payload.
FeatureFile read_feature_file(const std::filesystem::path& path);

FeatureFile to_file(const Spectrogram& spec, double gamma);
FeatureFile to_file(const WindowBatch& batch, const Spectrogram& source, double gamma);

}  // namespace usonic::features
