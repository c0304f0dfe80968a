#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "oracles.hpp"
#include "usonic/common/error.hpp"
#include "usonic/common/rng.hpp"
#include "usonic/features/features.hpp"

using namespace usonic;
using namespace usonic::features;

namespace {

MonoSignal tone(double hz, std::size_t n, double amp = 1.0) {
  MonoSignal s;
  s.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.samples[i] = amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / 96000.0);
  return s;
}

MonoSignal gaussian(std::uint64_t seed, std::size_t n) {
  MonoSignal s;
  s.samples.resize(n);
  Engine rng = make_engine(seed);
  Normal nd;
  for (double& v : s.samples) v = nd(rng);
  return s;
}

Spectrogram blank(int bins, int frames) {
  Spectrogram s;
  s.num_bins = bins;
  s.num_frames = frames;
  s.mag.resize(static_cast<std::size_t>(bins) * static_cast<std::size_t>(frames));
  for (std::size_t i = 0; i < s.mag.size(); ++i) s.mag[i] = static_cast<float>(i);
  return s;
}

// Periodic Hamming, written out independently.
double hamming(int n, int len) { return 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / len); }

}  // namespace

TEST_CASE("frame arithmetic") {
  const StftParams p;
  CHECK(frame_count(960000, p) == 7497);
  CHECK(frame_count(512, p) == 1);
  CHECK(frame_count(511, p) == 0);
  CHECK_THROWS_AS(stft(tone(1000, 511), p), std::invalid_argument);
}

TEST_CASE("silence gives an all-zero spectrogram of the right shape") {
  MonoSignal z;
  z.samples.assign(4096, 0.0);
  const Spectrogram s = stft(z, {});
  CHECK(s.num_bins == 257);
  CHECK(s.num_frames == frame_count(4096, {}));
  CHECK(std::all_of(s.mag.begin(), s.mag.end(), [](float v) { return v == 0.0f; }));
}

TEST_CASE("a bin-centred tone peaks at its bin in every frame") {
  for (int k : {10, 107, 160, 250}) {
    const Spectrogram s = stft(tone(k * 96000.0 / 512.0, 8192), {});
    for (int t = 0; t < s.num_frames; ++t) {
      int best = 0;
      for (int b = 1; b < s.num_bins; ++b) {
        if (s.at(b, t) > s.at(best, t)) best = b;
      }
      REQUIRE(best == k);
    }
  }
}

TEST_CASE("stft columns match a direct windowed DFT") {
  const MonoSignal x = gaussian(4, 2048);
  const StftParams p;
  const Spectrogram s = stft(x, p);
  for (int t : {0, 5, s.num_frames - 1}) {
    std::vector<double> frame(512);
    for (int n = 0; n < 512; ++n) frame[n] = x.samples[static_cast<std::size_t>(t * 128 + n)] * hamming(n, 512);
    for (std::size_t k : {0u, 1u, 77u, 200u, 256u}) {
      REQUIRE(s.at(static_cast<int>(k), t) == doctest::Approx(std::abs(oracle::dft_bin(frame, k))).epsilon(1e-5));
    }
  }
}

TEST_CASE("Parseval holds per frame") {
  const MonoSignal x = gaussian(5, 4096);
  const Spectrogram s = stft(x, {});
  for (int t = 0; t < s.num_frames; ++t) {
    double energy = 0.0;
    for (int n = 0; n < 512; ++n) {
      const double v = x.samples[static_cast<std::size_t>(t * 128 + n)] * hamming(n, 512);
      energy += v * v;
    }
    // one-sided spectrum: interior bins count twice
    double spec = 0.0;
    for (int k = 0; k < 257; ++k) {
      const double m = s.at(k, t);
      spec += (k == 0 || k == 256 ? 1.0 : 2.0) * m * m;
    }
    REQUIRE(spec == doctest::Approx(512.0 * energy).epsilon(1e-6));
  }
}

TEST_CASE("default band keeps bins 107 to 256") {
  const Spectrogram full = stft(gaussian(6, 2048), {});
  const Spectrogram band = bandpass_bins(full);
  const int lo = static_cast<int>(std::ceil(20000.0 / 187.5));
  CHECK(lo == 107);
  CHECK(band.num_bins == 256 - lo + 1);
  CHECK(band.first_bin == lo);
  for (int b = 0; b < band.num_bins; ++b) {
    for (int t = 0; t < band.num_frames; ++t) REQUIRE(band.at(b, t) == full.at(b + lo, t));
  }
  const Spectrogram all = bandpass_bins(full, 0.0, 48000.0);
  CHECK(all.mag == full.mag);
  CHECK_THROWS_AS(bandpass_bins(full, 30000.0, 30000.0), std::invalid_argument);
  CHECK_THROWS_AS(bandpass_bins(full, 20000.0, 50000.0), std::invalid_argument);
  CHECK_THROWS_AS(bandpass_bins(full, 30010.0, 30100.0), std::invalid_argument);
}

TEST_CASE("machinery tones below the band vanish after band-pass") {
  // 5 kHz sits near bin 27; what reaches bin 107 is only window sidelobe
  // leakage, some 60 dB below the tone itself
  const Spectrogram full = stft(tone(5000.0, 4096), {});
  const Spectrogram band = bandpass_bins(full);
  CHECK(band.first_bin > 27);
  const float tone_peak = *std::max_element(full.mag.begin(), full.mag.end());
  const float band_peak = *std::max_element(band.mag.begin(), band.mag.end());
  CHECK(band_peak < 2e-3f * tone_peak);
}

TEST_CASE("min-max normalisation maps onto [0, 1]") {
  const Spectrogram n = normalize_minmax(stft(gaussian(7, 4096), {}));
  const auto [lo, hi] = std::minmax_element(n.mag.begin(), n.mag.end());
  CHECK(*lo == 0.0f);
  CHECK(*hi == 1.0f);
  Spectrogram flat = blank(3, 3);
  std::fill(flat.mag.begin(), flat.mag.end(), 2.0f);
  const Spectrogram fz = normalize_minmax(flat);
  CHECK(std::all_of(fz.mag.begin(), fz.mag.end(), [](float v) { return v == 0.0f; }));
}

TEST_CASE("gamma correction") {
  Spectrogram s = blank(1, 4);
  s.mag = {0.0f, 0.25f, 0.5f, 1.0f};
  CHECK(gamma_correct(s, 1.0).mag == s.mag);
  const auto sq = gamma_correct(s, 2.0).mag;
  CHECK(sq[1] == doctest::Approx(0.0625));
  CHECK(sq[3] == 1.0f);
  CHECK_THROWS_AS(gamma_correct(s, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(gamma_correct(s, -1.0), std::invalid_argument);
  s.mag[0] = 1.5f;
  CHECK_THROWS_AS(gamma_correct(s, 2.0), std::invalid_argument);
}

TEST_CASE("gamma above one attenuates and preserves order") {
  const Spectrogram n = normalize_minmax(bandpass_bins(stft(gaussian(8, 8192), {})));
  for (double g : {0.5, 1.5, 2.0, 3.0}) {
    const Spectrogram c = gamma_correct(n, g);
    for (std::size_t i = 0; i < n.mag.size(); ++i) {
      if (g >= 1.0) REQUIRE(c.mag[i] <= n.mag[i]);
      if (i > 0 && n.mag[i] < n.mag[i - 1]) REQUIRE(c.mag[i] <= c.mag[i - 1]);
      if (i > 0 && n.mag[i] > n.mag[i - 1]) REQUIRE(c.mag[i] >= c.mag[i - 1]);
    }
  }
}

TEST_CASE("window counts") {
  CHECK(window_count(40, 24, 8) == 3);
  CHECK(window_count(24, 24, 8) == 1);
  CHECK(window_count(7497, 24, 8) == (7497 - 24) / 8 + 1);
  CHECK(window_count(7497, 24, 8) == 935);
  CHECK_THROWS_AS(slide(blank(4, 23)), std::invalid_argument);
}

TEST_CASE("windows reproduce the source spectrogram element by element") {
  const Spectrogram s = blank(5, 40);
  const WindowBatch w = slide(s);
  REQUIRE(w.count == 3);
  for (int i = 0; i < w.count; ++i) {
    CHECK(w.origin_frame(i) == 8 * i);
    const auto win = w.window(i);
    for (int b = 0; b < 5; ++b) {
      for (int k = 0; k < 24; ++k) REQUIRE(win[static_cast<std::size_t>(b * 24 + k)] == s.at(b, k + 8 * i));
    }
  }
  std::vector<float> buf(5 * 24);
  extract_window(s, 16, 24, buf);
  CHECK(std::equal(buf.begin(), buf.end(), w.window(2).begin()));
  CHECK_THROWS_AS(extract_window(s, 17, 24, buf), std::out_of_range);
}

TEST_CASE("the full chain is deterministic and yields 935 windows on 10 s") {
  MonoSignal x = gaussian(9, 960000);
  const FeatureParams p;
  const Spectrogram a = prepare(x, p);
  CHECK(a.num_frames == 7497);
  CHECK(a.num_bins == 150);
  const WindowBatch wa = slide(a, p.win_frames, p.hop_frames);
  CHECK(wa.count == 935);
  CHECK(slide(prepare(x, p), p.win_frames, p.hop_frames).data == wa.data);
}

TEST_CASE("feature files round-trip") {
  const auto dir = std::filesystem::temp_directory_path() / "usonic_test_features";
  std::filesystem::create_directories(dir);
  const Spectrogram s = prepare(gaussian(10, 8192), {});
  write_feature_file(dir / "s.feat", to_file(s, 1.5));
  const FeatureFile f = read_feature_file(dir / "s.feat");
  CHECK(f.kind == FeatureFile::Kind::Spectrogram);
  CHECK(f.rows == 150);
  CHECK(static_cast<int>(f.cols) == s.num_frames);
  CHECK(f.gamma == 1.5);
  CHECK(f.band_lo_hz == s.band_lo_hz);
  CHECK(f.data == s.mag);

  const WindowBatch w = slide(s);
  write_feature_file(dir / "w.feat", to_file(w, s, 1.5));
  const FeatureFile g = read_feature_file(dir / "w.feat");
  CHECK(g.kind == FeatureFile::Kind::Windows);
  CHECK(static_cast<int>(g.count) == w.count);
  CHECK(g.stride_frames == 8);
  CHECK(g.data == w.data);

  std::filesystem::resize_file(dir / "w.feat", 100);
  CHECK_THROWS_AS(read_feature_file(dir / "w.feat"), DataError);
  CHECK_THROWS_AS(read_feature_file(dir / "none.feat"), DataError);
}
