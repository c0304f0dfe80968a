#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "oracles.hpp"
#include "usonic/common/wav.hpp"
#include "usonic/synth/synth.hpp"

using namespace usonic;
using namespace usonic::synth;

namespace {

SourceSpec spec_of(ClassLabel label, std::uint64_t seed, double duration = 10.0) {
  SourceSpec s;
  s.label = label;
  s.seed = seed;
  s.duration_s = duration;
  return s;
}

// Fraction of the clip's energy whose DFT bins lie in [lo, hi] Hz: Goertzel
// per in-band bin against the time-domain total (Parseval).
double band_energy_fraction(const std::vector<double>& x, double fs, double lo, double hi) {
  const double n = static_cast<double>(x.size());
  double total = 0.0;
  for (double v : x) total += v * v;
  double band = 0.0;
  const auto k0 = static_cast<std::size_t>(std::ceil(lo * n / fs));
  const auto k1 = static_cast<std::size_t>(std::floor(hi * n / fs));
  for (std::size_t k = k0; k <= k1; ++k) {
    // bins other than DC and Nyquist appear twice in the two-sided sum
    const double w = (k == 0 || 2 * k == x.size()) ? 1.0 : 2.0;
    band += w * oracle::goertzel_power(x, k);
  }
  return band / (n * total);
}

// Onset times: first sample whose magnitude exceeds `thresh` after at least
// `gap` seconds below it.
std::vector<double> onsets(const std::vector<double>& x, double fs, double thresh, double gap) {
  std::vector<double> out;
  double last_active = -1e9;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::abs(x[i]) > thresh) {
      const double t = static_cast<double>(i) / fs;
      if (t - last_active > gap) out.push_back(t);
      last_active = t;
    }
  }
  return out;
}

double phase_deg(double t, double mains_hz) {
  const double cycles = t * mains_hz;
  return 360.0 * (cycles - std::floor(cycles));
}

double circ_dist(double a, double b) {
  const double d = std::fmod(std::abs(a - b), 360.0);
  return std::min(d, 360.0 - d);
}

}  // namespace

TEST_CASE("gas leak clip has the configured length and label") {
  SourceSpec s = spec_of(ClassLabel::GasLeak, 7);
  s.band_lo_hz = 20000.0;
  s.band_hi_hz = 48000.0;
  const MonoSignal x = gen_gas_leak(s);
  CHECK(x.samples.size() == 960000);
  CHECK(x.label == ClassLabel::GasLeak);
  CHECK(x.sample_rate_hz == 96000);
}

TEST_CASE("every generator is deterministic per seed") {
  for (ClassLabel c : kAllClasses) {
    const SourceSpec s = spec_of(c, 42, 0.5);
    CHECK(synthesize(s).samples == synthesize(s).samples);
    CHECK(synthesize(s).samples != synthesize(spec_of(c, 43, 0.5)).samples);
  }
}

TEST_CASE("gas leak energy stays inside its band") {
  SourceSpec s = spec_of(ClassLabel::GasLeak, 7, 1.0);
  s.band_lo_hz = 25000.0;
  s.band_hi_hz = 30000.0;
  const MonoSignal x = gen_gas_leak(s);
  CHECK(band_energy_fraction(x.samples, 96000.0, 25000.0, 30000.0) >= 0.9);
}

TEST_CASE("lower leak rates narrow the band and lower the level") {
  SourceSpec s = spec_of(ClassLabel::GasLeak, 9, 1.0);
  s.band_lo_hz = 20000.0;
  s.band_hi_hz = 40000.0;
  s.leak_rate_scale = 0.2;
  const MonoSignal x = gen_gas_leak(s);
  // upper edge pulled to 20 + 0.8 * 20 = 36 kHz
  CHECK(band_energy_fraction(x.samples, 96000.0, 20000.0, 36000.0) >= 0.99);
  s.leak_rate_scale = 1.0;
  CHECK(oracle::power(x.samples) < oracle::power(gen_gas_leak(s).samples));
  s.leak_rate_scale = 0.3;
  CHECK_THROWS_AS(gen_gas_leak(s), std::invalid_argument);
}

TEST_CASE("gas leak band limits are validated") {
  SourceSpec s = spec_of(ClassLabel::GasLeak, 1, 0.1);
  s.band_lo_hz = 15000.0;
  CHECK_THROWS_AS(gen_gas_leak(s), std::out_of_range);
  s.band_lo_hz = 30000.0;
  s.band_hi_hz = 25000.0;
  CHECK_THROWS_AS(gen_gas_leak(s), std::out_of_range);
  s.band_lo_hz = 20000.0;
  s.band_hi_hz = 49000.0;
  CHECK_THROWS_AS(gen_gas_leak(s), std::out_of_range);
}

TEST_CASE("corona pulses cluster near the negative voltage peak") {
  const MonoSignal x = gen_discharge(spec_of(ClassLabel::Corona, 5));
  const auto on = onsets(x.samples, 96000.0, 0.05, 1.0e-3);
  REQUIRE(on.size() > 300);
  int near = 0;
  for (double t : on) near += circ_dist(phase_deg(t, 60.0), 270.0) <= 30.0;
  CHECK(static_cast<double>(near) / static_cast<double>(on.size()) >= 0.8);
}

TEST_CASE("surface pulses occupy both half-cycles") {
  const MonoSignal x = gen_discharge(spec_of(ClassLabel::Surface, 5));
  const auto on = onsets(x.samples, 96000.0, 0.05, 1.0e-3);
  REQUIRE(on.size() > 300);
  int first = 0;
  for (double t : on) first += phase_deg(t, 60.0) < 180.0;
  const double frac = static_cast<double>(first) / static_cast<double>(on.size());
  CHECK(frac >= 0.3);
  CHECK(1.0 - frac >= 0.3);
}

TEST_CASE("floating pulses sit at regular phase positions") {
  const SourceSpec s = spec_of(ClassLabel::Floating, 5);
  const MonoSignal x = gen_discharge(s);
  const int ppc = default_pulses_per_cycle(ClassLabel::Floating);
  const double spacing = 360.0 / ppc;
  const auto on = onsets(x.samples, 96000.0, 0.05, 1.0e-3);
  REQUIRE(on.size() > 300);
  // fold phases onto one spacing period and measure their circular spread
  double c = 0.0, sn = 0.0;
  for (double t : on) {
    const double a = 2.0 * std::numbers::pi * std::fmod(phase_deg(t, 60.0), spacing) / spacing;
    c += std::cos(a);
    sn += std::sin(a);
  }
  const double r = std::hypot(c, sn) / static_cast<double>(on.size());
  const double spread_deg = std::sqrt(-2.0 * std::log(r)) * spacing / (2.0 * std::numbers::pi);
  CHECK(spread_deg < 10.0);
}

TEST_CASE("discharge energy lies in the ultrasonic band") {
  for (ClassLabel c : {ClassLabel::Corona, ClassLabel::Surface, ClassLabel::Floating}) {
    const MonoSignal x = gen_discharge(spec_of(c, 2, 1.0));
    CHECK(band_energy_fraction(x.samples, 96000.0, 20000.0, 48000.0) >= 0.9);
  }
}

TEST_CASE("discharge generator rejects non-discharge labels") {
  CHECK_THROWS_AS(gen_discharge(spec_of(ClassLabel::GasLeak, 1, 0.1)), std::invalid_argument);
  CHECK_THROWS_AS(gen_gas_leak(spec_of(ClassLabel::Corona, 1, 0.1)), std::invalid_argument);
  CHECK_THROWS_AS(gen_background(spec_of(ClassLabel::Corona, 1, 0.1)), std::invalid_argument);
}

TEST_CASE("zero amplitude gives silence of the right length") {
  for (ClassLabel c : kAllClasses) {
    SourceSpec s = spec_of(c, 4, 0.25);
    s.amplitude = 0.0;
    const MonoSignal x = synthesize(s);
    CHECK(x.samples.size() == 24000);
    CHECK(std::all_of(x.samples.begin(), x.samples.end(), [](double v) { return v == 0.0; }));
  }
}

TEST_CASE("amplitude scales every sample") {
  for (ClassLabel c : kAllClasses) {
    SourceSpec s = spec_of(c, 8, 0.25);
    const MonoSignal a = synthesize(s);
    s.amplitude = 2.0;  // a power of two keeps the product exact
    const MonoSignal b = synthesize(s);
    for (std::size_t i = 0; i < a.samples.size(); ++i) REQUIRE(b.samples[i] == 2.0 * a.samples[i]);
  }
}

TEST_CASE("background noise has the requested level and no DC") {
  SourceSpec s = spec_of(ClassLabel::Background, 3);
  const MonoSignal x = gen_background(s);
  const double sd = oracle::stddev(x.samples);
  CHECK(sd >= 0.97);
  CHECK(sd <= 1.03);
  CHECK(std::abs(oracle::mean(x.samples)) < 3.0 * sd / std::sqrt(static_cast<double>(x.samples.size())));
  const MonoSignal y = gen_background(spec_of(ClassLabel::Background, 4));
  CHECK(std::abs(oracle::correlation(x.samples, y.samples)) < 0.01);
}

TEST_CASE("spec json round-trips") {
  SourceSpec s = spec_of(ClassLabel::Surface, 99, 2.5);
  s.pulses_per_cycle = 8;
  s.mains_hz = 50.0;
  const SourceSpec r = source_spec_from_json(to_json(s));
  CHECK(to_json(r) == to_json(s));
  CHECK(r.pulses_per_cycle == 8);
}

TEST_CASE("clips are written as wav plus a sidecar with the same stem") {
  const auto dir = std::filesystem::temp_directory_path() / "usonic_test_synth";
  std::filesystem::create_directories(dir);
  const SourceSpec s = spec_of(ClassLabel::GasLeak, 12, 0.05);
  const MonoSignal x = synthesize(s);
  write_clip(dir / "leak", x, s);
  const WavData w = read_wav(dir / "leak.wav");
  REQUIRE(w.channels.size() == 1);
  CHECK(w.channels[0].size() == x.samples.size());
  CHECK(w.channels[0][10] == static_cast<float>(x.samples[10]));
  std::ifstream in(dir / "leak.json");
  const auto meta = nlohmann::json::parse(in);
  CHECK(meta.at("label") == "GasLeak");
  CHECK(source_spec_from_json(meta.at("source")).seed == 12);
}
