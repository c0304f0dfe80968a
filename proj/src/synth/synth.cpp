#include "usonic/synth/synth.hpp"

#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>

#include "usonic/common/error.hpp"
#include "usonic/common/fft.hpp"
#include "usonic/common/rng.hpp"
#include "usonic/common/wav.hpp"

namespace usonic::synth {

namespace {

// RNG stream tags, one per generator.
constexpr std::uint64_t kStreamGasLeak = 0x6761736c;
constexpr std::uint64_t kStreamDischarge = 0x64697363;
constexpr std::uint64_t kStreamBackground = 0x626b6764;

constexpr double kLeakBandFloorHz = 20000.0;
constexpr double kLeakBandCeilHz = 48000.0;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct LeakScaling {
  double amplitude;
  double bandwidth;
};

LeakScaling leak_scaling(double leak_rate_scale) {
  if (leak_rate_scale == 0.2) return {0.5, 0.8};
  if (leak_rate_scale == 0.5) return {0.8, 0.9};
  if (leak_rate_scale == 1.0) return {1.0, 1.0};
  throw std::invalid_argument("leak_rate_scale must be one of 0.2, 0.5, 1.0");
}

MonoSignal empty_signal(const SourceSpec& spec) {
  MonoSignal s;
  s.samples.assign(spec.num_samples(), 0.0);
  s.sample_rate_hz = spec.sample_rate_hz;
  s.label = spec.label;
  return s;
}

}  // namespace

std::size_t SourceSpec::num_samples() const {
  return static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
}

int default_pulses_per_cycle(ClassLabel label) {
  switch (label) {
    case ClassLabel::Corona: return 4;
    case ClassLabel::Surface: return 6;
    case ClassLabel::Floating: return 3;
    default: throw std::invalid_argument("not a discharge class");
  }
}

void validate(const SourceSpec& spec) {
  if (spec.sample_rate_hz <= 0) throw std::invalid_argument("sample_rate_hz must be positive");
  if (!(spec.duration_s > 0.0)) throw std::invalid_argument("duration_s must be positive");
  if (!(spec.amplitude >= 0.0) || !std::isfinite(spec.amplitude)) {
    throw std::invalid_argument("amplitude must be finite and non-negative");
  }
  const double nyquist = spec.sample_rate_hz / 2.0;
  switch (spec.label) {
    case ClassLabel::GasLeak: {
      leak_scaling(spec.leak_rate_scale);
      const double ceil_hz = std::min(kLeakBandCeilHz, nyquist);
      if (!(spec.band_lo_hz >= kLeakBandFloorHz && spec.band_lo_hz < spec.band_hi_hz &&
            spec.band_hi_hz <= ceil_hz)) {
        throw std::out_of_range("gas-leak band [" + std::to_string(spec.band_lo_hz) + ", " +
                                std::to_string(spec.band_hi_hz) + "] Hz must satisfy 20000 <= lo < hi <= " +
                                std::to_string(ceil_hz));
      }
      break;
    }
    case ClassLabel::Corona:
    case ClassLabel::Surface:
    case ClassLabel::Floating:
      if (!(spec.mains_hz > 0.0)) throw std::invalid_argument("mains_hz must be positive");
      if (spec.pulses_per_cycle && *spec.pulses_per_cycle < 1) {
        throw std::invalid_argument("pulses_per_cycle must be >= 1");
      }
      if (spec.sample_rate_hz < 2.0 * kPulseCarrierHiHz) {
        throw std::out_of_range("sample rate too low for the discharge carrier band");
      }
      break;
    case ClassLabel::Background:
      if (spec.num_tones < 0 || !(spec.tone_level >= 0.0)) {
        throw std::invalid_argument("tone settings must be non-negative");
      }
      break;
  }
}

MonoSignal gen_gas_leak(const SourceSpec& spec) {
  if (spec.label != ClassLabel::GasLeak) throw std::invalid_argument("gen_gas_leak: label must be GasLeak");
  validate(spec);
  MonoSignal out = empty_signal(spec);
  const std::size_t n = out.samples.size();
  if (n == 0) return out;

  Engine rng = make_engine(spec.seed, {kStreamGasLeak});
  Normal normal;
  std::vector<double> unit(n);
  for (double& v : unit) v = normal(rng);

  const LeakScaling scaling = leak_scaling(spec.leak_rate_scale);
  const double lo = spec.band_lo_hz;
  const double bw = (spec.band_hi_hz - lo) * scaling.bandwidth;

  RealFft fft(static_cast<int>(n));
  std::vector<std::complex<double>> bins(fft.num_bins());
  fft.forward(unit, bins);
  const double bin_hz = static_cast<double>(spec.sample_rate_hz) / static_cast<double>(n);
  for (std::size_t k = 0; k < bins.size(); ++k) {
    const double f = static_cast<double>(k) * bin_hz;
    const double rel = (f - lo) / bw;
    bins[k] *= (rel > 0.0 && rel < 1.0) ? std::sin(std::numbers::pi * rel) : 0.0;
  }
  fft.inverse(bins, unit);

  const double rms = std::sqrt(mean_power(unit));
  const double am_hz = uniform(rng, 0.5, 2.0);
  const double am_depth = uniform(rng, 0.2, 0.5);
  const double am_phase = uniform(rng, 0.0, kTwoPi);
  const double fs = spec.sample_rate_hz;
  for (std::size_t i = 0; i < n; ++i) {
    const double env = 1.0 + am_depth * std::sin(kTwoPi * am_hz * static_cast<double>(i) / fs + am_phase);
    const double u = rms > 0.0 ? scaling.amplitude * env * (unit[i] / rms) : 0.0;
    out.samples[i] = spec.amplitude * u;
  }
  return out;
}

MonoSignal gen_discharge(const SourceSpec& spec) {
  if (!is_discharge(spec.label)) throw std::invalid_argument("gen_discharge: label must be a discharge type");
  validate(spec);
  MonoSignal out = empty_signal(spec);
  const std::size_t n = out.samples.size();
  const double fs = spec.sample_rate_hz;
  const double period = 1.0 / spec.mains_hz;
  const int ppc = spec.pulses_per_cycle.value_or(default_pulses_per_cycle(spec.label));
  const auto pulse_len = static_cast<std::size_t>(std::ceil(12.0 * kPulseDecayS * fs));
  const auto num_cycles = static_cast<long>(std::ceil(spec.duration_s * spec.mains_hz));

  Engine rng = make_engine(spec.seed, {kStreamDischarge, static_cast<std::uint64_t>(spec.label)});
  Normal normal;
  const double floating_origin = uniform(rng, 0.0, 360.0);

  for (long cycle = 0; cycle < num_cycles; ++cycle) {
    for (int j = 0; j < ppc; ++j) {
      double phase_deg = 0.0;
      double strength = 1.0;
      bool fires = true;
      switch (spec.label) {
        case ClassLabel::Corona:
          // clustered around the negative voltage peak
          fires = uniform(rng, 0.0, 1.0) < 0.9;
          phase_deg = 270.0 + 10.0 * normal(rng);
          strength = uniform(rng, 0.5, 1.0);
          break;
        case ClassLabel::Surface:
          // broad spread over both half-cycles, alternating
          phase_deg = uniform(rng, 30.0, 150.0) + (j % 2 == 0 ? 0.0 : 180.0);
          strength = uniform(rng, 0.3, 1.0);
          break;
        default:
          // floating: equally spaced phase positions, low jitter
          phase_deg = floating_origin + j * 360.0 / ppc + 2.0 * normal(rng);
          strength = uniform(rng, 0.9, 1.0);
          break;
      }
      const double carrier = uniform(rng, kPulseCarrierLoHz, kPulseCarrierHiHz);
      if (!fires) continue;
      const double onset = (static_cast<double>(cycle) + phase_deg / 360.0) * period;
      if (onset < 0.0 || onset >= spec.duration_s) continue;
      const auto first = static_cast<std::size_t>(std::ceil(onset * fs));
      const std::size_t last = std::min(n, first + pulse_len);
      for (std::size_t i = first; i < last; ++i) {
        const double dt = static_cast<double>(i) / fs - onset;
        out.samples[i] += strength * std::exp(-dt / kPulseDecayS) * std::sin(kTwoPi * carrier * dt);
      }
    }
  }
  for (double& v : out.samples) v = spec.amplitude * v;
  return out;
}

MonoSignal gen_background(const SourceSpec& spec) {
  if (spec.label != ClassLabel::Background) {
    throw std::invalid_argument("gen_background: label must be Background");
  }
  validate(spec);
  MonoSignal out = empty_signal(spec);
  const double fs = spec.sample_rate_hz;

  Engine rng = make_engine(spec.seed, {kStreamBackground});
  Normal normal;
  struct Tone {
    double hz, phase;
  };
  std::vector<Tone> tones;
  for (int k = 0; k < spec.num_tones; ++k) {
    tones.push_back({uniform(rng, 50.0, std::min(15000.0, 0.3 * fs)), uniform(rng, 0.0, kTwoPi)});
  }
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    double u = normal(rng);
    const double t = static_cast<double>(i) / fs;
    for (const Tone& tone : tones) u += spec.tone_level * std::sin(kTwoPi * tone.hz * t + tone.phase);
    out.samples[i] = spec.amplitude * u;
  }
  return out;
}

MonoSignal synthesize(const SourceSpec& spec) {
  switch (spec.label) {
    case ClassLabel::GasLeak: return gen_gas_leak(spec);
    case ClassLabel::Background: return gen_background(spec);
    default: return gen_discharge(spec);
  }
}

nlohmann::json to_json(const SourceSpec& spec) {
  nlohmann::json j = {
      {"label", std::string(to_string(spec.label))},
      {"seed", spec.seed},
      {"amplitude", spec.amplitude},
      {"duration_s", spec.duration_s},
      {"sample_rate_hz", spec.sample_rate_hz},
      {"band_lo_hz", spec.band_lo_hz},
      {"band_hi_hz", spec.band_hi_hz},
      {"leak_rate_scale", spec.leak_rate_scale},
      {"mains_hz", spec.mains_hz},
      {"tone_level", spec.tone_level},
      {"num_tones", spec.num_tones},
  };
  if (spec.pulses_per_cycle) j["pulses_per_cycle"] = *spec.pulses_per_cycle;
  return j;
}

SourceSpec source_spec_from_json(const nlohmann::json& j) {
  SourceSpec s;
  s.label = parse_label(j.at("label").get<std::string>());
  s.seed = j.value("seed", s.seed);
  s.amplitude = j.value("amplitude", s.amplitude);
  s.duration_s = j.value("duration_s", s.duration_s);
  s.sample_rate_hz = j.value("sample_rate_hz", s.sample_rate_hz);
  s.band_lo_hz = j.value("band_lo_hz", s.band_lo_hz);
  s.band_hi_hz = j.value("band_hi_hz", s.band_hi_hz);
  s.leak_rate_scale = j.value("leak_rate_scale", s.leak_rate_scale);
  s.mains_hz = j.value("mains_hz", s.mains_hz);
  s.tone_level = j.value("tone_level", s.tone_level);
  s.num_tones = j.value("num_tones", s.num_tones);
  if (j.contains("pulses_per_cycle")) s.pulses_per_cycle = j.at("pulses_per_cycle").get<int>();
  return s;
}

void write_clip(const std::filesystem::path& stem, const MonoSignal& signal, const SourceSpec& spec) {
  WavData wav;
  wav.sample_rate_hz = signal.sample_rate_hz;
  wav.channels.emplace_back(signal.samples.begin(), signal.samples.end());
  std::filesystem::path wav_path = stem;
  wav_path += ".wav";
  write_wav_f32(wav_path, wav);

  nlohmann::json meta = {{"label", std::string(to_string(signal.label))},
                         {"sample_rate_hz", signal.sample_rate_hz},
                         {"num_samples", signal.samples.size()},
                         {"source", to_json(spec)}};
  std::filesystem::path meta_path = stem;
  meta_path += ".json";
  std::ofstream out(meta_path);
  if (!out) throw DataError("cannot write '" + meta_path.string() + "'");
  out << meta.dump(2) << '\n';
}

}  // namespace usonic::synth
