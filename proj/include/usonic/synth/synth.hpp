#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include <json.hpp>

#include "usonic/common/types.hpp"

namespace usonic::synth {

/// Parameters of one synthetic source clip.
///
/// leak_rate_scale stands for the three measured flow rates: 0.2 (200 cc/min),
/// 0.5 (500 cc/min) and 1.0 (1000 cc/min). It scales the leak amplitude by
/// 0.5 / 0.8 / 1.0 and its bandwidth by 0.8 / 0.9 / 1.0 (upper edge pulled
/// toward the lower one).
struct SourceSpec {
  ClassLabel label = ClassLabel::Background;
  std::uint64_t seed = 0;
  double amplitude = 1.0;
  double duration_s = 10.0;
  int sample_rate_hz = 96000;

  // gas leak
  double band_lo_hz = 20000.0;
  double band_hi_hz = 48000.0;
  double leak_rate_scale = 1.0;

  // partial discharge
  double mains_hz = 60.0;
  std::optional<int> pulses_per_cycle;  ///< unset selects the per-type default

  // background
  double tone_level = 0.1;  ///< amplitude of each machinery tone relative to `amplitude`
  int num_tones = 3;

  std::size_t num_samples() const;
};

/// Carrier range and decay of the damped discharge wavelet.
inline constexpr double kPulseCarrierLoHz = 25000.0;
inline constexpr double kPulseCarrierHiHz = 45000.0;
inline constexpr double kPulseDecayS = 0.2e-3;

/// Default pulses per mains cycle for a discharge type.
int default_pulses_per_cycle(ClassLabel label);

/// Band-limited Gaussian noise with a half-sine spectral envelope over
/// [band_lo, band_hi'] and a slow (0.5-2 Hz) amplitude modulation.
MonoSignal gen_gas_leak(const SourceSpec& spec);

/// Damped ultrasonic wavelets placed at mains-phase positions characteristic
/// of the discharge type. Phase 0 of the mains cycle is at t = 0.
MonoSignal gen_discharge(const SourceSpec& spec);

/// White Gaussian noise plus low-frequency (< 20 kHz) machinery tones.
MonoSignal gen_background(const SourceSpec& spec);

/// Dispatches on spec.label.
MonoSignal synthesize(const SourceSpec& spec);

/// Throws std::invalid_argument / std::out_of_range if `spec` violates its
/// invariants. Called by every generator.
void validate(const SourceSpec& spec);

nlohmann::json to_json(const SourceSpec& spec);
SourceSpec source_spec_from_json(const nlohmann::json& j);

/// Writes `<stem>.wav` (mono float32) and `<stem>.json` (label + spec).
void write_clip(const std::filesystem::path& stem, const MonoSignal& signal,
                const SourceSpec& spec);

}  // namespace usonic::synth
