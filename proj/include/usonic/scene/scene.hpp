#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "usonic/common/fractional_delay.hpp"
#include "usonic/common/types.hpp"

namespace usonic::scene {

/// Microphone positions in the array frame (metres, centred on the origin).
struct ArrayGeometry {
  std::string preset;
  std::vector<Vec3> positions;
  double speed_of_sound = 343.0;

  int size() const { return static_cast<int>(positions.size()); }
  /// Throws std::invalid_argument unless M >= 1, positions are finite, the
  /// centroid is at the origin (1e-9 m) and c > 0.
  void validate() const;
};

/// Presets: "fx112" (Fermat spiral in z = 0, max radius 0.10 m), "single"
/// (one microphone at the origin, M must be 1), "ula" (uniform line along x,
/// 4 mm pitch). Throws std::invalid_argument for M <= 0 or an unknown preset.
ArrayGeometry make_array(std::string_view preset, int num_mics);

/// Shoebox room. Room axes coincide with the array frame; x spans the width,
/// y the length, z the height.
struct RoomSpec {
  Vec3 dims;                 ///< width, length, height (m)
  double absorption = 0.3;   ///< in (0, 1]; 1 is anechoic
  int max_image_order = 2;
  Vec3 array_center;         ///< array origin in room coordinates

  void validate() const;
};

/// One mirror image of the source. Order 0 is the direct path.
struct ImageSource {
  Vec3 position;  ///< room coordinates
  int order = 0;
  double reflection_gain = 1.0;  ///< (1 - absorption)^order
};

/// Every image with reflection order <= room.max_image_order, direct path first.
std::vector<ImageSource> image_sources(const RoomSpec& room, Vec3 source_room_pos);

/// Near-field clamp for the 1/r spreading loss.
inline constexpr double kMinDistance = 0.05;

struct MultichannelRecording {
  std::vector<std::vector<double>> channels;  ///< M rows of N samples
  int sample_rate_hz = 96000;
  ArrayGeometry geometry;
  ClassLabel label = ClassLabel::Background;

  int num_channels() const { return static_cast<int>(channels.size()); }
  std::size_t num_samples() const { return channels.empty() ? 0 : channels.front().size(); }
  /// Mean squared amplitude over all channels and samples.
  double mean_power() const;
};

/// FIR taps that carry the source to microphone `mic`: one fractional delay
/// per image source, scaled by reflection gain / max(r, kMinDistance).
/// `source_pos` is in the array frame.
std::vector<Tap> propagation_taps(Vec3 source_pos, const ArrayGeometry& geometry, int mic,
                                  int sample_rate_hz, const std::optional<RoomSpec>& room);

/// Renders the source at every microphone. Free field without a room; with a
/// room, the sum over image sources up to room.max_image_order. Rejects a
/// source coincident with a microphone and positions outside the room.
MultichannelRecording propagate(const MonoSignal& source, Vec3 source_pos,
                                const ArrayGeometry& geometry,
                                const std::optional<RoomSpec>& room = std::nullopt);

enum class NoiseKind {
  White,  ///< flat Gaussian noise up to Nyquist
  Band,   ///< Gaussian noise confined to 20-48 kHz (the analysis band)
};

std::string_view to_string(NoiseKind kind);
NoiseKind parse_noise_kind(std::string_view name);

/// Noise for one channel, drawn from the (seed, channel) stream and scaled so
/// its mean power is exactly `power`.
std::vector<double> channel_noise(std::size_t num_samples, int channel, double power,
                                  NoiseKind kind, std::uint64_t seed, int sample_rate_hz);

/// Independent noise for every channel of `clean`, each channel scaled so
/// 10 log10(P_signal / P_noise) equals snr_db. Rejects an all-zero recording.
MultichannelRecording make_noise(const MultichannelRecording& clean, double snr_db, NoiseKind kind,
                                 std::uint64_t seed);

/// clean + make_noise(clean, ...).
MultichannelRecording add_noise_at_snr(const MultichannelRecording& rec, double snr_db,
                                       NoiseKind kind, std::uint64_t seed);

/// 10 log10(signal_power / noise_power). Both powers must be positive.
double measure_snr(double signal_power, double noise_power);

nlohmann::json to_json(const ArrayGeometry& g);
nlohmann::json to_json(const RoomSpec& room);
RoomSpec room_from_json(const nlohmann::json& j);

}  // namespace usonic::scene
