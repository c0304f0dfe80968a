#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "usonic/common/fractional_delay.hpp"
#include "usonic/common/types.hpp"
#include "usonic/scene/scene.hpp"

namespace usonic::beamform {

/// Unit look direction in array coordinates.
struct SteeringDirection {
  Vec3 u{0.0, 0.0, 1.0};

  /// Normalises `v`; throws std::invalid_argument for a zero or non-finite vector.
  static SteeringDirection toward(Vec3 v);
};

/// Pinhole camera. Camera axes: x right, y down, z along the optical axis.
/// `mounting` (row-major 3x3) rotates camera coordinates into the array frame.
struct CameraModel {
  int width_px = 640;
  int height_px = 480;
  double hfov_deg = 60.0;
  double vfov_deg = 45.0;
  std::array<double, 9> mounting{1, 0, 0, 0, 1, 0, 0, 0, 1};

  void validate() const;
};

/// Direction of the ray through pixel (px, py). The image centre
/// (width/2, height/2) maps to the optical axis and the left edge px = 0 to
/// azimuth -hfov/2. Throws std::out_of_range for a pixel outside the frame.
SteeringDirection pixel_to_steering(double px, double py, const CameraModel& cam);

/// Inverse of pixel_to_steering (identity mounting assumed to be a rotation).
/// Throws std::invalid_argument for directions behind the camera.
std::array<double, 2> steering_to_pixel(const SteeringDirection& dir, const CameraModel& cam);

/// tau_m = p_m . u / c in seconds.
std::vector<double> steering_delays(const scene::ArrayGeometry& geometry, const SteeringDirection& dir);

struct BeamWeights {
  std::vector<double> w;

  static BeamWeights uniform(int num_mics);
};

/// y(t) = sum_m w_m x_m(t - tau_m), same length as the input, zero outside
/// the clip. Integer-sample delays are exact; others go through the 16-tap
/// fractional delay.
MonoSignal delay_and_sum(const scene::MultichannelRecording& rec, const SteeringDirection& dir,
                         const BeamWeights& weights);

/// Channel-at-a-time form of delay_and_sum for callers that never hold the
/// whole recording in memory.
class BeamAccumulator {
 public:
  BeamAccumulator(const scene::ArrayGeometry& geometry, const SteeringDirection& dir,
                  const BeamWeights& weights, int sample_rate_hz, std::size_t num_samples);

  /// out += w_m x_m(t - tau_m).
  void add_channel(int mic, std::span<const double> x, std::span<double> out) const;

  std::span<const Tap> taps(int mic) const { return taps_.at(static_cast<std::size_t>(mic)); }

 private:
  std::vector<std::vector<Tap>> taps_;
  std::size_t num_samples_;
};

/// Externally supplied object detection: pixel centre plus class name.
struct Detection {
  double px = 0.0;
  double py = 0.0;
  std::string class_name;
};

/// JSON list of {"px", "py", "class"} objects. Throws DataError on malformed input.
std::vector<Detection> read_detections(const std::filesystem::path& path);
void write_detections(const std::filesystem::path& path, const std::vector<Detection>& dets);

}  // namespace usonic::beamform
