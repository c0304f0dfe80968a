#include "usonic/beamform/beamform.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "usonic/common/error.hpp"

namespace usonic::beamform {

namespace {

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

Vec3 rotate(const std::array<double, 9>& r, Vec3 v) {
  return {r[0] * v.x + r[1] * v.y + r[2] * v.z, r[3] * v.x + r[4] * v.y + r[5] * v.z,
          r[6] * v.x + r[7] * v.y + r[8] * v.z};
}

Vec3 rotate_transposed(const std::array<double, 9>& r, Vec3 v) {
  return {r[0] * v.x + r[3] * v.y + r[6] * v.z, r[1] * v.x + r[4] * v.y + r[7] * v.z,
          r[2] * v.x + r[5] * v.y + r[8] * v.z};
}

// Focal lengths in pixels so the frame edges sit at +-fov/2.
double focal(int extent_px, double fov_deg) { return 0.5 * extent_px / std::tan(deg2rad(fov_deg) / 2.0); }

}  // namespace

SteeringDirection SteeringDirection::toward(Vec3 v) {
  const double n = norm(v);
  if (!(n > 0.0) || !std::isfinite(n)) throw std::invalid_argument("steering vector must be finite and nonzero");
  return {(1.0 / n) * v};
}

void CameraModel::validate() const {
  if (width_px <= 0 || height_px <= 0) throw std::invalid_argument("camera dimensions must be positive");
  if (!(hfov_deg > 0.0 && hfov_deg < 180.0) || !(vfov_deg > 0.0 && vfov_deg < 180.0)) {
    throw std::invalid_argument("field of view must lie in (0, 180) degrees");
  }
  for (double v : mounting) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite mounting rotation");
  }
}

SteeringDirection pixel_to_steering(double px, double py, const CameraModel& cam) {
  cam.validate();
  if (!(px >= 0.0 && px < cam.width_px) || !(py >= 0.0 && py < cam.height_px)) {
    throw std::out_of_range("pixel (" + std::to_string(px) + ", " + std::to_string(py) +
                            ") outside the camera frame");
  }
  const Vec3 ray{(px - 0.5 * cam.width_px) / focal(cam.width_px, cam.hfov_deg),
                 (py - 0.5 * cam.height_px) / focal(cam.height_px, cam.vfov_deg), 1.0};
  return SteeringDirection::toward(rotate(cam.mounting, ray));
}

std::array<double, 2> steering_to_pixel(const SteeringDirection& dir, const CameraModel& cam) {
  cam.validate();
  const Vec3 v = rotate_transposed(cam.mounting, dir.u);
  if (!(v.z > 0.0)) throw std::invalid_argument("direction is not in front of the camera");
  return {0.5 * cam.width_px + focal(cam.width_px, cam.hfov_deg) * v.x / v.z,
          0.5 * cam.height_px + focal(cam.height_px, cam.vfov_deg) * v.y / v.z};
}

std::vector<double> steering_delays(const scene::ArrayGeometry& geometry, const SteeringDirection& dir) {
  std::vector<double> tau;
  tau.reserve(geometry.positions.size());
  for (const Vec3& p : geometry.positions) tau.push_back(dot(p, dir.u) / geometry.speed_of_sound);
  return tau;
}

BeamWeights BeamWeights::uniform(int num_mics) {
  if (num_mics <= 0) throw std::invalid_argument("number of microphones must be positive");
  return {std::vector<double>(static_cast<std::size_t>(num_mics), 1.0 / num_mics)};
}

BeamAccumulator::BeamAccumulator(const scene::ArrayGeometry& geometry, const SteeringDirection& dir,
                                 const BeamWeights& weights, int sample_rate_hz, std::size_t num_samples)
    : num_samples_(num_samples) {
  if (weights.w.size() != geometry.positions.size()) {
    throw std::invalid_argument("beam weight count " + std::to_string(weights.w.size()) +
                                " does not match " + std::to_string(geometry.positions.size()) +
                                " channels");
  }
  const auto tau = steering_delays(geometry, dir);
  for (std::size_t m = 0; m < tau.size(); ++m) {
    if (!std::isfinite(weights.w[m])) throw std::invalid_argument("non-finite beam weight");
    const double shift = tau[m] * sample_rate_hz;
    if (std::abs(shift) > static_cast<double>(num_samples)) {
      throw std::invalid_argument("steering delay exceeds the clip length");
    }
    taps_.push_back(delay_taps(shift, weights.w[m]));
  }
}

void BeamAccumulator::add_channel(int mic, std::span<const double> x, std::span<double> out) const {
  if (x.size() != num_samples_ || out.size() != num_samples_) {
    throw std::invalid_argument("channel length does not match the beamformer");
  }
  accumulate_fir(x, taps(mic), out);
}

MonoSignal delay_and_sum(const scene::MultichannelRecording& rec, const SteeringDirection& dir,
                         const BeamWeights& weights) {
  if (rec.channels.size() != rec.geometry.positions.size()) {
    throw std::invalid_argument("recording channel count does not match its geometry");
  }
  const std::size_t n = rec.num_samples();
  BeamAccumulator acc(rec.geometry, dir, weights, rec.sample_rate_hz, n);
  MonoSignal out;
  out.sample_rate_hz = rec.sample_rate_hz;
  out.label = rec.label;
  out.samples.assign(n, 0.0);
  for (int m = 0; m < rec.num_channels(); ++m) acc.add_channel(m, rec.channels[static_cast<std::size_t>(m)], out.samples);
  return out;
}

std::vector<Detection> read_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open detections file " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    std::vector<Detection> out;
    for (const auto& d : j) out.push_back({d.at("px").get<double>(), d.at("py").get<double>(), d.at("class").get<std::string>()});
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed detections file " + path.string() + ": " + e.what());
  }
}

void write_detections(const std::filesystem::path& path, const std::vector<Detection>& dets) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& d : dets) j.push_back({{"px", d.px}, {"py", d.py}, {"class", d.class_name}});
  std::ofstream out(path);
  if (!out) throw DataError("cannot write detections file " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace usonic::beamform
