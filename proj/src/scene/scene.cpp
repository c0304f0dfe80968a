#include "usonic/scene/scene.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include "usonic/common/fft.hpp"
#include "usonic/common/rng.hpp"

namespace usonic::scene {

namespace {

constexpr std::uint64_t kStreamChannelNoise = 0x6e6f6973;

bool finite(Vec3 v) { return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z); }

bool strictly_inside(Vec3 p, Vec3 dims) {
  return p.x > 0.0 && p.x < dims.x && p.y > 0.0 && p.y < dims.y && p.z > 0.0 && p.z < dims.z;
}

void center_on_origin(std::vector<Vec3>& pts) {
  Vec3 c;
  for (const Vec3& p : pts) c = c + p;
  c = (1.0 / static_cast<double>(pts.size())) * c;
  for (Vec3& p : pts) p = p - c;
}

// Image coordinates along one axis: (1 - 2q) s + 2 n L with |2n - q| reflections.
struct AxisImage {
  double coord;
  int order;
};

std::vector<AxisImage> axis_images(double s, double length, int max_order) {
  std::vector<AxisImage> out;
  const int reach = max_order / 2 + 1;
  for (int n = -reach; n <= reach; ++n) {
    for (int q = 0; q <= 1; ++q) {
      const int order = std::abs(2 * n - q);
      if (order > max_order) continue;
      out.push_back({(1 - 2 * q) * s + 2.0 * n * length, order});
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const AxisImage& a, const AxisImage& b) { return a.order < b.order; });
  return out;
}

}  // namespace

void ArrayGeometry::validate() const {
  if (positions.empty()) throw std::invalid_argument("array geometry needs at least one microphone");
  if (!(speed_of_sound > 0.0)) throw std::invalid_argument("speed of sound must be positive");
  Vec3 c;
  for (const Vec3& p : positions) {
    if (!finite(p)) throw std::invalid_argument("non-finite microphone position");
    c = c + p;
  }
  c = (1.0 / static_cast<double>(positions.size())) * c;
  if (norm(c) > 1e-9) throw std::invalid_argument("array centroid must be at the origin");
}

ArrayGeometry make_array(std::string_view preset, int num_mics) {
  if (num_mics <= 0) throw std::invalid_argument("number of microphones must be positive");
  ArrayGeometry g;
  g.preset = std::string(preset);
  if (preset == "single") {
    if (num_mics != 1) throw std::invalid_argument("preset 'single' has exactly one microphone");
    g.positions = {Vec3{}};
  } else if (preset == "fx112") {
    constexpr double kRadius = 0.10;
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int k = 0; k < num_mics; ++k) {
      const double r = kRadius * std::sqrt((k + 0.5) / num_mics);
      const double th = k * golden;
      g.positions.push_back({r * std::cos(th), r * std::sin(th), 0.0});
    }
    center_on_origin(g.positions);
    double rmax = 0.0;
    for (const Vec3& p : g.positions) rmax = std::max(rmax, norm(p));
    if (rmax > 0.0) {
      for (Vec3& p : g.positions) p = (kRadius / rmax) * p;
    }
  } else if (preset == "ula") {
    constexpr double kPitch = 0.004;
    for (int k = 0; k < num_mics; ++k) g.positions.push_back({k * kPitch, 0.0, 0.0});
    center_on_origin(g.positions);
  } else {
    throw std::invalid_argument("unknown array preset '" + std::string(preset) + "'");
  }
  return g;
}

void RoomSpec::validate() const {
  if (!(dims.x > 0.0 && dims.y > 0.0 && dims.z > 0.0)) throw std::invalid_argument("room dimensions must be positive");
  if (!(absorption > 0.0 && absorption <= 1.0)) throw std::invalid_argument("absorption must lie in (0, 1]");
  if (max_image_order < 0) throw std::invalid_argument("max_image_order must be >= 0");
  if (!strictly_inside(array_center, dims)) throw std::invalid_argument("array centre lies outside the room");
}

std::vector<ImageSource> image_sources(const RoomSpec& room, Vec3 source_room_pos) {
  room.validate();
  if (!strictly_inside(source_room_pos, room.dims)) throw std::invalid_argument("source lies outside the room");
  const int max_order = room.max_image_order;
  const auto xs = axis_images(source_room_pos.x, room.dims.x, max_order);
  const auto ys = axis_images(source_room_pos.y, room.dims.y, max_order);
  const auto zs = axis_images(source_room_pos.z, room.dims.z, max_order);
  std::vector<ImageSource> out;
  for (const auto& ix : xs) {
    for (const auto& iy : ys) {
      for (const auto& iz : zs) {
        const int order = ix.order + iy.order + iz.order;
        if (order > max_order) continue;
        out.push_back({{ix.coord, iy.coord, iz.coord}, order, std::pow(1.0 - room.absorption, order)});
      }
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ImageSource& a, const ImageSource& b) { return a.order < b.order; });
  return out;
}

double MultichannelRecording::mean_power() const {
  double acc = 0.0;
  std::size_t count = 0;
  for (const auto& ch : channels) {
    for (double v : ch) acc += v * v;
    count += ch.size();
  }
  return count ? acc / static_cast<double>(count) : 0.0;
}

std::vector<Tap> propagation_taps(Vec3 source_pos, const ArrayGeometry& geometry, int mic,
                                  int sample_rate_hz, const std::optional<RoomSpec>& room) {
  const Vec3 mic_pos = geometry.positions.at(static_cast<std::size_t>(mic));
  const double c = geometry.speed_of_sound;
  const double fs = sample_rate_hz;
  TapSet taps;
  // The direct path is always computed in the array frame so that a room with
  // absorption 1 reproduces the free-field rendering exactly.
  const double direct = norm(source_pos - mic_pos);
  if (direct == 0.0) throw std::invalid_argument("source coincides with microphone " + std::to_string(mic));
  taps.add(direct / c * fs, 1.0 / std::max(direct, kMinDistance));
  if (room) {
    const Vec3 mic_room = room->array_center + mic_pos;
    for (const ImageSource& img : image_sources(*room, room->array_center + source_pos)) {
      if (img.order == 0 || img.reflection_gain == 0.0) continue;
      const double r = norm(img.position - mic_room);
      taps.add(r / c * fs, img.reflection_gain / std::max(r, kMinDistance));
    }
  }
  return taps.finalize();
}

MultichannelRecording propagate(const MonoSignal& source, Vec3 source_pos,
                                const ArrayGeometry& geometry, const std::optional<RoomSpec>& room) {
  geometry.validate();
  if (!finite(source_pos)) throw std::invalid_argument("non-finite source position");
  if (room) {
    room->validate();
    if (!strictly_inside(room->array_center + source_pos, room->dims)) {
      throw std::invalid_argument("source lies outside the room");
    }
    for (const Vec3& p : geometry.positions) {
      if (!strictly_inside(room->array_center + p, room->dims)) {
        throw std::invalid_argument("microphone lies outside the room");
      }
    }
  }
  MultichannelRecording rec;
  rec.sample_rate_hz = source.sample_rate_hz;
  rec.geometry = geometry;
  rec.label = source.label;
  rec.channels.resize(geometry.positions.size());
  for (int m = 0; m < geometry.size(); ++m) {
    const auto taps = propagation_taps(source_pos, geometry, m, source.sample_rate_hz, room);
    auto& ch = rec.channels[static_cast<std::size_t>(m)];
    ch.assign(source.samples.size(), 0.0);
    accumulate_fir(source.samples, taps, ch);
  }
  return rec;
}

std::string_view to_string(NoiseKind kind) {
  return kind == NoiseKind::White ? "white" : "band";
}

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "white") return NoiseKind::White;
  if (name == "band") return NoiseKind::Band;
  throw std::invalid_argument("unknown noise kind '" + std::string(name) + "'");
}

std::vector<double> channel_noise(std::size_t num_samples, int channel, double power,
                                  NoiseKind kind, std::uint64_t seed, int sample_rate_hz) {
  if (!(power >= 0.0)) throw std::invalid_argument("noise power must be non-negative");
  std::vector<double> noise(num_samples);
  Engine rng = make_engine(seed, {kStreamChannelNoise, static_cast<std::uint64_t>(channel)});
  Normal normal;
  for (double& v : noise) v = normal(rng);
  if (kind == NoiseKind::Band && num_samples > 1) {
    RealFft fft(static_cast<int>(num_samples));
    std::vector<std::complex<double>> bins(fft.num_bins());
    fft.forward(noise, bins);
    const double bin_hz = static_cast<double>(sample_rate_hz) / static_cast<double>(num_samples);
    for (std::size_t k = 0; k < bins.size(); ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      if (f < 20000.0 || f > 48000.0) bins[k] = 0.0;
    }
    fft.inverse(bins, noise);
  }
  const double raw = mean_power(noise);
  const double scale = raw > 0.0 ? std::sqrt(power / raw) : 0.0;
  for (double& v : noise) v *= scale;
  return noise;
}

MultichannelRecording make_noise(const MultichannelRecording& clean, double snr_db, NoiseKind kind,
                                 std::uint64_t seed) {
  if (!std::isfinite(snr_db)) throw std::invalid_argument("SNR must be finite");
  if (!(clean.mean_power() > 0.0)) throw std::invalid_argument("SNR undefined for an all-zero recording");
  MultichannelRecording noise;
  noise.sample_rate_hz = clean.sample_rate_hz;
  noise.geometry = clean.geometry;
  noise.label = clean.label;
  const double ratio = std::pow(10.0, snr_db / 10.0);
  for (int m = 0; m < clean.num_channels(); ++m) {
    const auto& ch = clean.channels[static_cast<std::size_t>(m)];
    noise.channels.push_back(
        channel_noise(ch.size(), m, mean_power(ch) / ratio, kind, seed, clean.sample_rate_hz));
  }
  return noise;
}

MultichannelRecording add_noise_at_snr(const MultichannelRecording& rec, double snr_db, NoiseKind kind,
                                       std::uint64_t seed) {
  MultichannelRecording out = make_noise(rec, snr_db, kind, seed);
  for (std::size_t m = 0; m < out.channels.size(); ++m) {
    auto& dst = out.channels[m];
    const auto& src = rec.channels[m];
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i] + dst[i];
  }
  return out;
}

double measure_snr(double signal_power, double noise_power) {
  if (!(signal_power > 0.0) || !(noise_power > 0.0)) {
    throw std::invalid_argument("SNR requires positive signal and noise power");
  }
  return 10.0 * std::log10(signal_power / noise_power);
}

nlohmann::json to_json(const ArrayGeometry& g) {
  return {{"preset", g.preset}, {"num_mics", g.size()}, {"speed_of_sound", g.speed_of_sound}};
}

nlohmann::json to_json(const RoomSpec& room) {
  return {{"dims", {room.dims.x, room.dims.y, room.dims.z}},
          {"absorption", room.absorption},
          {"max_image_order", room.max_image_order},
          {"array_center", {room.array_center.x, room.array_center.y, room.array_center.z}}};
}

RoomSpec room_from_json(const nlohmann::json& j) {
  auto vec = [](const nlohmann::json& a) {
    if (!a.is_array() || a.size() != 3) throw std::invalid_argument("expected a 3-vector");
    return Vec3{a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
  };
  RoomSpec r;
  r.dims = vec(j.at("dims"));
  r.absorption = j.value("absorption", r.absorption);
  r.max_image_order = j.value("max_image_order", r.max_image_order);
  r.array_center = j.contains("array_center") ? vec(j.at("array_center"))
                                              : Vec3{r.dims.x / 2, r.dims.y / 2, r.dims.z / 2};
  return r;
}

}  // namespace usonic::scene
