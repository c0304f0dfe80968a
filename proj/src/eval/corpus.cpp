#include "usonic/eval/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>
#include <set>
#include <stdexcept>

#include "usonic/common/error.hpp"
#include "usonic/common/fft.hpp"
#include "usonic/common/rng.hpp"
#include "usonic/common/sha256.hpp"

namespace usonic::eval {

namespace {

constexpr std::uint64_t kStreamClip = 0x636c6970;
constexpr std::uint64_t kStreamSplit = 0x73706c74;

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

// Per-class source parameters. Amplitude is irrelevant after SNR scaling but
// varies anyway so nothing downstream can key on it.
synth::SourceSpec make_source(ClassLabel label, Engine& rng, const DatasetConfig& d) {
  synth::SourceSpec s;
  s.label = label;
  s.seed = rng();
  s.amplitude = uniform(rng, 0.5, 2.0);
  s.duration_s = d.clip_duration_s;
  s.sample_rate_hz = d.sample_rate_hz;
  const double nyq_cap = std::min(48000.0, d.sample_rate_hz / 2.0);
  switch (label) {
    case ClassLabel::GasLeak: {
      static constexpr double kRates[] = {0.2, 0.5, 1.0};
      s.band_lo_hz = uniform(rng, 20000.0, 24000.0);
      s.band_hi_hz = std::min(uniform(rng, 36000.0, 46000.0), nyq_cap);
      s.leak_rate_scale = kRates[std::uniform_int_distribution<int>(0, 2)(rng)];
      break;
    }
    case ClassLabel::Background:
      s.tone_level = uniform(rng, 0.05, 0.3);
      break;
    default:
      break;
  }
  return s;
}

void write_u32(std::ofstream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }
void write_u64(std::ofstream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::vector<float> to_float(const std::vector<double>& x) {
  std::vector<float> out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), [](double v) { return static_cast<float>(v); });
  return out;
}

}  // namespace

nlohmann::json to_json(const ClipInfo& c) {
  return {{"id", c.id},
          {"label", std::string(to_string(c.label))},
          {"index", c.index},
          {"source", synth::to_json(c.source)},
          {"source_pos", {c.source_pos.x, c.source_pos.y, c.source_pos.z}},
          {"detection", {{"px", c.detection.px}, {"py", c.detection.py}, {"class", c.detection.class_name}}},
          {"steer", {c.steer.u.x, c.steer.u.y, c.steer.u.z}},
          {"noise_seed", c.noise_seed}};
}

std::vector<ClipInfo> build_corpus(const ExperimentConfig& cfg) {
  cfg.validate();
  const DatasetConfig& d = cfg.dataset;
  std::vector<ClipInfo> corpus;
  for (ClassLabel label : kAllClasses) {
    for (int i = 0; i < d.clips_per_class; ++i) {
      Engine rng = make_engine(d.seed, {kStreamClip, static_cast<std::uint64_t>(index_of(label)),
                                        static_cast<std::uint64_t>(i)});
      ClipInfo c;
      c.label = label;
      c.index = static_cast<int>(corpus.size());
      char buf[16];
      std::snprintf(buf, sizeof buf, "_%03d", i);
      c.id = lower(to_string(label)) + buf;
      c.source = make_source(label, rng, d);
      c.noise_seed = rng();
      const double az = deg2rad(uniform(rng, -d.max_azimuth_deg, d.max_azimuth_deg));
      const double el = deg2rad(uniform(rng, -d.max_elevation_deg, d.max_elevation_deg));
      // camera frame: x right, y down, z forward; positive elevation is up
      const Vec3 u{std::cos(el) * std::sin(az), -std::sin(el), std::cos(el) * std::cos(az)};
      c.source_pos = d.source_distance_m * u;
      const auto px = beamform::steering_to_pixel(beamform::SteeringDirection{u}, cfg.camera);
      c.detection.px = std::clamp(std::round(px[0]), 0.0, cfg.camera.width_px - 1.0);
      c.detection.py = std::clamp(std::round(px[1]), 0.0, cfg.camera.height_px - 1.0);
      c.detection.class_name = std::string(to_string(label));
      c.steer = beamform::pixel_to_steering(c.detection.px, c.detection.py, cfg.camera);
      corpus.push_back(std::move(c));
    }
  }
  return corpus;
}

namespace {

std::vector<std::vector<int>> by_class(const std::vector<ClipInfo>& corpus, const std::vector<int>& pool) {
  std::vector<std::vector<int>> groups(kNumClasses);
  for (int i : pool) groups[static_cast<std::size_t>(index_of(corpus.at(static_cast<std::size_t>(i)).label))].push_back(i);
  return groups;
}

void shuffle(std::vector<int>& v, std::uint64_t seed, std::uint64_t tag, int cls) {
  Engine rng = make_engine(seed, {kStreamSplit, tag, static_cast<std::uint64_t>(cls)});
  std::shuffle(v.begin(), v.end(), rng);
}

}  // namespace

Split carve_validation(const std::vector<ClipInfo>& corpus, const std::vector<int>& pool, std::vector<int> test,
                       double val_fraction, std::uint64_t seed) {
  Split s;
  s.test = std::move(test);
  auto groups = by_class(corpus, pool);
  for (int c = 0; c < kNumClasses; ++c) {
    auto& g = groups[static_cast<std::size_t>(c)];
    std::sort(g.begin(), g.end());
    shuffle(g, seed, 2, c);
    const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(g.size())));
    s.val.insert(s.val.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(std::min(n_val, g.size())));
    s.train.insert(s.train.end(), g.begin() + static_cast<std::ptrdiff_t>(std::min(n_val, g.size())), g.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

Split split_corpus(const std::vector<ClipInfo>& corpus, const DatasetConfig& cfg) {
  std::vector<int> all(corpus.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  auto groups = by_class(corpus, all);
  std::vector<int> test;
  std::vector<int> rest;
  for (int c = 0; c < kNumClasses; ++c) {
    auto& g = groups[static_cast<std::size_t>(c)];
    shuffle(g, cfg.seed, 1, c);
    const auto n_test = static_cast<std::size_t>(std::llround(cfg.test_fraction * static_cast<double>(g.size())));
    test.insert(test.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(n_test));
    rest.insert(rest.end(), g.begin() + static_cast<std::ptrdiff_t>(n_test), g.end());
  }
  return carve_validation(corpus, rest, std::move(test), cfg.val_fraction, cfg.seed);
}

std::vector<std::string> clip_ids(const std::vector<ClipInfo>& corpus, const std::vector<int>& indices) {
  std::vector<std::string> ids;
  ids.reserve(indices.size());
  for (int i : indices) ids.push_back(corpus.at(static_cast<std::size_t>(i)).id);
  return ids;
}

std::pair<std::string, std::string> assert_no_leakage(const std::vector<ClipInfo>& corpus, const Split& split) {
  std::vector<int> fit = split.train;
  fit.insert(fit.end(), split.val.begin(), split.val.end());
  const auto train_ids = clip_ids(corpus, fit);
  const auto test_ids = clip_ids(corpus, split.test);
  const std::set<std::string> train_set(train_ids.begin(), train_ids.end());
  for (const auto& id : test_ids) {
    if (train_set.count(id)) throw std::logic_error("clip " + id + " is in both the training and the test set");
  }
  auto hashes = std::make_pair(sha256_of_id_set(train_ids), sha256_of_id_set(test_ids));
  if (hashes.first == hashes.second) throw std::logic_error("training and test id sets hash identically");
  return hashes;
}

scene::ArrayGeometry config_geometry(const DatasetConfig& d) {
  scene::ArrayGeometry g = scene::make_array(d.array_preset, d.num_mics);
  g.speed_of_sound = d.speed_of_sound;
  return g;
}

scene::RoomSpec sweep_room(const std::array<double, 3>& dims, double absorption, int max_order) {
  scene::RoomSpec r;
  r.dims = {dims[0], dims[1], dims[2]};
  r.absorption = absorption;
  r.max_image_order = max_order;
  r.array_center = 0.5 * r.dims;
  return r;
}

BeamComponents render_components(const ClipInfo& clip, const ExperimentConfig& cfg) {
  const DatasetConfig& d = cfg.dataset;
  const MonoSignal src = synth::synthesize(clip.source);
  const scene::ArrayGeometry geom = config_geometry(d);
  const std::size_t n = src.samples.size();
  const beamform::BeamAccumulator beam(geom, clip.steer, beamform::BeamWeights::uniform(geom.size()),
                                       d.sample_rate_hz, n);
  std::vector<double> clean(n, 0.0);
  std::vector<double> noise(n, 0.0);
  std::vector<double> channel(n);
  bool any_signal = false;
  for (int m = 0; m < geom.size(); ++m) {
    std::fill(channel.begin(), channel.end(), 0.0);
    accumulate_fir(src.samples, scene::propagation_taps(clip.source_pos, geom, m, d.sample_rate_hz, std::nullopt),
                   channel);
    beam.add_channel(m, channel, clean);
    if (d.noise_stage == NoiseStage::PreBeamform) {
      const double p = mean_power(channel);
      any_signal = any_signal || p > 0.0;
      const auto nz = scene::channel_noise(n, m, p, d.noise_kind, clip.noise_seed, d.sample_rate_hz);
      beam.add_channel(m, nz, noise);
    }
  }
  if (d.noise_stage == NoiseStage::PostBeamform) {
    const double p = mean_power(clean);
    any_signal = p > 0.0;
    // a channel index past the array keeps this stream apart from per-channel noise
    noise = scene::channel_noise(n, geom.size(), p, d.noise_kind, clip.noise_seed, d.sample_rate_hz);
  }
  if (!any_signal) throw DataError("clip " + clip.id + " renders to silence; SNR is undefined");
  return {d.sample_rate_hz, to_float(clean), to_float(noise)};
}

std::vector<Tap> combined_beam_taps(const ClipInfo& clip, const scene::ArrayGeometry& geometry, int sample_rate_hz,
                                    const std::optional<scene::RoomSpec>& room) {
  const auto tau = beamform::steering_delays(geometry, clip.steer);
  const double w = beamform::BeamWeights::uniform(geometry.size()).w.front();
  TapSet combined;
  for (int m = 0; m < geometry.size(); ++m) {
    const auto prop = scene::propagation_taps(clip.source_pos, geometry, m, sample_rate_hz, room);
    const auto steer = delay_taps(tau[static_cast<std::size_t>(m)] * sample_rate_hz, w);
    for (const Tap& a : prop) {
      for (const Tap& b : steer) combined.add(Tap{a.lag + b.lag, a.weight * b.weight});
    }
  }
  return combined.finalize();
}

std::vector<double> fft_filter(std::span<const double> x, std::span<const Tap> taps) {
  const std::size_t n = x.size();
  std::vector<double> y(n, 0.0);
  if (taps.empty() || n == 0) return y;
  std::ptrdiff_t lo = taps.front().lag;
  std::ptrdiff_t hi = taps.front().lag;
  for (const Tap& t : taps) {
    lo = std::min(lo, t.lag);
    hi = std::max(hi, t.lag);
  }
  const auto len = static_cast<std::size_t>(hi - lo + 1);
  std::size_t size = 1;
  while (size < n + len - 1) size <<= 1;
  RealFft fft(static_cast<int>(size));
  std::vector<double> a(size, 0.0);
  std::vector<double> h(size, 0.0);
  std::copy(x.begin(), x.end(), a.begin());
  for (const Tap& t : taps) h[static_cast<std::size_t>(t.lag - lo)] += t.weight;
  std::vector<std::complex<double>> fa(fft.num_bins());
  std::vector<std::complex<double>> fh(fft.num_bins());
  fft.forward(a, fa);
  fft.forward(h, fh);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= fh[k];
  fft.inverse(fa, a);
  const double scale = 1.0 / static_cast<double>(size);
  // full convolution index c = t - lo
  for (std::size_t t = 0; t < n; ++t) {
    const std::ptrdiff_t c = static_cast<std::ptrdiff_t>(t) - lo;
    if (c >= 0 && static_cast<std::size_t>(c) < size) y[t] = a[static_cast<std::size_t>(c)] * scale;
  }
  return y;
}

std::vector<float> render_room_clean(const ClipInfo& clip, const ExperimentConfig& cfg,
                                     const std::optional<scene::RoomSpec>& room) {
  const scene::ArrayGeometry geom = config_geometry(cfg.dataset);
  if (room) {
    room->validate();
    const Vec3 s = room->array_center + clip.source_pos;
    auto inside = [&](Vec3 p) {
      return p.x > 0 && p.y > 0 && p.z > 0 && p.x < room->dims.x && p.y < room->dims.y && p.z < room->dims.z;
    };
    if (!inside(s)) throw std::invalid_argument("clip " + clip.id + " source lies outside the room");
  }
  const MonoSignal src = synth::synthesize(clip.source);
  const auto taps = combined_beam_taps(clip, geom, cfg.dataset.sample_rate_hz, room);
  return to_float(fft_filter(src.samples, taps));
}

MonoSignal mix_at_snr(const std::vector<float>& clean, const std::vector<float>& noise, double snr_db,
                      int sample_rate_hz, ClassLabel label) {
  if (clean.size() != noise.size()) throw std::invalid_argument("clean and noise components differ in length");
  if (!std::isfinite(snr_db)) throw std::invalid_argument("SNR must be finite");
  const double g = std::pow(10.0, -snr_db / 20.0);
  MonoSignal out;
  out.sample_rate_hz = sample_rate_hz;
  out.label = label;
  out.samples.resize(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    out.samples[i] = static_cast<double>(clean[i]) + g * static_cast<double>(noise[i]);
  }
  return out;
}

ComponentCache::ComponentCache(std::filesystem::path dir, const ExperimentConfig& cfg)
    : dir_(std::move(dir)), cfg_(cfg) {
  const DatasetConfig& d = cfg.dataset;
  render_key_ = nlohmann::json{{"format", 1},
                               {"array_preset", d.array_preset},
                               {"num_mics", d.num_mics},
                               {"speed_of_sound", d.speed_of_sound},
                               {"noise_kind", std::string(scene::to_string(d.noise_kind))},
                               {"noise_stage", std::string(to_string(d.noise_stage))}}
                    .dump();
}

std::filesystem::path ComponentCache::path_for(const ClipInfo& clip) const {
  const std::string key = sha256_hex(render_key_ + to_json(clip).dump());
  return dir_ / (clip.id + "-" + key.substr(0, 16) + ".bin");
}

BeamComponents ComponentCache::get(const ClipInfo& clip) const {
  static constexpr char kMagic[8] = {'U', 'S', 'B', 'E', 'A', 'M', '0', '1'};
  const auto path = path_for(clip);
  if (std::ifstream in{path, std::ios::binary}) {
    char magic[8];
    std::uint32_t rate = 0;
    std::uint64_t n = 0;
    in.read(magic, 8);
    in.read(reinterpret_cast<char*>(&rate), sizeof rate);
    in.read(reinterpret_cast<char*>(&n), sizeof n);
    if (in && std::memcmp(magic, kMagic, 8) == 0 && n == clip.source.num_samples()) {
      BeamComponents bc;
      bc.sample_rate_hz = static_cast<int>(rate);
      bc.clean.resize(n);
      bc.noise.resize(n);
      in.read(reinterpret_cast<char*>(bc.clean.data()), static_cast<std::streamsize>(n * sizeof(float)));
      in.read(reinterpret_cast<char*>(bc.noise.data()), static_cast<std::streamsize>(n * sizeof(float)));
      if (in) return bc;
    }
  }
  BeamComponents bc = render_components(clip, cfg_);
  std::filesystem::create_directories(dir_);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write render cache " + tmp);
    out.write(kMagic, 8);
    write_u32(out, static_cast<std::uint32_t>(bc.sample_rate_hz));
    write_u64(out, bc.clean.size());
    out.write(reinterpret_cast<const char*>(bc.clean.data()), static_cast<std::streamsize>(bc.clean.size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(bc.noise.data()), static_cast<std::streamsize>(bc.noise.size() * sizeof(float)));
    if (!out) throw DataError("failed writing render cache " + tmp);
  }
  std::filesystem::rename(tmp, path);
  return bc;
}

}  // namespace usonic::eval
