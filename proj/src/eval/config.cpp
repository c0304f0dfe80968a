#include "usonic/eval/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "usonic/common/error.hpp"
#include "usonic/common/sha256.hpp"

namespace usonic::eval {

using nlohmann::json;

std::string_view to_string(NoiseStage stage) {
  return stage == NoiseStage::PreBeamform ? "pre_beamform" : "post_beamform";
}

NoiseStage parse_noise_stage(std::string_view name) {
  if (name == "pre_beamform") return NoiseStage::PreBeamform;
  if (name == "post_beamform") return NoiseStage::PostBeamform;
  throw std::invalid_argument("unknown noise stage '" + std::string(name) + "'");
}

namespace {

std::string_view window_name(features::WindowFn fn) {
  switch (fn) {
    case features::WindowFn::Hamming: return "hamming";
    case features::WindowFn::Hann: return "hann";
    case features::WindowFn::Rectangular: return "rectangular";
  }
  return "hamming";
}

features::WindowFn parse_window(std::string_view name) {
  if (name == "hamming") return features::WindowFn::Hamming;
  if (name == "hann") return features::WindowFn::Hann;
  if (name == "rectangular") return features::WindowFn::Rectangular;
  throw std::invalid_argument("unknown window '" + std::string(name) + "'");
}

// Rejects keys the defaults do not know about, naming the full path.
void check_keys(const json& user, const json& reference, const std::string& prefix) {
  if (!user.is_object()) return;
  if (!reference.is_object()) throw ConfigError("'" + prefix + "' must not be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!reference.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    if (value.is_object()) check_keys(value, reference.at(key), path);
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  const DatasetConfig& d = dataset;
  need(d.clips_per_class >= 1, "dataset.clips_per_class must be >= 1");
  need(d.clip_duration_s > 0.0 && std::isfinite(d.clip_duration_s), "dataset.clip_duration_s must be positive");
  need(d.sample_rate_hz > 0, "dataset.sample_rate_hz must be positive");
  need(d.test_fraction > 0.0 && d.test_fraction < 1.0, "dataset.test_fraction must lie in (0, 1)");
  need(d.val_fraction > 0.0 && d.val_fraction < 1.0, "dataset.val_fraction must lie in (0, 1)");
  need(d.num_mics >= 1, "dataset.num_mics must be >= 1");
  need(d.speed_of_sound > 0.0, "dataset.speed_of_sound must be positive");
  need(d.source_distance_m > scene::kMinDistance, "dataset.source_distance_m too small");
  need(d.max_azimuth_deg >= 0.0 && d.max_azimuth_deg < 90.0, "dataset.max_azimuth_deg must lie in [0, 90)");
  need(d.max_elevation_deg >= 0.0 && d.max_elevation_deg < 90.0, "dataset.max_elevation_deg must lie in [0, 90)");
  need(std::isfinite(d.train_snr_db), "dataset.train_snr_db must be finite");
  need(pipeline.features.stft.sample_rate_hz == d.sample_rate_hz,
       "pipeline sample rate must equal dataset.sample_rate_hz");
  need(pipeline.interval_s > 0.0, "pipeline.interval_s must be positive");
  need(training.train_windows_per_clip >= 1, "training.train_windows_per_clip must be >= 1");
  need(training.val_windows_per_clip >= 1, "training.val_windows_per_clip must be >= 1");
  need(training.train.batch_size >= 1, "training.batch_size must be >= 1");
  need(training.train.max_epochs >= 1, "training.max_epochs must be >= 1");
  need(training.train.patience >= 1, "training.patience must be >= 1");
  need(training.train.adam.lr > 0.0, "training.learning_rate must be positive");
  need(kfold.k >= 2, "kfold.k must be >= 2");
  need(!snr_levels_db.empty(), "snr_levels_db must not be empty");
  for (double l : snr_levels_db) need(std::isfinite(l), "snr_levels_db must be finite");
  need(!room_sweep.rooms.empty(), "room_sweep.rooms must not be empty");
  for (const auto& r : room_sweep.rooms) need(r[0] > 0 && r[1] > 0 && r[2] > 0, "room dimensions must be positive");
  need(room_sweep.absorption > 0.0 && room_sweep.absorption <= 1.0, "room_sweep.absorption must lie in (0, 1]");
  need(room_sweep.max_image_order >= 0, "room_sweep.max_image_order must be >= 0");
  need(timing_runs >= 1, "timing_runs must be >= 1");
  need(!cache_dir.empty(), "cache_dir must not be empty");
  try {
    camera.validate();
    pipeline.features.validate();
    model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const features::StftParams& s = pipeline.features.stft;
  const double bin_hz = static_cast<double>(s.sample_rate_hz) / s.n_fft;
  int band_bins = 0;
  for (int k = 0; k <= s.n_fft / 2; ++k) {
    if (k * bin_hz >= pipeline.features.band_lo_hz && k * bin_hz <= pipeline.features.band_hi_hz) ++band_bins;
  }
  need(model.input_height == band_bins, "model.input_height (" + std::to_string(model.input_height) +
                                            ") must equal the band's bin count (" + std::to_string(band_bins) + ")");
  need(model.input_width == pipeline.features.win_frames, "model.input_width must equal pipeline.win_frames");
}

json to_json(const ExperimentConfig& c) {
  const DatasetConfig& d = c.dataset;
  const features::FeatureParams& f = c.pipeline.features;
  const nn::TrainConfig& t = c.training.train;
  json rooms = json::array();
  for (const auto& r : c.room_sweep.rooms) rooms.push_back({r[0], r[1], r[2]});
  return {
      {"dataset",
       {{"clips_per_class", d.clips_per_class},
        {"clip_duration_s", d.clip_duration_s},
        {"sample_rate_hz", d.sample_rate_hz},
        {"seed", d.seed},
        {"test_fraction", d.test_fraction},
        {"val_fraction", d.val_fraction},
        {"array_preset", d.array_preset},
        {"num_mics", d.num_mics},
        {"speed_of_sound", d.speed_of_sound},
        {"source_distance_m", d.source_distance_m},
        {"max_azimuth_deg", d.max_azimuth_deg},
        {"max_elevation_deg", d.max_elevation_deg},
        {"train_snr_db", d.train_snr_db},
        {"noise_kind", std::string(scene::to_string(d.noise_kind))},
        {"noise_stage", std::string(to_string(d.noise_stage))}}},
      {"camera",
       {{"width_px", c.camera.width_px},
        {"height_px", c.camera.height_px},
        {"hfov_deg", c.camera.hfov_deg},
        {"vfov_deg", c.camera.vfov_deg},
        {"mounting", c.camera.mounting}}},
      {"pipeline",
       {{"n_fft", f.stft.n_fft},
        {"hop", f.stft.hop},
        {"window", std::string(window_name(f.stft.window))},
        {"band_lo_hz", f.band_lo_hz},
        {"band_hi_hz", f.band_hi_hz},
        {"gamma", f.gamma},
        {"win_frames", f.win_frames},
        {"hop_frames", f.hop_frames},
        {"interval_s", c.pipeline.interval_s}}},
      {"model", nn::to_json(c.model)},
      {"training",
       {{"learning_rate", t.adam.lr},
        {"beta1", t.adam.beta1},
        {"beta2", t.adam.beta2},
        {"epsilon", t.adam.eps},
        {"batch_size", t.batch_size},
        {"max_epochs", t.max_epochs},
        {"patience", t.patience},
        {"seed", t.seed},
        {"train_windows_per_clip", c.training.train_windows_per_clip},
        {"val_windows_per_clip", c.training.val_windows_per_clip}}},
      {"kfold", {{"k", c.kfold.k}, {"seed", c.kfold.seed}}},
      {"snr_levels_db", c.snr_levels_db},
      {"room_sweep",
       {{"rooms", rooms}, {"absorption", c.room_sweep.absorption}, {"max_image_order", c.room_sweep.max_image_order}}},
      {"timing_runs", c.timing_runs},
      {"cache_dir", c.cache_dir},
  };
}

ExperimentConfig config_from_json(const json& user) {
  if (!user.is_object()) throw ConfigError("config must be a JSON object");
  json merged = to_json(ExperimentConfig{});
  check_keys(user, merged, "");
  merged.merge_patch(user);
  ExperimentConfig c;
  try {
    const json& d = merged.at("dataset");
    c.dataset.clips_per_class = d.at("clips_per_class").get<int>();
    c.dataset.clip_duration_s = d.at("clip_duration_s").get<double>();
    c.dataset.sample_rate_hz = d.at("sample_rate_hz").get<int>();
    c.dataset.seed = d.at("seed").get<std::uint64_t>();
    c.dataset.test_fraction = d.at("test_fraction").get<double>();
    c.dataset.val_fraction = d.at("val_fraction").get<double>();
    c.dataset.array_preset = d.at("array_preset").get<std::string>();
    c.dataset.num_mics = d.at("num_mics").get<int>();
    c.dataset.speed_of_sound = d.at("speed_of_sound").get<double>();
    c.dataset.source_distance_m = d.at("source_distance_m").get<double>();
    c.dataset.max_azimuth_deg = d.at("max_azimuth_deg").get<double>();
    c.dataset.max_elevation_deg = d.at("max_elevation_deg").get<double>();
    c.dataset.train_snr_db = d.at("train_snr_db").get<double>();
    c.dataset.noise_kind = scene::parse_noise_kind(d.at("noise_kind").get<std::string>());
    c.dataset.noise_stage = parse_noise_stage(d.at("noise_stage").get<std::string>());

    const json& cam = merged.at("camera");
    c.camera.width_px = cam.at("width_px").get<int>();
    c.camera.height_px = cam.at("height_px").get<int>();
    c.camera.hfov_deg = cam.at("hfov_deg").get<double>();
    c.camera.vfov_deg = cam.at("vfov_deg").get<double>();
    c.camera.mounting = cam.at("mounting").get<std::array<double, 9>>();

    const json& p = merged.at("pipeline");
    features::FeatureParams& f = c.pipeline.features;
    f.stft.n_fft = p.at("n_fft").get<int>();
    f.stft.hop = p.at("hop").get<int>();
    f.stft.sample_rate_hz = c.dataset.sample_rate_hz;
    f.stft.window = parse_window(p.at("window").get<std::string>());
    f.band_lo_hz = p.at("band_lo_hz").get<double>();
    f.band_hi_hz = p.at("band_hi_hz").get<double>();
    f.gamma = p.at("gamma").get<double>();
    f.win_frames = p.at("win_frames").get<int>();
    f.hop_frames = p.at("hop_frames").get<int>();
    c.pipeline.interval_s = p.at("interval_s").get<double>();

    c.model = nn::inception_config_from_json(merged.at("model"));

    const json& t = merged.at("training");
    c.training.train.adam.lr = t.at("learning_rate").get<double>();
    c.training.train.adam.beta1 = t.at("beta1").get<double>();
    c.training.train.adam.beta2 = t.at("beta2").get<double>();
    c.training.train.adam.eps = t.at("epsilon").get<double>();
    c.training.train.batch_size = t.at("batch_size").get<int>();
    c.training.train.max_epochs = t.at("max_epochs").get<int>();
    c.training.train.patience = t.at("patience").get<int>();
    c.training.train.seed = t.at("seed").get<std::uint64_t>();
    c.training.train_windows_per_clip = t.at("train_windows_per_clip").get<int>();
    c.training.val_windows_per_clip = t.at("val_windows_per_clip").get<int>();

    c.kfold.k = merged.at("kfold").at("k").get<int>();
    c.kfold.seed = merged.at("kfold").at("seed").get<std::uint64_t>();
    c.snr_levels_db = merged.at("snr_levels_db").get<std::vector<double>>();
    const json& rs = merged.at("room_sweep");
    c.room_sweep.rooms = rs.at("rooms").get<std::vector<std::array<double, 3>>>();
    c.room_sweep.absorption = rs.at("absorption").get<double>();
    c.room_sweep.max_image_order = rs.at("max_image_order").get<int>();
    c.timing_runs = merged.at("timing_runs").get<int>();
    c.cache_dir = merged.at("cache_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

ExperimentConfig apply_overrides(const ExperimentConfig& cfg, const std::vector<std::string>& overrides) {
  json j = to_json(cfg);
  for (const std::string& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + ov + "' is not key=value");
    const std::string key = ov.substr(0, eq);
    const std::string text = ov.substr(eq + 1);
    json value;
    try {
      value = json::parse(text);
    } catch (const json::parse_error&) {
      value = text;
    }
    json* node = &j;
    std::stringstream ks(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ks, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (!node->is_object() || !node->contains(parts[i])) throw ConfigError("unknown config key '" + key + "'");
      node = &(*node)[parts[i]];
    }
    if (node->is_object()) throw ConfigError("override '" + key + "' names a section, not a value");
    *node = value;
  }
  return config_from_json(j);
}

std::string config_hash(const ExperimentConfig& cfg) { return sha256_hex(to_json(cfg).dump()); }

}  // namespace usonic::eval
