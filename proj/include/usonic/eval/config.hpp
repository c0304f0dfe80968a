#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "usonic/beamform/beamform.hpp"
#include "usonic/features/features.hpp"
#include "usonic/nn/network.hpp"
#include "usonic/nn/train.hpp"
#include "usonic/scene/scene.hpp"

namespace usonic::eval {

/// Where scene noise enters relative to the beamformer.
enum class NoiseStage {
  PreBeamform,   ///< independent noise on every microphone channel
  PostBeamform,  ///< one noise signal added to the beamformer output
};

std::string_view to_string(NoiseStage stage);
NoiseStage parse_noise_stage(std::string_view name);

struct DatasetConfig {
  int clips_per_class = 40;
  double clip_duration_s = 10.0;
  int sample_rate_hz = 96000;
  std::uint64_t seed = 20240601;
  double test_fraction = 0.3;
  double val_fraction = 0.2;  ///< of the training clips, used for early stopping
  std::string array_preset = "fx112";
  int num_mics = 112;
  double speed_of_sound = 343.0;
  double source_distance_m = 4.0;
  double max_azimuth_deg = 20.0;
  double max_elevation_deg = 15.0;
  double train_snr_db = 5.0;
  scene::NoiseKind noise_kind = scene::NoiseKind::White;
  NoiseStage noise_stage = NoiseStage::PreBeamform;
};

struct PipelineConfig {
  features::FeatureParams features;
  double interval_s = 0.04;
};

struct TrainingConfig {
  nn::TrainConfig train;
  int train_windows_per_clip = 24;  ///< windows drawn afresh from every training clip each epoch
  int val_windows_per_clip = 32;    ///< evenly spaced, fixed
};

struct KfoldConfig {
  int k = 10;
  std::uint64_t seed = 7;
};

struct RoomSweepConfig {
  /// Width x length x height, as listed in the reverberation table.
  std::vector<std::array<double, 3>> rooms{{20, 10, 20}, {30, 15, 30}, {40, 20, 40}, {50, 25, 50}};
  double absorption = 0.3;
  int max_image_order = 2;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  beamform::CameraModel camera;
  PipelineConfig pipeline;
  nn::InceptionConfig model;
  TrainingConfig training;
  KfoldConfig kfold;
  std::vector<double> snr_levels_db{5, 4, 3, 2, 1, 0, -1, -2, -3};
  RoomSweepConfig room_sweep;
  int timing_runs = 5;
  std::string cache_dir = "cache";  ///< relative to the output root

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);

/// Parses a complete or partial config. Missing keys take their defaults;
/// unknown keys and wrongly typed values raise ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);

/// Reads a JSON config file. ConfigError if it cannot be read or parsed.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies `key.path=value` overrides. The value is parsed as JSON when
/// possible and taken as a string otherwise.
ExperimentConfig apply_overrides(const ExperimentConfig& cfg, const std::vector<std::string>& overrides);

/// SHA-256 of the canonical (sorted-key, compact) JSON form.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace usonic::eval
