#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "usonic/beamform/beamform.hpp"
#include "usonic/eval/config.hpp"
#include "usonic/scene/scene.hpp"
#include "usonic/synth/synth.hpp"

namespace usonic::eval {

/// Everything needed to regenerate one clip of the corpus.
struct ClipInfo {
  std::string id;  ///< e.g. "gasleak_007"
  ClassLabel label = ClassLabel::Background;
  int index = 0;  ///< position in the corpus
  synth::SourceSpec source;
  Vec3 source_pos;                      ///< array frame, metres
  beamform::Detection detection;        ///< integer pixel the camera reports
  beamform::SteeringDirection steer;    ///< ray through the detection pixel
  std::uint64_t noise_seed = 0;
};

nlohmann::json to_json(const ClipInfo& clip);

/// clips_per_class clips of every class in class-major order. Source
/// parameters, direction and seeds derive from dataset.seed and the clip
/// position only, so a larger corpus extends a smaller one.
std::vector<ClipInfo> build_corpus(const ExperimentConfig& cfg);

/// Clip indices per role. Splits are always at clip level.
struct Split {
  std::vector<int> train;
  std::vector<int> val;  ///< early-stopping clips, drawn from the non-test clips
  std::vector<int> test;
};

/// Stratified split: round(test_fraction * n) clips of each class go to test,
/// then round(val_fraction * remaining) to validation.
Split split_corpus(const std::vector<ClipInfo>& corpus, const DatasetConfig& cfg);

/// Stratified validation carve-out from `pool` (used by k-fold).
Split carve_validation(const std::vector<ClipInfo>& corpus, const std::vector<int>& pool,
                       std::vector<int> test, double val_fraction, std::uint64_t seed);

std::vector<std::string> clip_ids(const std::vector<ClipInfo>& corpus, const std::vector<int>& indices);

/// Throws std::logic_error if the train (incl. validation) and test id sets
/// intersect or their hashes coincide. Returns {train hash, test hash}.
std::pair<std::string, std::string> assert_no_leakage(const std::vector<ClipInfo>& corpus, const Split& split);

/// Beamformer output split into its clean part and a noise part referenced
/// to 0 dB, so the scene at SNR L is clean + 10^(-L/20) * noise.
struct BeamComponents {
  int sample_rate_hz = 96000;
  std::vector<float> clean;
  std::vector<float> noise;
};

/// Renders the clip in free field and beamforms it toward its detection
/// pixel one channel at a time. With pre-beamform noise each channel gets
/// independent noise at its own signal power; with post-beamform noise a
/// single noise signal at the beam output power is used.
BeamComponents render_components(const ClipInfo& clip, const ExperimentConfig& cfg);

/// Beamformed clean signal inside `room` (free field when absent), computed
/// with one FFT convolution of the source against the combined
/// propagation-plus-steering filter.
std::vector<float> render_room_clean(const ClipInfo& clip, const ExperimentConfig& cfg,
                                     const std::optional<scene::RoomSpec>& room);

/// Sum over microphones of propagation taps convolved with steering taps.
std::vector<Tap> combined_beam_taps(const ClipInfo& clip, const scene::ArrayGeometry& geometry,
                                    int sample_rate_hz, const std::optional<scene::RoomSpec>& room);

/// y[t] = sum_k w_k x[t - lag_k] for 0 <= t < x.size(), via FFT.
std::vector<double> fft_filter(std::span<const double> x, std::span<const Tap> taps);

/// clean + 10^(-snr_db/20) * noise.
MonoSignal mix_at_snr(const std::vector<float>& clean, const std::vector<float>& noise, double snr_db,
                      int sample_rate_hz, ClassLabel label);

/// Disk-backed memo of render_components keyed by the clip and render config.
class ComponentCache {
 public:
  ComponentCache(std::filesystem::path dir, const ExperimentConfig& cfg);
  BeamComponents get(const ClipInfo& clip) const;
  std::filesystem::path path_for(const ClipInfo& clip) const;

 private:
  std::filesystem::path dir_;
  ExperimentConfig cfg_;
  std::string render_key_;
};

/// The array geometry a config describes.
scene::ArrayGeometry config_geometry(const DatasetConfig& d);

/// Room centred on the array with width, length, height from the sweep table.
scene::RoomSpec sweep_room(const std::array<double, 3>& dims, double absorption, int max_order);

}  // namespace usonic::eval
