#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "usonic/eval/config.hpp"
#include "usonic/eval/corpus.hpp"
#include "usonic/eval/metrics.hpp"
#include "usonic/features/features.hpp"
#include "usonic/nn/network.hpp"
#include "usonic/nn/train.hpp"

namespace usonic::eval {

/// stft -> band-pass -> per-clip min-max. Gamma is applied per window by
/// gamma_window, which gives the same values as gamma on the whole clip.
features::Spectrogram normalized_spectrogram(const MonoSignal& signal, const features::FeatureParams& params);

/// Window at `origin_frame` of a normalised spectrogram, raised to `gamma`.
void gamma_window(const features::Spectrogram& normalized, int origin_frame, int win_frames, double gamma,
                  std::span<float> out);

struct ClipPrediction {
  std::vector<IntervalPrediction> intervals;
  int clip_label = 0;
  int num_windows = 0;
};

/// Full post-beamforming pipeline on a normalised spectrogram: every window,
/// forward pass, interval aggregation, majority vote.
ClipPrediction classify_spectrogram(const features::Spectrogram& normalized, nn::Network<float>& net,
                                    const PipelineConfig& pipeline);
ClipPrediction classify_clip(const MonoSignal& beamformed, nn::Network<float>& net, const PipelineConfig& pipeline);
/// Beamforms toward `dir` first.
ClipPrediction classify_clip(const scene::MultichannelRecording& rec, const beamform::SteeringDirection& dir,
                             nn::Network<float>& net, const PipelineConfig& pipeline);

struct ClipOutcome {
  std::string id;
  int truth = 0;
  ClipPrediction prediction;
};

struct EvalResult {
  MetricsReport intervals;  ///< one sample per (clip, interval)
  MetricsReport clips;      ///< one sample per clip (majority label)
  std::vector<ClipOutcome> outcomes;
};

EvalResult summarize(std::vector<ClipOutcome> outcomes);

struct TrainedModel {
  nn::Network<float> net;
  nn::TrainResult result;
  std::string train_hash;  ///< sha256 of the training clip ids
};

/// Corpus, split and caches shared by every experiment of one config.
class Workspace {
 public:
  Workspace(ExperimentConfig cfg, std::filesystem::path cache_root);

  const ExperimentConfig& config() const { return cfg_; }
  const std::vector<ClipInfo>& corpus() const { return corpus_; }
  const Split& split() const { return split_; }

  BeamComponents components(int clip) const { return cache_.get(corpus_.at(static_cast<std::size_t>(clip))); }
  /// Normalised spectrogram at the training SNR; memoised.
  const features::Spectrogram& train_spectrogram(int clip);
  features::Spectrogram spectrogram_at(int clip, double snr_db);
  void clear_memo() { memo_.clear(); }

  /// Trains `arch` on split.train with early stopping on split.val. Window
  /// features use `gamma`; the architecture's own seed sets the initial weights.
  TrainedModel train(const Split& split, const nn::InceptionConfig& arch, double gamma);

  /// Interval- and clip-level metrics over `clips` at `snr_db`.
  EvalResult evaluate(nn::Network<float>& net, const std::vector<int>& clips, double gamma, double snr_db);

 private:
  ExperimentConfig cfg_;
  std::vector<ClipInfo> corpus_;
  Split split_;
  ComponentCache cache_;
  std::map<int, features::Spectrogram> memo_;
};

struct SnrRow {
  double snr_db = 0.0;
  EvalResult result;
};

/// Noise is injected per channel before beamforming; one noise realisation
/// per clip is scaled to every level.
std::vector<SnrRow> sweep_snr(Workspace& ws, nn::Network<float>& net, const std::vector<int>& clips);

struct RoomRow {
  std::string condition;  ///< "anechoic", "room" or "control"
  std::string room;       ///< "WxLxH" as listed in the table, empty for free field
  std::array<double, 3> dims{};
  double absorption = 1.0;
  int max_image_order = 0;
  EvalResult result;
};

/// Free-field baseline, every configured room, then the smallest room with
/// absorption 1 as the anechoic control. Scenes are re-rendered with image
/// sources; the noise keeps its free-field reference level.
std::vector<RoomRow> sweep_room(Workspace& ws, nn::Network<float>& net, const std::vector<int>& clips);

struct AblationRow {
  std::string name;
  bool inception = true;
  double gamma = 1.5;
  std::size_t param_count = 0;
  std::string train_hash;
  int best_epoch = 0;
  EvalResult result;
};

/// full, w/o gamma, w/o inception, w/o both; identical split and seeds.
/// A model already trained with the full config may be passed in to avoid
/// retraining it.
std::vector<AblationRow> ablate(Workspace& ws, TrainedModel* full = nullptr);

/// Fold of every clip; stratified by class. Throws DataError if a class has
/// fewer than k clips.
std::vector<int> kfold_assign(const std::vector<ClipInfo>& corpus, int k, std::uint64_t seed);

struct FoldRow {
  int fold = 0;
  int test_clips = 0;
  int best_epoch = 0;
  EvalResult result;
};

struct KfoldResult {
  std::vector<FoldRow> folds;
  double mean_f1 = 0.0;
  double std_f1 = 0.0;
  double min_f1 = 0.0;
  double max_f1 = 0.0;
  double mean_accuracy = 0.0;
};

KfoldResult kfold(Workspace& ws);

struct TimingResult {
  double median_s = 0.0;  ///< features + forward + aggregation for one clip
  std::vector<double> runs_s;
  int windows = 0;
  std::size_t param_count = 0;
};

TimingResult time_inference(nn::Network<float>& net, const MonoSignal& clip, const PipelineConfig& pipeline, int runs);

/// Median wall time of a forward pass over `windows` zero windows.
double time_forward(nn::Network<float>& net, int windows, int runs);

// CSV artifacts. Column schemas are fixed; see the README.
void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& m);
void write_confusion_csv(const std::filesystem::path& path, const MetricsReport& m);
void write_predictions_csv(const std::filesystem::path& path, const EvalResult& r);
void write_snr_csv(const std::filesystem::path& path, const std::vector<SnrRow>& rows);
void write_room_csv(const std::filesystem::path& path, const std::vector<RoomRow>& rows);
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);
void write_kfold_csv(const std::filesystem::path& path, const KfoldResult& r);
void write_timing_csv(const std::filesystem::path& path, const TimingResult& t, const std::string& clip_id);

/// Manifest written beside every artifact set: command, config and its hash,
/// all seeds, clip-set hashes, artifact digests. No timestamps.
nlohmann::json make_manifest(const std::string& command, const Workspace& ws,
                             const std::vector<std::filesystem::path>& artifacts);
void write_manifest(const std::filesystem::path& path, const nlohmann::json& manifest);

/// sha256 of a file's bytes.
std::string file_sha256(const std::filesystem::path& path);

}  // namespace usonic::eval
