#include "usonic/eval/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "usonic/common/csv.hpp"
#include "usonic/common/error.hpp"
#include "usonic/common/rng.hpp"
#include "usonic/common/sha256.hpp"

namespace usonic::eval {

namespace {

constexpr std::uint64_t kStreamWindows = 0x77696e64;
constexpr std::uint64_t kStreamFolds = 0x666f6c64;

using Clock = std::chrono::steady_clock;

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string room_name(const std::array<double, 3>& d) {
  return format_number(d[0]) + "x" + format_number(d[1]) + "x" + format_number(d[2]);
}

}  // namespace

features::Spectrogram normalized_spectrogram(const MonoSignal& signal, const features::FeatureParams& params) {
  params.validate();
  return features::normalize_minmax(
      features::bandpass_bins(features::stft(signal, params.stft), params.band_lo_hz, params.band_hi_hz));
}

void gamma_window(const features::Spectrogram& normalized, int origin_frame, int win_frames, double gamma,
                  std::span<float> out) {
  features::extract_window(normalized, origin_frame, win_frames, out);
  if (gamma == 1.0) return;
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("gamma must be positive");
  for (float& v : out) {
    if (v < 0.0f || v > 1.0f) throw std::invalid_argument("gamma correction expects values in [0, 1]");
    v = static_cast<float>(std::pow(static_cast<double>(v), gamma));
  }
}

ClipPrediction classify_spectrogram(const features::Spectrogram& normalized, nn::Network<float>& net,
                                    const PipelineConfig& pipeline) {
  const features::FeatureParams& fp = pipeline.features;
  const int count = features::window_count(normalized.num_frames, fp.win_frames, fp.hop_frames);
  if (count < 1) throw std::invalid_argument("clip too short for a single window");
  if (normalized.num_bins != net.config().input_height) {
    throw std::invalid_argument("spectrogram has " + std::to_string(normalized.num_bins) + " bins, the network expects " +
                                std::to_string(net.config().input_height));
  }
  const std::size_t wsz = static_cast<std::size_t>(normalized.num_bins) * static_cast<std::size_t>(fp.win_frames);
  std::vector<float> windows(wsz * static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    gamma_window(normalized, i * fp.hop_frames, fp.win_frames, fp.gamma,
                 std::span<float>(windows.data() + static_cast<std::size_t>(i) * wsz, wsz));
  }
  const auto probs = net.predict(windows);
  ClipPrediction out;
  out.num_windows = count;
  out.intervals = aggregate_interval(probs, interval_assignment(count, fp, pipeline.interval_s));
  out.clip_label = majority_label(out.intervals);
  return out;
}

ClipPrediction classify_clip(const MonoSignal& beamformed, nn::Network<float>& net, const PipelineConfig& pipeline) {
  return classify_spectrogram(normalized_spectrogram(beamformed, pipeline.features), net, pipeline);
}

ClipPrediction classify_clip(const scene::MultichannelRecording& rec, const beamform::SteeringDirection& dir,
                             nn::Network<float>& net, const PipelineConfig& pipeline) {
  const MonoSignal y = beamform::delay_and_sum(rec, dir, beamform::BeamWeights::uniform(rec.num_channels()));
  return classify_clip(y, net, pipeline);
}

EvalResult summarize(std::vector<ClipOutcome> outcomes) {
  if (outcomes.empty()) throw std::invalid_argument("nothing to summarise");
  std::vector<int> ip, it, cp, ct;
  for (const ClipOutcome& o : outcomes) {
    for (const IntervalPrediction& i : o.prediction.intervals) {
      ip.push_back(i.label);
      it.push_back(o.truth);
    }
    cp.push_back(o.prediction.clip_label);
    ct.push_back(o.truth);
  }
  EvalResult r;
  r.intervals = metrics(ip, it);
  r.clips = metrics(cp, ct);
  r.outcomes = std::move(outcomes);
  return r;
}

Workspace::Workspace(ExperimentConfig cfg, std::filesystem::path cache_root)
    : cfg_(std::move(cfg)),
      corpus_(build_corpus(cfg_)),
      split_(split_corpus(corpus_, cfg_.dataset)),
      cache_(std::move(cache_root) / "components", cfg_) {
  assert_no_leakage(corpus_, split_);
}

const features::Spectrogram& Workspace::train_spectrogram(int clip) {
  auto it = memo_.find(clip);
  if (it != memo_.end()) return it->second;
  return memo_.emplace(clip, spectrogram_at(clip, cfg_.dataset.train_snr_db)).first->second;
}

features::Spectrogram Workspace::spectrogram_at(int clip, double snr_db) {
  if (snr_db == cfg_.dataset.train_snr_db) {
    auto it = memo_.find(clip);
    if (it != memo_.end()) return it->second;
  }
  const BeamComponents bc = components(clip);
  const ClipInfo& info = corpus_.at(static_cast<std::size_t>(clip));
  return normalized_spectrogram(mix_at_snr(bc.clean, bc.noise, snr_db, bc.sample_rate_hz, info.label),
                                cfg_.pipeline.features);
}

TrainedModel Workspace::train(const Split& split, const nn::InceptionConfig& arch, double gamma) {
  if (split.train.empty() || split.val.empty()) throw DataError("training needs non-empty training and validation sets");
  const features::FeatureParams& fp = cfg_.pipeline.features;
  const int rows = arch.input_height;
  const int cols = fp.win_frames;
  const std::size_t wsz = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  std::vector<float> buf(wsz);

  nn::WindowDataset val{rows, cols, {}, {}};
  for (int c : split.val) {
    const auto& spec = train_spectrogram(c);
    const int count = features::window_count(spec.num_frames, fp.win_frames, fp.hop_frames);
    const int n = std::min(count, cfg_.training.val_windows_per_clip);
    for (int j = 0; j < n; ++j) {
      const int w = n == 1 ? 0 : static_cast<int>(static_cast<long long>(j) * (count - 1) / (n - 1));
      gamma_window(spec, w * fp.hop_frames, fp.win_frames, gamma, buf);
      val.add(buf, index_of(corpus_[static_cast<std::size_t>(c)].label));
    }
  }

  nn::WindowDataset epoch_data{rows, cols, {}, {}};
  auto data = [&](int epoch) -> const nn::WindowDataset& {
    epoch_data.windows.clear();
    epoch_data.labels.clear();
    for (int c : split.train) {
      const auto& spec = train_spectrogram(c);
      const int count = features::window_count(spec.num_frames, fp.win_frames, fp.hop_frames);
      Engine rng = make_engine(cfg_.training.train.seed, {kStreamWindows, static_cast<std::uint64_t>(epoch),
                                                           static_cast<std::uint64_t>(c)});
      std::uniform_int_distribution<int> pick(0, count - 1);
      for (int j = 0; j < cfg_.training.train_windows_per_clip; ++j) {
        gamma_window(spec, pick(rng) * fp.hop_frames, fp.win_frames, gamma, buf);
        epoch_data.add(buf, index_of(corpus_[static_cast<std::size_t>(c)].label));
      }
    }
    return epoch_data;
  };

  TrainedModel m{nn::Network<float>(arch), {}, sha256_of_id_set(clip_ids(corpus_, split.train))};
  m.result = nn::train(
      m.net, data, [&val](nn::Network<float>& net) { return nn::accuracy(net, val); }, cfg_.training.train);
  return m;
}

EvalResult Workspace::evaluate(nn::Network<float>& net, const std::vector<int>& clips, double gamma, double snr_db) {
  PipelineConfig p = cfg_.pipeline;
  p.features.gamma = gamma;
  std::vector<ClipOutcome> out;
  for (int c : clips) {
    const ClipInfo& info = corpus_.at(static_cast<std::size_t>(c));
    out.push_back({info.id, index_of(info.label), classify_spectrogram(spectrogram_at(c, snr_db), net, p)});
  }
  return summarize(std::move(out));
}

std::vector<SnrRow> sweep_snr(Workspace& ws, nn::Network<float>& net, const std::vector<int>& clips) {
  const ExperimentConfig& cfg = ws.config();
  std::vector<SnrRow> rows;
  for (double level : cfg.snr_levels_db) {
    rows.push_back({level, ws.evaluate(net, clips, cfg.pipeline.features.gamma, level)});
  }
  return rows;
}

std::vector<RoomRow> sweep_room(Workspace& ws, nn::Network<float>& net, const std::vector<int>& clips) {
  const ExperimentConfig& cfg = ws.config();
  const RoomSweepConfig& rs = cfg.room_sweep;
  std::vector<RoomRow> rows;
  rows.push_back({"anechoic", "", {}, 1.0, 0, {}});
  for (const auto& dims : rs.rooms) rows.push_back({"room", room_name(dims), dims, rs.absorption, rs.max_image_order, {}});
  // smallest configured room, fully absorbing walls
  const auto smallest = *std::min_element(rs.rooms.begin(), rs.rooms.end(), [](const auto& a, const auto& b) {
    return a[0] * a[1] * a[2] < b[0] * b[1] * b[2];
  });
  rows.push_back({"control", room_name(smallest), smallest, 1.0, rs.max_image_order, {}});

  std::vector<std::vector<ClipOutcome>> outcomes(rows.size());
  PipelineConfig p = cfg.pipeline;
  for (int c : clips) {
    const ClipInfo& info = ws.corpus().at(static_cast<std::size_t>(c));
    const BeamComponents bc = ws.components(c);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      std::optional<scene::RoomSpec> room;
      if (rows[r].condition != "anechoic") room = sweep_room(rows[r].dims, rows[r].absorption, rows[r].max_image_order);
      const auto clean = render_room_clean(info, cfg, room);
      const MonoSignal mixed = mix_at_snr(clean, bc.noise, cfg.dataset.train_snr_db, bc.sample_rate_hz, info.label);
      outcomes[r].push_back({info.id, index_of(info.label),
                             classify_spectrogram(normalized_spectrogram(mixed, p.features), net, p)});
    }
  }
  for (std::size_t r = 0; r < rows.size(); ++r) rows[r].result = summarize(std::move(outcomes[r]));
  return rows;
}

std::vector<AblationRow> ablate(Workspace& ws, TrainedModel* full) {
  const ExperimentConfig& cfg = ws.config();
  const double g = cfg.pipeline.features.gamma;
  struct Variant {
    const char* name;
    bool inception;
    double gamma;
  };
  const Variant variants[] = {{"full", true, g}, {"no_gamma", true, 1.0}, {"no_inception", false, g}, {"no_both", false, 1.0}};
  std::vector<AblationRow> rows;
  for (const Variant& v : variants) {
    const nn::InceptionConfig arch = v.inception ? cfg.model : nn::plain_cnn_config(cfg.model);
    std::optional<TrainedModel> trained;
    TrainedModel* m = nullptr;
    if (full != nullptr && v.inception && v.gamma == g) {
      m = full;
    } else {
      trained.emplace(ws.train(ws.split(), arch, v.gamma));
      m = &*trained;
    }
    AblationRow row;
    row.name = v.name;
    row.inception = v.inception;
    row.gamma = v.gamma;
    row.param_count = m->net.param_count();
    row.train_hash = m->train_hash;
    row.best_epoch = m->result.best_epoch;
    row.result = ws.evaluate(m->net, ws.split().test, v.gamma, cfg.dataset.train_snr_db);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<int> kfold_assign(const std::vector<ClipInfo>& corpus, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("k-fold needs k >= 2");
  std::vector<std::vector<int>> groups(kNumClasses);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    groups[static_cast<std::size_t>(index_of(corpus[i].label))].push_back(static_cast<int>(i));
  }
  std::vector<int> fold(corpus.size(), -1);
  for (int c = 0; c < kNumClasses; ++c) {
    auto& g = groups[static_cast<std::size_t>(c)];
    if (g.empty()) continue;
    if (static_cast<int>(g.size()) < k) {
      throw DataError("class " + std::string(to_string(static_cast<ClassLabel>(c))) + " has " +
                      std::to_string(g.size()) + " clips; " + std::to_string(k) + "-fold needs at least " +
                      std::to_string(k));
    }
    Engine rng = make_engine(seed, {kStreamFolds, static_cast<std::uint64_t>(c)});
    std::shuffle(g.begin(), g.end(), rng);
    for (std::size_t j = 0; j < g.size(); ++j) fold[static_cast<std::size_t>(g[j])] = static_cast<int>(j % static_cast<std::size_t>(k));
  }
  return fold;
}

KfoldResult kfold(Workspace& ws) {
  const ExperimentConfig& cfg = ws.config();
  const auto& corpus = ws.corpus();
  const int k = cfg.kfold.k;
  const auto fold = kfold_assign(corpus, k, cfg.kfold.seed);
  KfoldResult out;
  std::vector<int> covered(corpus.size(), 0);
  for (int f = 0; f < k; ++f) {
    std::vector<int> test, pool;
    for (std::size_t i = 0; i < corpus.size(); ++i) (fold[i] == f ? test : pool).push_back(static_cast<int>(i));
    for (int i : test) ++covered[static_cast<std::size_t>(i)];
    const Split split = carve_validation(corpus, pool, test, cfg.dataset.val_fraction,
                                         cfg.kfold.seed + static_cast<std::uint64_t>(f));
    assert_no_leakage(corpus, split);
    TrainedModel m = ws.train(split, cfg.model, cfg.pipeline.features.gamma);
    FoldRow row;
    row.fold = f;
    row.test_clips = static_cast<int>(test.size());
    row.best_epoch = m.result.best_epoch;
    row.result = ws.evaluate(m.net, test, cfg.pipeline.features.gamma, cfg.dataset.train_snr_db);
    out.folds.push_back(std::move(row));
  }
  if (std::any_of(covered.begin(), covered.end(), [](int c) { return c != 1; })) {
    throw std::logic_error("k-fold test sets do not partition the corpus");
  }
  std::vector<double> f1;
  for (const auto& r : out.folds) {
    f1.push_back(r.result.intervals.macro_f1);
    out.mean_accuracy += r.result.intervals.accuracy / k;
  }
  out.mean_f1 = std::accumulate(f1.begin(), f1.end(), 0.0) / k;
  double var = 0.0;
  for (double v : f1) var += (v - out.mean_f1) * (v - out.mean_f1);
  out.std_f1 = std::sqrt(var / k);
  out.min_f1 = *std::min_element(f1.begin(), f1.end());
  out.max_f1 = *std::max_element(f1.begin(), f1.end());
  return out;
}

TimingResult time_inference(nn::Network<float>& net, const MonoSignal& clip, const PipelineConfig& pipeline, int runs) {
  if (runs < 1) throw std::invalid_argument("timing needs at least one run");
  TimingResult t;
  t.param_count = net.param_count();
  const features::FeatureParams& fp = pipeline.features;
  for (int r = 0; r < runs; ++r) {
    const auto start = Clock::now();
    const features::Spectrogram spec = features::prepare(clip, fp);
    const features::WindowBatch batch = features::slide(spec, fp.win_frames, fp.hop_frames);
    const auto probs = net.predict(batch.data);
    const auto intervals = aggregate_interval(probs, interval_assignment(batch.count, fp, pipeline.interval_s));
    const volatile int label = majority_label(intervals);
    (void)label;
    t.runs_s.push_back(std::chrono::duration<double>(Clock::now() - start).count());
    t.windows = batch.count;
  }
  t.median_s = median(t.runs_s);
  return t;
}

double time_forward(nn::Network<float>& net, int windows, int runs) {
  const auto& c = net.config();
  std::vector<float> data(static_cast<std::size_t>(windows) * static_cast<std::size_t>(c.input_height) *
                          static_cast<std::size_t>(c.input_width), 0.0f);
  std::vector<double> t;
  for (int r = 0; r < runs; ++r) {
    const auto start = Clock::now();
    const auto probs = net.predict(data);
    t.push_back(std::chrono::duration<double>(Clock::now() - start).count());
  }
  return median(t);
}

void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& m) {
  CsvWriter csv(path, {"class", "precision", "recall", "f1", "support", "predicted", "precision_undefined",
                       "recall_undefined", "f1_undefined"});
  for (int c = 0; c < kNumClasses; ++c) {
    const ClassMetrics& r = m.per_class[static_cast<std::size_t>(c)];
    csv.row(to_string(static_cast<ClassLabel>(c)), r.precision, r.recall, r.f1, r.support, r.predicted,
            int(r.precision_undefined), int(r.recall_undefined), int(r.f1_undefined));
  }
  csv.row("macro", m.macro_precision, m.macro_recall, m.macro_f1, m.total, m.total, 0, 0, 0);
  csv.row("accuracy", m.accuracy, m.accuracy, m.accuracy, m.total, m.total, 0, 0, 0);
}

void write_confusion_csv(const std::filesystem::path& path, const MetricsReport& m) {
  std::vector<std::string> header{"truth"};
  for (ClassLabel c : kAllClasses) header.emplace_back(to_string(c));
  CsvWriter csv(path, header);
  for (int t = 0; t < kNumClasses; ++t) {
    std::vector<std::string> row{std::string(to_string(static_cast<ClassLabel>(t)))};
    for (int p = 0; p < kNumClasses; ++p) row.push_back(std::to_string(m.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)]));
    csv.row_strings(row);
  }
}

void write_predictions_csv(const std::filesystem::path& path, const EvalResult& r) {
  CsvWriter csv(path, {"clip_id", "truth", "predicted", "intervals", "windows", "interval_accuracy"});
  for (const ClipOutcome& o : r.outcomes) {
    int hits = 0;
    for (const auto& i : o.prediction.intervals) hits += i.label == o.truth;
    csv.row(o.id, to_string(static_cast<ClassLabel>(o.truth)), to_string(static_cast<ClassLabel>(o.prediction.clip_label)),
            static_cast<int>(o.prediction.intervals.size()), o.prediction.num_windows,
            static_cast<double>(hits) / static_cast<double>(o.prediction.intervals.size()));
  }
}

void write_snr_csv(const std::filesystem::path& path, const std::vector<SnrRow>& rows) {
  CsvWriter csv(path, {"snr_db", "macro_precision", "macro_recall", "macro_f1", "accuracy", "clip_accuracy", "intervals"});
  for (const SnrRow& r : rows) {
    const MetricsReport& m = r.result.intervals;
    csv.row(r.snr_db, m.macro_precision, m.macro_recall, m.macro_f1, m.accuracy, r.result.clips.accuracy, m.total);
  }
}

void write_room_csv(const std::filesystem::path& path, const std::vector<RoomRow>& rows) {
  CsvWriter csv(path, {"condition", "room", "absorption", "max_image_order", "macro_precision", "macro_recall",
                       "macro_f1", "accuracy", "clip_accuracy", "intervals"});
  for (const RoomRow& r : rows) {
    const MetricsReport& m = r.result.intervals;
    csv.row(r.condition, r.room, r.absorption, r.max_image_order, m.macro_precision, m.macro_recall, m.macro_f1,
            m.accuracy, r.result.clips.accuracy, m.total);
  }
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
  CsvWriter csv(path, {"config", "inception", "gamma", "param_count", "train_set_sha256", "best_epoch",
                       "macro_precision", "macro_recall", "macro_f1", "accuracy", "clip_accuracy"});
  for (const AblationRow& r : rows) {
    const MetricsReport& m = r.result.intervals;
    csv.row(r.name, int(r.inception), r.gamma, r.param_count, r.train_hash, r.best_epoch, m.macro_precision,
            m.macro_recall, m.macro_f1, m.accuracy, r.result.clips.accuracy);
  }
}

void write_kfold_csv(const std::filesystem::path& path, const KfoldResult& r) {
  CsvWriter csv(path, {"fold", "test_clips", "best_epoch", "macro_precision", "macro_recall", "macro_f1", "accuracy"});
  for (const FoldRow& f : r.folds) {
    const MetricsReport& m = f.result.intervals;
    csv.row(std::to_string(f.fold), f.test_clips, f.best_epoch, m.macro_precision, m.macro_recall, m.macro_f1, m.accuracy);
  }
  // summary rows leave the per-fold columns empty
  csv.row_strings({"mean", "", "", "", "", format_number(r.mean_f1), format_number(r.mean_accuracy)});
  csv.row_strings({"std", "", "", "", "", format_number(r.std_f1), ""});
  csv.row_strings({"min", "", "", "", "", format_number(r.min_f1), ""});
  csv.row_strings({"max", "", "", "", "", format_number(r.max_f1), ""});
}

void write_timing_csv(const std::filesystem::path& path, const TimingResult& t, const std::string& clip_id) {
  CsvWriter csv(path, {"clip_id", "windows", "runs", "median_s", "min_s", "max_s", "param_count"});
  csv.row(clip_id, t.windows, static_cast<int>(t.runs_s.size()), t.median_s,
          *std::min_element(t.runs_s.begin(), t.runs_s.end()), *std::max_element(t.runs_s.begin(), t.runs_s.end()),
          t.param_count);
}

std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

nlohmann::json make_manifest(const std::string& command, const Workspace& ws,
                             const std::vector<std::filesystem::path>& artifacts) {
  const ExperimentConfig& cfg = ws.config();
  const auto& corpus = ws.corpus();
  std::vector<int> all(corpus.size());
  std::iota(all.begin(), all.end(), 0);
  nlohmann::json files = nlohmann::json::object();
  for (const auto& a : artifacts) files[a.filename().string()] = file_sha256(a);
  return {{"command", command},
          {"config_sha256", config_hash(cfg)},
          {"config", to_json(cfg)},
          {"seeds",
           {{"dataset", cfg.dataset.seed},
            {"training", cfg.training.train.seed},
            {"model_init", cfg.model.init_seed},
            {"kfold", cfg.kfold.seed}}},
          {"clip_sets",
           {{"corpus_sha256", sha256_of_id_set(clip_ids(corpus, all))},
            {"train_sha256", sha256_of_id_set(clip_ids(corpus, ws.split().train))},
            {"val_sha256", sha256_of_id_set(clip_ids(corpus, ws.split().val))},
            {"test_sha256", sha256_of_id_set(clip_ids(corpus, ws.split().test))},
            {"train_clips", ws.split().train.size()},
            {"val_clips", ws.split().val.size()},
            {"test_clips", ws.split().test.size()}}},
          {"artifacts", files}};
}

void write_manifest(const std::filesystem::path& path, const nlohmann::json& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << manifest.dump(2) << "\n";
}

}  // namespace usonic::eval
