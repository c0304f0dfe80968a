#include "usonic/cli/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "usonic/beamform/beamform.hpp"
#include "usonic/common/error.hpp"
#include "usonic/common/wav.hpp"
#include "usonic/eval/experiment.hpp"
#include "usonic/features/features.hpp"
#include "usonic/nn/train.hpp"
#include "usonic/scene/scene.hpp"
#include "usonic/synth/synth.hpp"

namespace usonic::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Context {
  const eval::ExperimentConfig& cfg;
  const RunOptions& opts;
  eval::Workspace ws;

  Context(const eval::ExperimentConfig& c, const RunOptions& o) : cfg(c), opts(o), ws(c, o.out / c.cache_dir) {}

  fs::path dir(const std::string& name) const {
    const fs::path d = opts.out / name;
    fs::create_directories(d);
    return d;
  }

  // Corpus indices a per-clip subcommand works on.
  std::vector<int> selected() const {
    const int n = static_cast<int>(ws.corpus().size());
    const int k = opts.limit < 0 ? n : std::min(n, opts.limit);
    std::vector<int> idx(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = i;
    return idx;
  }

  void manifest(const std::string& command, const fs::path& d, const std::vector<fs::path>& artifacts,
                json extra = json::object()) const {
    json m = eval::make_manifest(command, ws, artifacts);
    for (auto& [k, v] : extra.items()) m[k] = v;
    eval::write_manifest(d / "manifest.json", m);
  }
};

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("missing input " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  out << j.dump(2) << "\n";
}

nn::Network<float> load_model(const Context& ctx) {
  const fs::path w = ctx.opts.out / "train" / "weights.bin";
  if (!fs::exists(w)) throw DataError("missing input " + w.string() + " (run the train subcommand first)");
  nn::Network<float> net = nn::load_weights(w);
  if (nn::to_json(net.config()) != nn::to_json(ctx.cfg.model)) {
    throw DataError(w.string() + " was trained with a different model configuration");
  }
  return net;
}

void cmd_synth(Context& ctx) {
  const fs::path d = ctx.dir("synth");
  std::vector<fs::path> artifacts;
  for (int i : ctx.selected()) {
    const eval::ClipInfo& c = ctx.ws.corpus()[static_cast<std::size_t>(i)];
    synth::write_clip(d / c.id, synth::synthesize(c.source), c.source);
    artifacts.push_back(d / (c.id + ".wav"));
    artifacts.push_back(d / (c.id + ".json"));
  }
  ctx.manifest("synth", d, artifacts);
}

void cmd_render(Context& ctx) {
  const eval::DatasetConfig& ds = ctx.cfg.dataset;
  const fs::path d = ctx.dir("render");
  const scene::ArrayGeometry geom = eval::config_geometry(ds);
  std::vector<fs::path> artifacts;
  std::vector<beamform::Detection> dets;
  json index = json::array();
  for (int i : ctx.selected()) {
    const eval::ClipInfo& c = ctx.ws.corpus()[static_cast<std::size_t>(i)];
    const MonoSignal src = synth::synthesize(c.source);
    WavData wav;
    wav.sample_rate_hz = ds.sample_rate_hz;
    std::vector<double> ch(src.samples.size());
    // one channel at a time: a 112-channel clip in double would not fit comfortably
    for (int m = 0; m < geom.size(); ++m) {
      std::fill(ch.begin(), ch.end(), 0.0);
      accumulate_fir(src.samples, scene::propagation_taps(c.source_pos, geom, m, ds.sample_rate_hz, std::nullopt), ch);
      if (ds.noise_stage == eval::NoiseStage::PreBeamform) {
        const double p = mean_power(ch) / std::pow(10.0, ds.train_snr_db / 10.0);
        const auto nz = scene::channel_noise(ch.size(), m, p, ds.noise_kind, c.noise_seed, ds.sample_rate_hz);
        for (std::size_t t = 0; t < ch.size(); ++t) ch[t] += nz[t];
      }
      wav.channels.emplace_back(ch.begin(), ch.end());
    }
    write_wav_f32(d / (c.id + ".wav"), wav);
    json side = eval::to_json(c);
    side["geometry"] = scene::to_json(geom);
    side["snr_db"] = ds.train_snr_db;
    side["noise_stage"] = std::string(eval::to_string(ds.noise_stage));
    write_json(d / (c.id + ".json"), side);
    artifacts.push_back(d / (c.id + ".wav"));
    artifacts.push_back(d / (c.id + ".json"));
    dets.push_back(c.detection);
    index.push_back(c.id);
  }
  beamform::write_detections(d / "detections.json", dets);
  write_json(d / "index.json", index);
  artifacts.push_back(d / "detections.json");
  ctx.manifest("render", d, artifacts);
}

void cmd_beamform(Context& ctx) {
  const eval::DatasetConfig& ds = ctx.cfg.dataset;
  const fs::path in = ctx.opts.out / "render";
  const json index = read_json(in / "index.json");
  const auto dets = beamform::read_detections(in / "detections.json");
  if (dets.size() != index.size()) throw DataError("detections.json and index.json disagree on the clip count");
  const fs::path d = ctx.dir("beamform");
  const scene::ArrayGeometry geom = eval::config_geometry(ds);
  std::vector<fs::path> artifacts;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const std::string id = index[i].get<std::string>();
    const WavData wav = read_wav(in / (id + ".wav"));
    if (static_cast<int>(wav.channels.size()) != geom.size()) {
      throw DataError(id + ".wav has " + std::to_string(wav.channels.size()) + " channels, the array has " +
                      std::to_string(geom.size()));
    }
    const auto dir = beamform::pixel_to_steering(dets[i].px, dets[i].py, ctx.cfg.camera);
    const std::size_t n = wav.num_frames();
    const beamform::BeamAccumulator acc(geom, dir, beamform::BeamWeights::uniform(geom.size()), wav.sample_rate_hz, n);
    std::vector<double> y(n, 0.0);
    std::vector<double> ch(n);
    for (int m = 0; m < geom.size(); ++m) {
      const auto& src = wav.channels[static_cast<std::size_t>(m)];
      std::copy(src.begin(), src.end(), ch.begin());
      acc.add_channel(m, ch, y);
    }
    if (ds.noise_stage == eval::NoiseStage::PostBeamform) {
      const auto it = std::find_if(ctx.ws.corpus().begin(), ctx.ws.corpus().end(),
                                   [&](const eval::ClipInfo& c) { return c.id == id; });
      if (it == ctx.ws.corpus().end()) throw DataError("clip " + id + " is not part of the configured corpus");
      const double p = mean_power(y) / std::pow(10.0, ds.train_snr_db / 10.0);
      const auto nz = scene::channel_noise(n, geom.size(), p, ds.noise_kind, it->noise_seed, wav.sample_rate_hz);
      for (std::size_t t = 0; t < n; ++t) y[t] += nz[t];
    }
    WavData out;
    out.sample_rate_hz = wav.sample_rate_hz;
    out.channels.emplace_back(y.begin(), y.end());
    write_wav_f32(d / (id + ".wav"), out);
    artifacts.push_back(d / (id + ".wav"));
  }
  ctx.manifest("beamform", d, artifacts);
}

void cmd_features(Context& ctx) {
  const fs::path in = ctx.opts.out / "beamform";
  const json index = read_json(ctx.opts.out / "render" / "index.json");
  const fs::path d = ctx.dir("features");
  const features::FeatureParams& fp = ctx.cfg.pipeline.features;
  std::vector<fs::path> artifacts;
  for (const auto& entry : index) {
    const std::string id = entry.get<std::string>();
    const fs::path wav_path = in / (id + ".wav");
    if (!fs::exists(wav_path)) throw DataError("missing input " + wav_path.string() + " (run beamform first)");
    const WavData wav = read_wav(wav_path);
    if (wav.channels.size() != 1) throw DataError(wav_path.string() + " is not mono");
    MonoSignal s;
    s.sample_rate_hz = wav.sample_rate_hz;
    s.samples.assign(wav.channels[0].begin(), wav.channels[0].end());
    const features::Spectrogram spec = features::prepare(s, fp);
    const features::WindowBatch batch = features::slide(spec, fp.win_frames, fp.hop_frames);
    features::write_feature_file(d / (id + ".feat"), features::to_file(batch, spec, fp.gamma));
    artifacts.push_back(d / (id + ".feat"));
  }
  ctx.manifest("features", d, artifacts);
}

void cmd_train(Context& ctx) {
  const fs::path d = ctx.dir("train");
  eval::TrainedModel m = ctx.ws.train(ctx.ws.split(), ctx.cfg.model, ctx.cfg.pipeline.features.gamma);
  nn::save_weights(d / "weights.bin", m.net);
  nn::write_history_csv(d / "history.csv", m.result.history);
  ctx.manifest("train", d, {d / "weights.bin", d / "history.csv"},
               {{"best_epoch", m.result.best_epoch}, {"param_count", m.net.param_count()}});
}

void cmd_eval(Context& ctx) {
  nn::Network<float> net = load_model(ctx);
  const fs::path d = ctx.dir("eval");
  const eval::EvalResult r =
      ctx.ws.evaluate(net, ctx.ws.split().test, ctx.cfg.pipeline.features.gamma, ctx.cfg.dataset.train_snr_db);
  eval::write_metrics_csv(d / "metrics.csv", r.intervals);
  eval::write_metrics_csv(d / "clip_metrics.csv", r.clips);
  eval::write_confusion_csv(d / "confusion.csv", r.intervals);
  eval::write_predictions_csv(d / "predictions.csv", r);
  ctx.manifest("eval", d, {d / "metrics.csv", d / "clip_metrics.csv", d / "confusion.csv", d / "predictions.csv"});
}

void cmd_kfold(Context& ctx) {
  const fs::path d = ctx.dir("kfold");
  const eval::KfoldResult r = eval::kfold(ctx.ws);
  eval::write_kfold_csv(d / "kfold.csv", r);
  ctx.manifest("kfold", d, {d / "kfold.csv"});
}

void cmd_sweep_snr(Context& ctx) {
  nn::Network<float> net = load_model(ctx);
  const fs::path d = ctx.dir("sweep_snr");
  eval::write_snr_csv(d / "snr.csv", eval::sweep_snr(ctx.ws, net, ctx.ws.split().test));
  ctx.manifest("sweep-snr", d, {d / "snr.csv"});
}

void cmd_sweep_room(Context& ctx) {
  nn::Network<float> net = load_model(ctx);
  const fs::path d = ctx.dir("sweep_room");
  eval::write_room_csv(d / "room.csv", eval::sweep_room(ctx.ws, net, ctx.ws.split().test));
  ctx.manifest("sweep-room", d, {d / "room.csv"});
}

void cmd_ablate(Context& ctx) {
  const fs::path d = ctx.dir("ablate");
  eval::write_ablation_csv(d / "ablation.csv", eval::ablate(ctx.ws));
  ctx.manifest("ablate", d, {d / "ablation.csv"});
}

void cmd_time(Context& ctx) {
  nn::Network<float> net = load_model(ctx);
  const fs::path d = ctx.dir("time");
  const int clip = ctx.ws.split().test.front();
  const eval::ClipInfo& info = ctx.ws.corpus()[static_cast<std::size_t>(clip)];
  const eval::BeamComponents bc = ctx.ws.components(clip);
  const MonoSignal y = eval::mix_at_snr(bc.clean, bc.noise, ctx.cfg.dataset.train_snr_db, bc.sample_rate_hz, info.label);
  const eval::TimingResult t = eval::time_inference(net, y, ctx.cfg.pipeline, ctx.cfg.timing_runs);
  eval::write_timing_csv(d / "timing.csv", t, info.id);
  // wall-clock values differ between runs, so the table is not digested
  ctx.manifest("time", d, {}, {{"nondeterministic_artifacts", {"timing.csv"}}});
}

using Handler = void (*)(Context&);

const std::vector<std::pair<std::string, Handler>>& handlers() {
  static const std::vector<std::pair<std::string, Handler>> h = {
      {"synth", cmd_synth},   {"render", cmd_render},       {"beamform", cmd_beamform},     {"features", cmd_features},
      {"train", cmd_train},   {"eval", cmd_eval},           {"kfold", cmd_kfold},           {"sweep-snr", cmd_sweep_snr},
      {"sweep-room", cmd_sweep_room}, {"ablate", cmd_ablate}, {"time", cmd_time}};
  return h;
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [name, fn] : handlers()) n.push_back(name);
    return n;
  }();
  return names;
}

void run(const std::string& subcommand, const eval::ExperimentConfig& cfg, const RunOptions& opts) {
  for (const auto& [name, fn] : handlers()) {
    if (name == subcommand) {
      cfg.validate();
      Context ctx(cfg, opts);
      fn(ctx);
      return;
    }
  }
  throw std::invalid_argument("unknown subcommand '" + subcommand + "'");
}

int run_main(int argc, char** argv) {
  CLI::App app{"Ultrasonic hazard detection: scene synthesis, beamforming, features, CNN training and evaluation"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out = "out";
  std::vector<std::string> overrides;
  int limit = -1;
  for (const std::string& name : subcommands()) {
    CLI::App* sub = app.add_subcommand(name, "run the " + name + " stage");
    sub->add_option("config", config_path, "JSON config file (defaults apply when omitted)");
    sub->add_option("--out", out, "output root; every artifact path is relative to it");
    sub->add_option("--set", overrides, "override a config value, e.g. --set training.max_epochs=20");
    sub->add_option("--limit", limit, "render/beamform/synth: first N clips only");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  const std::string sub = app.get_subcommands().front()->get_name();
  try {
    eval::ExperimentConfig cfg = config_path.empty() ? eval::ExperimentConfig{} : eval::load_config(config_path);
    cfg = eval::apply_overrides(cfg, overrides);
    run(sub, cfg, RunOptions{out, limit});
    std::cout << sub << ": wrote " << (fs::path(out)).string() << "\n";
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::out_of_range& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
}

}  // namespace usonic::cli
