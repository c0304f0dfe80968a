#include "usonic/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include "usonic/common/csv.hpp"
#include "usonic/common/error.hpp"
#include "usonic/common/rng.hpp"

namespace usonic::nn {

namespace {

constexpr std::uint64_t kStreamShuffle = 0x73687566;
constexpr char kMagic[8] = {'U', 'S', 'N', 'N', 'W', 'T', '0', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename V>
void put(std::ostream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::istream& in) {
  V v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(V))) throw DataError("truncated weight file");
  return v;
}

}  // namespace

void WindowDataset::add(std::span<const float> window, int label) {
  if (window.size() != window_size()) throw std::invalid_argument("window does not match the dataset shape");
  if (label < 0 || label >= kNumClasses) throw std::out_of_range("label out of range");
  windows.insert(windows.end(), window.begin(), window.end());
  labels.push_back(label);
}

int WindowDataset::distinct_labels() const {
  return static_cast<int>(std::set<int>(labels.begin(), labels.end()).size());
}

int argmax(const ClassProbs& p) {
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

double accuracy(Network<float>& net, const WindowDataset& data) {
  if (data.size() == 0) return 0.0;
  const auto probs = net.predict(data.windows);
  int hits = 0;
  for (int i = 0; i < data.size(); ++i) hits += argmax(probs[static_cast<std::size_t>(i)]) == data.labels[static_cast<std::size_t>(i)];
  return static_cast<double>(hits) / data.size();
}

TrainResult train(Network<float>& net, const EpochData& data, const Validator& validator, const TrainConfig& cfg) {
  if (cfg.batch_size <= 0 || cfg.max_epochs <= 0 || cfg.patience <= 0) {
    throw std::invalid_argument("batch size, epoch limit and patience must be positive");
  }
  const InceptionConfig& arch = net.config();
  TrainResult result;
  std::vector<float> best = net.params().values;
  double best_score = -std::numeric_limits<double>::infinity();
  Tensor4<float> x;
  std::vector<int> batch_labels;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const WindowDataset& ds = data(epoch);
    if (ds.rows != arch.input_height || ds.cols != arch.input_width) {
      throw std::invalid_argument("training windows do not match the network input shape");
    }
    if (ds.distinct_labels() < 2) {
      throw DataError("training data for epoch " + std::to_string(epoch) + " holds " +
                      std::to_string(ds.distinct_labels()) + " class(es); at least two are required");
    }
    std::vector<int> order(static_cast<std::size_t>(ds.size()));
    std::iota(order.begin(), order.end(), 0);
    Engine rng = make_engine(cfg.seed, {kStreamShuffle, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    int hits = 0;
    const std::size_t wsz = ds.window_size();
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t nb = std::min(order.size() - start, static_cast<std::size_t>(cfg.batch_size));
      x.resize(static_cast<int>(nb), arch.input_height, arch.input_width, 1);
      batch_labels.resize(nb);
      for (std::size_t i = 0; i < nb; ++i) {
        const int idx = order[start + i];
        const auto w = ds.window(idx);
        std::copy(w.begin(), w.end(), x.data.begin() + static_cast<std::ptrdiff_t>(i * wsz));
        batch_labels[i] = ds.labels[static_cast<std::size_t>(idx)];
      }
      const auto& probs = net.forward(x, Mode::Train);
      const double loss = net.loss(batch_labels);
      if (!std::isfinite(loss)) throw NumericalError("non-finite training loss in epoch " + std::to_string(epoch));
      loss_sum += loss * static_cast<double>(nb);
      for (std::size_t i = 0; i < nb; ++i) hits += argmax(probs[i]) == batch_labels[i];
      net.backward(batch_labels);
      adam_step(net.params(), cfg.adam);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_acc = static_cast<double>(hits) / static_cast<double>(order.size());
    rec.val_acc = validator(net);
    result.history.push_back(rec);
    if (rec.val_acc > best_score) {
      best_score = rec.val_acc;
      result.best_epoch = epoch;
      best = net.params().values;
    } else if (epoch - result.best_epoch >= cfg.patience) {
      break;
    }
  }
  net.params().values = best;
  result.best_val_acc = best_score;
  return result;
}

TrainResult train(Network<float>& net, const WindowDataset& data, const WindowDataset& val, const TrainConfig& cfg) {
  return train(
      net, [&data](int) -> const WindowDataset& { return data; },
      [&val](Network<float>& n) { return accuracy(n, val); }, cfg);
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  CsvWriter csv(path, {"epoch", "train_loss", "train_acc", "val_acc"});
  for (const auto& r : history) csv.row(r.epoch, r.train_loss, r.train_acc, r.val_acc);
}

void save_weights(const std::filesystem::path& path, const Network<float>& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write weight file " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put(out, kVersion);
  const std::string arch = to_json(net.config()).dump();
  put(out, static_cast<std::uint32_t>(arch.size()));
  out.write(arch.data(), static_cast<std::streamsize>(arch.size()));
  const auto& manifest = net.params().manifest();
  put(out, static_cast<std::uint32_t>(manifest.size()));
  for (const auto& e : manifest) {
    put(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put(out, static_cast<std::uint8_t>(e.trainable));
    put(out, static_cast<std::uint32_t>(e.shape.size()));
    for (int d : e.shape) put(out, static_cast<std::int32_t>(d));
  }
  const auto& values = net.params().values;
  put(out, static_cast<std::uint64_t>(values.size()));
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!out) throw DataError("failed writing weight file " + path.string());
}

Network<float> load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open weight file " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError(path.string() + " is not a weight file");
  }
  if (get<std::uint32_t>(in) != kVersion) throw DataError("unsupported weight file version in " + path.string());
  std::string arch(get<std::uint32_t>(in), '\0');
  if (!in.read(arch.data(), static_cast<std::streamsize>(arch.size()))) throw DataError("truncated weight file");
  InceptionConfig cfg;
  try {
    cfg = inception_config_from_json(nlohmann::json::parse(arch));
  } catch (const std::exception& e) {
    throw DataError("bad architecture block in " + path.string() + ": " + e.what());
  }
  Network<float> net(cfg);
  const auto& manifest = net.params().manifest();
  const auto count = get<std::uint32_t>(in);
  if (count != manifest.size()) throw DataError("weight file manifest does not match its architecture");
  for (const auto& e : manifest) {
    std::string name(get<std::uint32_t>(in), '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name.size()))) throw DataError("truncated weight file");
    const bool trainable = get<std::uint8_t>(in) != 0;
    std::vector<int> shape(get<std::uint32_t>(in));
    for (int& d : shape) d = get<std::int32_t>(in);
    if (name != e.name || trainable != e.trainable || shape != e.shape) {
      throw DataError("weight file entry " + name + " does not match the architecture");
    }
  }
  if (get<std::uint64_t>(in) != net.params().values.size()) throw DataError("weight file value count mismatch");
  auto& values = net.params().values;
  if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)))) {
    throw DataError("truncated weight payload in " + path.string());
  }
  return net;
}

}  // namespace usonic::nn
