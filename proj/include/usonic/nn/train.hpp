#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "usonic/nn/network.hpp"

namespace usonic::nn {

/// Labelled windows stored back to back, each rows x cols, bin-major.
struct WindowDataset {
  int rows = 0;
  int cols = 0;
  std::vector<float> windows;
  std::vector<int> labels;

  int size() const { return static_cast<int>(labels.size()); }
  std::size_t window_size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
  std::span<const float> window(int i) const {
    return {windows.data() + static_cast<std::size_t>(i) * window_size(), window_size()};
  }
  void add(std::span<const float> window, int label);
  /// Number of distinct labels present.
  int distinct_labels() const;
};

struct TrainConfig {
  AdamConfig adam;
  int batch_size = 64;
  int max_epochs = 100;
  int patience = 10;
  std::uint64_t seed = 1;  ///< shuffling stream
};

struct EpochRecord {
  int epoch = 0;  ///< 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_acc = 0.0;
};

/// Supplies the training windows for a given epoch (1-based). The reference
/// must stay valid until the next call.
using EpochData = std::function<const WindowDataset&(int epoch)>;
/// Scores the current parameters; higher is better.
using Validator = std::function<double(Network<float>&)>;

/// Mini-batch Adam on mean cross-entropy. After every epoch the validator is
/// evaluated; training stops once it has not strictly improved for
/// `patience` epochs and the best parameters (including batch-norm running
/// statistics) are restored. Throws DataError if the first epoch's data holds
/// fewer than two classes and NumericalError on a non-finite loss or gradient.
TrainResult train(Network<float>& net, const EpochData& data, const Validator& validator, const TrainConfig& cfg);

/// Fixed training set, validation accuracy on `val`.
TrainResult train(Network<float>& net, const WindowDataset& data, const WindowDataset& val, const TrainConfig& cfg);

/// Fraction of windows whose argmax matches the label (inference mode).
double accuracy(Network<float>& net, const WindowDataset& data);

int argmax(const ClassProbs& p);

/// epoch,train_loss,train_acc,val_acc
void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

/// Weight file: magic, version, architecture JSON, manifest, float32 values.
void save_weights(const std::filesystem::path& path, const Network<float>& net);
/// Throws DataError on a malformed file or a manifest that does not match the
/// stored architecture.
Network<float> load_weights(const std::filesystem::path& path);

}  // namespace usonic::nn
