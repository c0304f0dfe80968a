#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "usonic/nn/layers.hpp"
#include "usonic/nn/params.hpp"
#include "usonic/nn/tensor.hpp"

namespace usonic::nn {

/// Where batch norm sits inside an Inception path.
enum class StageOrder {
  Printed,       ///< conv -> ReLU -> pool -> BN -> 1x1 proj -> ReLU
  Conventional,  ///< conv -> BN -> ReLU -> pool -> 1x1 proj -> ReLU
};

std::string_view to_string(StageOrder order);
StageOrder parse_stage_order(std::string_view name);

/// Architecture of the classifier. Every block has the same paths; a single
/// path with one kernel size is the plain stacked-CNN baseline.
struct InceptionConfig {
  std::vector<int> kernels{1, 3, 5};
  std::vector<int> path_channels{4, 4, 4};
  std::vector<int> proj_channels{4, 4, 4};
  int blocks = 2;
  int mlp_hidden = 7;
  int n_classes = 5;
  int input_height = 150;  ///< frequency bins
  int input_width = 24;    ///< frames
  StageOrder order = StageOrder::Printed;
  double bn_eps = 1e-3;
  double bn_momentum = 0.9;
  std::uint64_t init_seed = 1;

  /// Throws std::invalid_argument for even kernels, mismatched path lists,
  /// n_classes != 5 or an input too small for the pooling chain.
  void validate() const;
  int block_out_channels() const;
  /// Flattened feature length feeding the MLP.
  int flat_size() const;
};

nlohmann::json to_json(const InceptionConfig& cfg);
InceptionConfig inception_config_from_json(const nlohmann::json& j);

/// Plain stacked-CNN counterpart of `cfg`: one 3x3 path per block whose
/// width equals the sum of the Inception path widths.
InceptionConfig plain_cnn_config(const InceptionConfig& cfg);

enum class Mode { Train, Infer };

/// Inception-style classifier over F x W spectrogram windows.
template <typename T>
class Network {
 public:
  enum class StageKind { Conv, Relu, Pool, BatchNorm, Proj };

  struct Stage {
    StageKind kind = StageKind::Conv;
    int k = 1;
    int cin = 0;
    int cout = 0;
    std::size_t weight = 0;  // conv / proj kernel, or BN gamma
    std::size_t bias = 0;    // conv / proj bias, or BN beta
    std::size_t running_mean = 0;
    std::size_t running_var = 0;
    std::vector<int> argmax;
    BatchNormCache<T> bn;
  };

  struct Path {
    std::vector<Stage> stages;
    std::vector<Tensor4<T>> acts;  ///< acts[i] is the output of stages[i]
    std::vector<Tensor4<T>> grads;  ///< grads[i] is dL/d(input of stages[i])
    Tensor4<T> dout;
  };

  struct Block {
    std::vector<Path> paths;
    Tensor4<T> output;  ///< channel concatenation of the path outputs
    Tensor4<T> dinput;
  };

  explicit Network(const InceptionConfig& cfg);

  const InceptionConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  std::size_t param_count() const { return params_.trainable_count(); }

  /// Re-draws all weights (He-uniform) from `seed`; biases and BN shifts 0,
  /// BN scales and running variances 1, running means 0.
  void initialize(std::uint64_t seed);

  /// Input shape (batch, input_height, input_width, 1). Returns the batch of
  /// class probabilities. Training mode uses batch statistics and, unless
  /// `update_running_stats` is false, folds them into the running averages.
  const std::vector<ClassProbs>& forward(const Tensor4<T>& x, Mode mode, bool update_running_stats = true);

  /// Runs one block on an arbitrary input (used by forward and by tests).
  const Tensor4<T>& block_forward(int block, const Tensor4<T>& x, Mode mode, bool update_running_stats = true);
  const Block& block(int i) const { return blocks_.at(static_cast<std::size_t>(i)); }

  /// Mean cross-entropy of the last forward pass against `labels`.
  double loss(std::span<const int> labels) const;

  /// Gradient of the mean batch loss of the last training-mode forward pass.
  /// Overwrites params().grads. If `dinput` is non-null it receives dL/dx.
  /// Throws std::logic_error if no training-mode forward state is held.
  void backward(std::span<const int> labels, Tensor4<T>* dinput = nullptr);

  /// Inference on windows stored back to back (each input_height x
  /// input_width, bin-major), in batches of `batch_size`.
  std::vector<ClassProbs> predict(std::span<const float> windows, int batch_size = 64);
  ClassProbs predict_one(std::span<const float> window);

  /// Hash of every ReLU on/off decision and pooling winner in the last
  /// forward pass; changes when a perturbation crosses a kink.
  std::uint64_t activation_signature() const;

 private:
  static Stage make_stage(StageKind kind, int k, int cin, int cout);
  void build();
  void stage_forward(Stage& s, const Tensor4<T>& in, Tensor4<T>& out, Mode mode, bool update);
  void stage_backward(Stage& s, const Tensor4<T>& in, const Tensor4<T>& out, const Tensor4<T>& dout,
                      Tensor4<T>* din, std::vector<double>& grad);

  InceptionConfig cfg_;
  ParamStore<T> params_;
  std::vector<Block> blocks_;
  std::size_t fc1_w_ = 0, fc1_b_ = 0, fc2_w_ = 0, fc2_b_ = 0;

  Tensor4<T> input_;
  Tensor4<T> dtop_;
  std::vector<T> hidden_pre_;
  std::vector<T> hidden_;
  std::vector<double> logits_;
  std::vector<ClassProbs> probs_;
  bool have_train_state_ = false;
};

}  // namespace usonic::nn
