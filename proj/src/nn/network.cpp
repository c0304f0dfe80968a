#include "usonic/nn/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "usonic/common/rng.hpp"

namespace usonic::nn {

namespace {

constexpr std::uint64_t kStreamInit = 0x696e6974;

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void fnv(std::uint64_t& h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xff;
    h *= 0x100000001b3ULL;
  }
}

}  // namespace

std::string_view to_string(StageOrder order) {
  return order == StageOrder::Printed ? "printed" : "conventional";
}

StageOrder parse_stage_order(std::string_view name) {
  if (name == "printed") return StageOrder::Printed;
  if (name == "conventional") return StageOrder::Conventional;
  throw std::invalid_argument("unknown stage order '" + std::string(name) + "'");
}

void InceptionConfig::validate() const {
  if (kernels.empty()) throw std::invalid_argument("an Inception block needs at least one path");
  if (path_channels.size() != kernels.size() || proj_channels.size() != kernels.size()) {
    throw std::invalid_argument("kernels, path_channels and proj_channels must have equal length");
  }
  for (int k : kernels) {
    if (k <= 0 || k % 2 == 0) throw std::invalid_argument("kernel sizes must be odd and positive, got " + std::to_string(k));
  }
  for (int c : path_channels) {
    if (c <= 0) throw std::invalid_argument("path channels must be positive");
  }
  for (int c : proj_channels) {
    if (c <= 0) throw std::invalid_argument("projection channels must be positive");
  }
  if (blocks <= 0) throw std::invalid_argument("block count must be positive");
  if (mlp_hidden <= 0) throw std::invalid_argument("mlp_hidden must be positive");
  if (n_classes != 5) throw std::invalid_argument("n_classes must be 5");
  if (!(bn_eps > 0.0) || !(bn_momentum >= 0.0 && bn_momentum < 1.0)) throw std::invalid_argument("invalid batch-norm settings");
  int h = input_height;
  int w = input_width;
  for (int b = 0; b < blocks; ++b) {
    if (h < 2 || w < 2) {
      throw std::invalid_argument("input " + std::to_string(input_height) + "x" + std::to_string(input_width) +
                                  " too small for " + std::to_string(blocks) + " pooling stages");
    }
    h /= 2;
    w /= 2;
  }
}

int InceptionConfig::block_out_channels() const {
  return std::accumulate(proj_channels.begin(), proj_channels.end(), 0);
}

int InceptionConfig::flat_size() const {
  int h = input_height;
  int w = input_width;
  for (int b = 0; b < blocks; ++b) {
    h /= 2;
    w /= 2;
  }
  return h * w * block_out_channels();
}

nlohmann::json to_json(const InceptionConfig& cfg) {
  return {{"kernels", cfg.kernels},
          {"path_channels", cfg.path_channels},
          {"proj_channels", cfg.proj_channels},
          {"blocks", cfg.blocks},
          {"mlp_hidden", cfg.mlp_hidden},
          {"n_classes", cfg.n_classes},
          {"input_height", cfg.input_height},
          {"input_width", cfg.input_width},
          {"stage_order", std::string(to_string(cfg.order))},
          {"bn_eps", cfg.bn_eps},
          {"bn_momentum", cfg.bn_momentum},
          {"init_seed", cfg.init_seed}};
}

InceptionConfig inception_config_from_json(const nlohmann::json& j) {
  InceptionConfig c;
  c.kernels = j.value("kernels", c.kernels);
  c.path_channels = j.value("path_channels", c.path_channels);
  c.proj_channels = j.value("proj_channels", c.proj_channels);
  c.blocks = j.value("blocks", c.blocks);
  c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
  c.n_classes = j.value("n_classes", c.n_classes);
  c.input_height = j.value("input_height", c.input_height);
  c.input_width = j.value("input_width", c.input_width);
  c.order = parse_stage_order(j.value("stage_order", std::string(to_string(c.order))));
  c.bn_eps = j.value("bn_eps", c.bn_eps);
  c.bn_momentum = j.value("bn_momentum", c.bn_momentum);
  c.init_seed = j.value("init_seed", c.init_seed);
  c.validate();
  return c;
}

InceptionConfig plain_cnn_config(const InceptionConfig& cfg) {
  InceptionConfig p = cfg;
  p.kernels = {3};
  p.path_channels = {std::accumulate(cfg.path_channels.begin(), cfg.path_channels.end(), 0)};
  p.proj_channels = {cfg.block_out_channels()};
  return p;
}

template <typename T>
Network<T>::Network(const InceptionConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  build();
  initialize(cfg_.init_seed);
}

template <typename T>
typename Network<T>::Stage Network<T>::make_stage(StageKind kind, int k, int cin, int cout) {
  Stage s;
  s.kind = kind;
  s.k = k;
  s.cin = cin;
  s.cout = cout;
  return s;
}

template <typename T>
void Network<T>::build() {
  int cin = 1;
  for (int b = 0; b < cfg_.blocks; ++b) {
    Block block;
    for (std::size_t p = 0; p < cfg_.kernels.size(); ++p) {
      const std::string pre = "block" + std::to_string(b) + ".path" + std::to_string(p) + ".";
      const int k = cfg_.kernels[p];
      const int pc = cfg_.path_channels[p];
      const int oc = cfg_.proj_channels[p];
      Stage conv = make_stage(StageKind::Conv, k, cin, pc);
      conv.weight = params_.add(pre + "conv.kernel", {pc, cin, k, k});
      conv.bias = params_.add(pre + "conv.bias", {pc});
      Stage bn = make_stage(StageKind::BatchNorm, 1, pc, pc);
      bn.weight = params_.add(pre + "bn.gamma", {pc});
      bn.bias = params_.add(pre + "bn.beta", {pc});
      bn.running_mean = params_.add(pre + "bn.running_mean", {pc}, false);
      bn.running_var = params_.add(pre + "bn.running_var", {pc}, false);
      Stage proj = make_stage(StageKind::Proj, 1, pc, oc);
      proj.weight = params_.add(pre + "proj.kernel", {oc, pc, 1, 1});
      proj.bias = params_.add(pre + "proj.bias", {oc});
      const Stage relu = make_stage(StageKind::Relu, 1, pc, pc);
      const Stage pool = make_stage(StageKind::Pool, 2, pc, pc);
      const Stage relu_out = make_stage(StageKind::Relu, 1, oc, oc);
      Path path;
      if (cfg_.order == StageOrder::Printed) {
        path.stages = {conv, relu, pool, bn, proj, relu_out};
      } else {
        path.stages = {conv, bn, relu, pool, proj, relu_out};
      }
      path.acts.resize(path.stages.size());
      path.grads.resize(path.stages.size());
      block.paths.push_back(std::move(path));
    }
    blocks_.push_back(std::move(block));
    cin = cfg_.block_out_channels();
  }
  fc1_w_ = params_.add("fc1.weight", {cfg_.mlp_hidden, cfg_.flat_size()});
  fc1_b_ = params_.add("fc1.bias", {cfg_.mlp_hidden});
  fc2_w_ = params_.add("fc2.weight", {cfg_.n_classes, cfg_.mlp_hidden});
  fc2_b_ = params_.add("fc2.bias", {cfg_.n_classes});
}

template <typename T>
void Network<T>::initialize(std::uint64_t seed) {
  Engine rng = make_engine(seed, {kStreamInit});
  for (std::size_t i = 0; i < params_.manifest().size(); ++i) {
    const ParamEntry& e = params_.entry(i);
    auto v = params_.value(i);
    if (ends_with(e.name, ".kernel") || ends_with(e.name, ".weight")) {
      std::size_t fan_in = 1;
      for (std::size_t d = 1; d < e.shape.size(); ++d) fan_in *= static_cast<std::size_t>(e.shape[d]);
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (T& x : v) x = static_cast<T>(uniform(rng, -limit, limit));
    } else if (ends_with(e.name, ".gamma") || ends_with(e.name, ".running_var")) {
      std::fill(v.begin(), v.end(), T(1));
    } else {
      std::fill(v.begin(), v.end(), T(0));
    }
  }
  std::fill(params_.adam_m.begin(), params_.adam_m.end(), T(0));
  std::fill(params_.adam_v.begin(), params_.adam_v.end(), T(0));
  params_.adam_step = 0;
  params_.zero_grads();
  have_train_state_ = false;
}

template <typename T>
void Network<T>::stage_forward(Stage& s, const Tensor4<T>& in, Tensor4<T>& out, Mode mode, bool update) {
  switch (s.kind) {
    case StageKind::Conv:
    case StageKind::Proj:
      conv2d_forward<T>(in, params_.value(s.weight), params_.value(s.bias), s.cout, s.k, Padding::Same, out);
      break;
    case StageKind::Relu:
      relu_forward(in, out);
      break;
    case StageKind::Pool:
      maxpool2_forward(in, out, s.argmax);
      break;
    case StageKind::BatchNorm:
      if (mode == Mode::Train) {
        std::vector<double> mean;
        std::vector<double> var;
        batchnorm_forward_train<T>(in, params_.value(s.weight), params_.value(s.bias), cfg_.bn_eps, out, s.bn, mean, var);
        if (update) {
          auto rm = params_.value(s.running_mean);
          auto rv = params_.value(s.running_var);
          const double m = cfg_.bn_momentum;
          for (std::size_t c = 0; c < rm.size(); ++c) {
            rm[c] = static_cast<T>(m * rm[c] + (1.0 - m) * mean[c]);
            rv[c] = static_cast<T>(m * rv[c] + (1.0 - m) * var[c]);
          }
        }
      } else {
        batchnorm_forward_infer<T>(in, params_.value(s.weight), params_.value(s.bias), params_.value(s.running_mean),
                                   params_.value(s.running_var), cfg_.bn_eps, out);
      }
      break;
  }
}

template <typename T>
const Tensor4<T>& Network<T>::block_forward(int b, const Tensor4<T>& x, Mode mode, bool update) {
  Block& block = blocks_.at(static_cast<std::size_t>(b));
  const int expected_c = b == 0 ? 1 : cfg_.block_out_channels();
  if (x.c != expected_c) throw std::invalid_argument("block input has the wrong channel count");
  for (Path& path : block.paths) {
    const Tensor4<T>* in = &x;
    for (std::size_t s = 0; s < path.stages.size(); ++s) {
      stage_forward(path.stages[s], *in, path.acts[s], mode, update);
      in = &path.acts[s];
    }
  }
  const Tensor4<T>& first = block.paths.front().acts.back();
  block.output.resize(x.n, first.h, first.w, cfg_.block_out_channels());
  for (int n = 0; n < x.n; ++n) {
    int c0 = 0;
    for (const Path& path : block.paths) {
      const Tensor4<T>& o = path.acts.back();
      for (int c = 0; c < o.c; ++c) std::copy(o.plane(n, c), o.plane(n, c) + o.plane_size(), block.output.plane(n, c0 + c));
      c0 += o.c;
    }
  }
  return block.output;
}

template <typename T>
const std::vector<ClassProbs>& Network<T>::forward(const Tensor4<T>& x, Mode mode, bool update) {
  if (x.h != cfg_.input_height || x.w != cfg_.input_width || x.c != 1) {
    throw std::invalid_argument("input window is " + std::to_string(x.h) + "x" + std::to_string(x.w) + "x" +
                                std::to_string(x.c) + ", network expects " + std::to_string(cfg_.input_height) + "x" +
                                std::to_string(cfg_.input_width) + "x1");
  }
  if (x.n <= 0) throw std::invalid_argument("empty batch");
  input_ = x;
  const Tensor4<T>* in = &input_;
  for (int b = 0; b < cfg_.blocks; ++b) in = &block_forward(b, *in, mode, update);

  const int batch = x.n;
  const int flat = cfg_.flat_size();
  const int hid = cfg_.mlp_hidden;
  hidden_pre_.assign(static_cast<std::size_t>(batch) * static_cast<std::size_t>(hid), T(0));
  hidden_.resize(hidden_pre_.size());
  dense_forward<T>(std::span<const T>(in->data), batch, flat, params_.value(fc1_w_), params_.value(fc1_b_), hid, hidden_pre_);
  for (std::size_t i = 0; i < hidden_.size(); ++i) hidden_[i] = hidden_pre_[i] > T(0) ? hidden_pre_[i] : T(0);
  std::vector<T> logits(static_cast<std::size_t>(batch) * kNumClasses);
  dense_forward<T>(hidden_, batch, hid, params_.value(fc2_w_), params_.value(fc2_b_), kNumClasses, logits);
  logits_.assign(logits.begin(), logits.end());
  probs_.resize(static_cast<std::size_t>(batch));
  for (int n = 0; n < batch; ++n) {
    probs_[static_cast<std::size_t>(n)] =
        softmax(std::span<const double>(logits_.data() + static_cast<std::size_t>(n) * kNumClasses, kNumClasses));
  }
  have_train_state_ = mode == Mode::Train;
  return probs_;
}

template <typename T>
double Network<T>::loss(std::span<const int> labels) const {
  if (labels.size() != probs_.size() || probs_.empty()) throw std::invalid_argument("label count does not match the batch");
  double s = 0.0;
  for (std::size_t n = 0; n < labels.size(); ++n) s += xent_loss(labels[n], probs_[n]);
  return s / static_cast<double>(labels.size());
}

template <typename T>
void Network<T>::stage_backward(Stage& s, const Tensor4<T>& in, const Tensor4<T>& out, const Tensor4<T>& dout,
                                Tensor4<T>* din, std::vector<double>& grad) {
  auto gspan = [&](std::size_t idx) {
    const ParamEntry& e = params_.entry(idx);
    return std::span<double>(grad.data() + e.offset, e.size);
  };
  switch (s.kind) {
    case StageKind::Conv:
    case StageKind::Proj:
      conv2d_backward<T>(in, params_.value(s.weight), s.cout, s.k, Padding::Same, dout, gspan(s.weight), gspan(s.bias), din);
      break;
    case StageKind::Relu:
      if (din) relu_backward(out, dout, *din);
      break;
    case StageKind::Pool:
      if (din) maxpool2_backward(dout, s.argmax, in.h, in.w, *din);
      break;
    case StageKind::BatchNorm:
      if (!din) throw std::logic_error("batch norm cannot be the first stage of a path");
      batchnorm_backward<T>(dout, params_.value(s.weight), s.bn, *din, gspan(s.weight), gspan(s.bias));
      break;
  }
}

template <typename T>
void Network<T>::backward(std::span<const int> labels, Tensor4<T>* dinput) {
  if (!have_train_state_) throw std::logic_error("backward() needs a preceding training-mode forward pass");
  const int batch = static_cast<int>(probs_.size());
  if (static_cast<int>(labels.size()) != batch) throw std::invalid_argument("label count does not match the batch");
  std::vector<double> grad(params_.values.size(), 0.0);
  auto gspan = [&](std::size_t idx) {
    const ParamEntry& e = params_.entry(idx);
    return std::span<double>(grad.data() + e.offset, e.size);
  };

  std::vector<T> dlogits(static_cast<std::size_t>(batch) * kNumClasses);
  for (int n = 0; n < batch; ++n) {
    const int y = labels[static_cast<std::size_t>(n)];
    if (y < 0 || y >= kNumClasses) throw std::out_of_range("label out of range");
    for (int j = 0; j < kNumClasses; ++j) {
      const double p = probs_[static_cast<std::size_t>(n)][static_cast<std::size_t>(j)];
      dlogits[static_cast<std::size_t>(n * kNumClasses + j)] = static_cast<T>((p - (j == y ? 1.0 : 0.0)) / batch);
    }
  }
  const int hid = cfg_.mlp_hidden;
  const int flat = cfg_.flat_size();
  std::vector<T> dhidden(hidden_.size());
  dense_backward<T>(hidden_, batch, hid, params_.value(fc2_w_), kNumClasses, dlogits, gspan(fc2_w_), gspan(fc2_b_), dhidden);
  for (std::size_t i = 0; i < dhidden.size(); ++i) {
    if (!(hidden_pre_[i] > T(0))) dhidden[i] = T(0);
  }
  const Tensor4<T>& top = blocks_.back().output;
  dtop_.reshape(top.n, top.h, top.w, top.c);
  dense_backward<T>(std::span<const T>(top.data), batch, flat, params_.value(fc1_w_), hid, dhidden, gspan(fc1_w_),
                    gspan(fc1_b_), std::span<T>(dtop_.data));

  const Tensor4<T>* dnext = &dtop_;
  for (int b = cfg_.blocks - 1; b >= 0; --b) {
    Block& block = blocks_[static_cast<std::size_t>(b)];
    const Tensor4<T>& block_in = b == 0 ? input_ : blocks_[static_cast<std::size_t>(b - 1)].output;
    const bool need_din = b > 0 || dinput != nullptr;
    if (need_din) block.dinput.resize(block_in.n, block_in.h, block_in.w, block_in.c);
    int c0 = 0;
    for (Path& path : block.paths) {
      const Tensor4<T>& pout = path.acts.back();
      path.dout.reshape(pout.n, pout.h, pout.w, pout.c);
      for (int n = 0; n < batch; ++n) {
        for (int c = 0; c < pout.c; ++c) {
          std::copy(dnext->plane(n, c0 + c), dnext->plane(n, c0 + c) + pout.plane_size(), path.dout.plane(n, c));
        }
      }
      c0 += pout.c;
      const Tensor4<T>* dcur = &path.dout;
      for (std::size_t s = path.stages.size(); s-- > 0;) {
        const Tensor4<T>& in = s == 0 ? block_in : path.acts[s - 1];
        const bool want = s > 0 || need_din;
        stage_backward(path.stages[s], in, path.acts[s], *dcur, want ? &path.grads[s] : nullptr, grad);
        if (!want) break;
        dcur = &path.grads[s];
      }
      if (need_din) {
        for (std::size_t i = 0; i < block.dinput.data.size(); ++i) block.dinput.data[i] += dcur->data[i];
      }
    }
    dnext = &block.dinput;
  }
  if (dinput) *dinput = blocks_.front().dinput;

  for (std::size_t i = 0; i < grad.size(); ++i) params_.grads[i] = static_cast<T>(grad[i]);
}

template <typename T>
std::vector<ClassProbs> Network<T>::predict(std::span<const float> windows, int batch_size) {
  const std::size_t sz = static_cast<std::size_t>(cfg_.input_height) * static_cast<std::size_t>(cfg_.input_width);
  if (windows.size() % sz != 0) throw std::invalid_argument("window buffer is not a whole number of windows");
  if (batch_size <= 0) throw std::invalid_argument("batch size must be positive");
  const std::size_t count = windows.size() / sz;
  std::vector<ClassProbs> out;
  out.reserve(count);
  Tensor4<T> x;
  for (std::size_t start = 0; start < count; start += static_cast<std::size_t>(batch_size)) {
    const std::size_t nb = std::min(count - start, static_cast<std::size_t>(batch_size));
    x.resize(static_cast<int>(nb), cfg_.input_height, cfg_.input_width, 1);
    std::copy(windows.begin() + static_cast<std::ptrdiff_t>(start * sz),
              windows.begin() + static_cast<std::ptrdiff_t>((start + nb) * sz), x.data.begin());
    const auto& p = forward(x, Mode::Infer);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

template <typename T>
ClassProbs Network<T>::predict_one(std::span<const float> window) {
  if (window.size() != static_cast<std::size_t>(cfg_.input_height) * static_cast<std::size_t>(cfg_.input_width)) {
    throw std::invalid_argument("window shape does not match the network input");
  }
  return predict(window, 1).front();
}

template <typename T>
std::uint64_t Network<T>::activation_signature() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Block& block : blocks_) {
    for (const Path& path : block.paths) {
      for (std::size_t s = 0; s < path.stages.size(); ++s) {
        const Stage& st = path.stages[s];
        if (st.kind == StageKind::Relu) {
          for (T v : path.acts[s].data) fnv(h, v > T(0));
        } else if (st.kind == StageKind::Pool) {
          for (int a : st.argmax) fnv(h, static_cast<std::uint64_t>(a));
        }
      }
    }
  }
  for (T v : hidden_pre_) fnv(h, v > T(0));
  return h;
}

template class Network<float>;
template class Network<double>;

}  // namespace usonic::nn
