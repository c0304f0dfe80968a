#pragma once

// Central finite-difference check of Network<double> gradients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "usonic/nn/network.hpp"

namespace gradcheck {

struct Stats {
  int checked = 0;
  int skipped_kinks = 0;
  double max_rel_error = 0.0;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps gradients that are zero
/// up to rounding (|g| < 1e-6) from turning FD noise into huge ratios.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Samples `samples` trainable scalars (with replacement across the manifest)
/// and `input_samples` input entries; perturbations that flip any ReLU or
/// pooling decision are skipped and counted.
inline Stats check_network(const usonic::nn::InceptionConfig& cfg, int batch, int samples, int input_samples,
                           std::uint64_t seed, double h = 1e-4) {
  using namespace usonic::nn;
  Network<double> net(cfg);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  // Perturb the BN affine terms and biases away from their init so every
  // parameter has a non-trivial gradient.
  for (std::size_t i = 0; i < net.params().manifest().size(); ++i) {
    const auto& e = net.params().entry(i);
    if (!e.trainable) continue;
    for (double& v : net.params().value(i)) v += 0.1 * nd(rng);
  }
  Tensor4<double> x(batch, cfg.input_height, cfg.input_width, 1);
  for (double& v : x.data) v = nd(rng);
  std::vector<int> labels(static_cast<std::size_t>(batch));
  for (int& y : labels) y = static_cast<int>(rng() % 5);

  auto loss_at = [&](std::uint64_t& sig) {
    net.forward(x, Mode::Train, false);
    sig = net.activation_signature();
    return net.loss(labels);
  };
  std::uint64_t base_sig = 0;
  loss_at(base_sig);
  Tensor4<double> dx;
  net.backward(labels, &dx);
  const std::vector<double> analytic = net.params().grads;

  std::vector<std::size_t> trainable;
  for (const auto& e : net.params().manifest()) {
    if (!e.trainable) continue;
    for (std::size_t i = e.offset; i < e.offset + e.size; ++i) trainable.push_back(i);
  }

  Stats st;
  auto probe = [&](double& slot, double a) {
    const double orig = slot;
    std::uint64_t s1 = 0, s2 = 0;
    slot = orig + h;
    const double lp = loss_at(s1);
    slot = orig - h;
    const double lm = loss_at(s2);
    slot = orig;
    if (s1 != base_sig || s2 != base_sig) {
      ++st.skipped_kinks;
      return;
    }
    const double numeric = (lp - lm) / (2.0 * h);
    st.max_rel_error = std::max(st.max_rel_error, rel_error(a, numeric));
    ++st.checked;
  };
  for (int s = 0; s < samples; ++s) {
    const std::size_t idx = trainable[rng() % trainable.size()];
    probe(net.params().values[idx], analytic[idx]);
  }
  for (int s = 0; s < input_samples; ++s) {
    const std::size_t idx = rng() % x.data.size();
    probe(x.data[idx], dx.data[idx]);
  }
  return st;
}

/// The tiny two-block net used for gradient checks: two paths (1x1 and 3x3),
/// 2 conv + 2 projection channels each, i.e. 8 channels in total per block.
inline usonic::nn::InceptionConfig tiny_config(usonic::nn::StageOrder order, std::uint64_t seed) {
  usonic::nn::InceptionConfig c;
  c.kernels = {1, 3};
  c.path_channels = {2, 2};
  c.proj_channels = {2, 2};
  c.blocks = 2;
  c.mlp_hidden = 5;
  c.input_height = 12;
  c.input_width = 8;
  c.order = order;
  c.init_seed = seed;
  return c;
}

}  // namespace gradcheck
