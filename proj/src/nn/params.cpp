#include "usonic/nn/params.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

#include "usonic/common/error.hpp"

namespace usonic::nn {

template <typename T>
std::size_t ParamStore<T>::add(std::string name, std::vector<int> shape, bool trainable) {
  std::size_t size = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("parameter " + name + " has a non-positive extent");
    size *= static_cast<std::size_t>(d);
  }
  for (const auto& e : manifest_) {
    if (e.name == name) throw std::invalid_argument("duplicate parameter name " + name);
  }
  manifest_.push_back({std::move(name), std::move(shape), values.size(), size, trainable});
  values.resize(values.size() + size, T(0));
  grads.resize(values.size(), T(0));
  adam_m.resize(values.size(), T(0));
  adam_v.resize(values.size(), T(0));
  return manifest_.size() - 1;
}

template <typename T>
std::size_t ParamStore<T>::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < manifest_.size(); ++i) {
    if (manifest_[i].name == name) return i;
  }
  throw std::out_of_range("no parameter named " + name);
}

template <typename T>
std::size_t ParamStore<T>::trainable_count() const {
  std::size_t n = 0;
  for (const auto& e : manifest_) {
    if (e.trainable) n += e.size;
  }
  return n;
}

template <typename T>
void ParamStore<T>::zero_grads() {
  std::fill(grads.begin(), grads.end(), T(0));
}

template <typename T>
bool ParamStore<T>::grads_finite() const {
  return std::all_of(grads.begin(), grads.end(), [](T g) { return std::isfinite(g); });
}

template <typename T>
void adam_step(ParamStore<T>& params, const AdamConfig& cfg) {
  if (params.adam_step < 0) throw std::invalid_argument("Adam step counter must be non-negative");
  for (const auto& e : params.manifest()) {
    if (!e.trainable) continue;
    for (std::size_t i = e.offset; i < e.offset + e.size; ++i) {
      if (!std::isfinite(params.grads[i])) {
        throw NumericalError("non-finite gradient in " + e.name + " at Adam step " +
                             std::to_string(params.adam_step + 1));
      }
    }
  }
  const std::int64_t t = ++params.adam_step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (const auto& e : params.manifest()) {
    if (!e.trainable) continue;
    for (std::size_t i = e.offset; i < e.offset + e.size; ++i) {
      const double g = params.grads[i];
      const double m = cfg.beta1 * params.adam_m[i] + (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * params.adam_v[i] + (1.0 - cfg.beta2) * g * g;
      params.adam_m[i] = static_cast<T>(m);
      params.adam_v[i] = static_cast<T>(v);
      const double mhat = m / c1;
      const double vhat = v / c2;
      params.values[i] = static_cast<T>(params.values[i] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

template class ParamStore<float>;
template class ParamStore<double>;
template void adam_step<float>(ParamStore<float>&, const AdamConfig&);
template void adam_step<double>(ParamStore<double>&, const AdamConfig&);

}  // namespace usonic::nn
