#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace usonic::nn {

/// One named tensor inside the flat parameter vector.
struct ParamEntry {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
  bool trainable = true;  ///< false for buffers such as batch-norm running statistics
};

/// Flat parameter vector with its manifest, a gradient vector of the same
/// shape and the Adam moments.
template <typename T>
class ParamStore {
 public:
  /// Appends a zero-initialised tensor and returns its manifest index.
  std::size_t add(std::string name, std::vector<int> shape, bool trainable = true);

  const std::vector<ParamEntry>& manifest() const { return manifest_; }
  const ParamEntry& entry(std::size_t idx) const { return manifest_.at(idx); }
  /// Throws std::out_of_range for an unknown name.
  std::size_t index_of(const std::string& name) const;

  std::span<T> value(std::size_t idx) { return {values.data() + entry(idx).offset, entry(idx).size}; }
  std::span<const T> value(std::size_t idx) const { return {values.data() + entry(idx).offset, entry(idx).size}; }
  std::span<T> grad(std::size_t idx) { return {grads.data() + entry(idx).offset, entry(idx).size}; }

  /// Number of trainable scalars (weights, biases, batch-norm affine terms).
  std::size_t trainable_count() const;

  void zero_grads();
  bool grads_finite() const;

  std::vector<T> values;
  std::vector<T> grads;
  std::vector<T> adam_m;
  std::vector<T> adam_v;
  std::int64_t adam_step = 0;

 private:
  std::vector<ParamEntry> manifest_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update of every trainable entry. Throws
/// NumericalError (leaving the parameters untouched) if a gradient is not finite.
template <typename T>
void adam_step(ParamStore<T>& params, const AdamConfig& cfg);

}  // namespace usonic::nn
