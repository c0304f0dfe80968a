#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace usonic::nn {

/// Shape (batch, height, width, channels). Storage is planar per sample:
/// element (b, y, x, c) lives at ((b * channels + c) * height + y) * width + x,
/// so each feature map is one contiguous height x width plane and a sample
/// flattens to channel-major order.
template <typename T>
struct Tensor4 {
  int n = 0;
  int h = 0;
  int w = 0;
  int c = 0;
  std::vector<T> data;

  Tensor4() = default;
  Tensor4(int batch, int height, int width, int channels) { resize(batch, height, width, channels); }

  void resize(int batch, int height, int width, int channels) {
    if (batch < 0 || height < 0 || width < 0 || channels < 0) throw std::invalid_argument("negative tensor extent");
    n = batch;
    h = height;
    w = width;
    c = channels;
    data.assign(size(), T(0));
  }

  /// Like resize() but leaves existing storage uninitialised-in-spirit: the
  /// caller promises to overwrite every element.
  void reshape(int batch, int height, int width, int channels) {
    if (batch < 0 || height < 0 || width < 0 || channels < 0) throw std::invalid_argument("negative tensor extent");
    n = batch;
    h = height;
    w = width;
    c = channels;
    data.resize(size());
  }

  std::size_t size() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(h) * static_cast<std::size_t>(w) *
           static_cast<std::size_t>(c);
  }
  std::size_t plane_size() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  std::size_t sample_size() const { return plane_size() * static_cast<std::size_t>(c); }

  T* plane(int b, int ch) {
    return data.data() + (static_cast<std::size_t>(b) * static_cast<std::size_t>(c) + static_cast<std::size_t>(ch)) * plane_size();
  }
  const T* plane(int b, int ch) const {
    return data.data() + (static_cast<std::size_t>(b) * static_cast<std::size_t>(c) + static_cast<std::size_t>(ch)) * plane_size();
  }
  T& at(int b, int y, int x, int ch) { return plane(b, ch)[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)]; }
  const T& at(int b, int y, int x, int ch) const {
    return plane(b, ch)[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)];
  }

  bool same_shape(const Tensor4& o) const { return n == o.n && h == o.h && w == o.w && c == o.c; }
};

}  // namespace usonic::nn
