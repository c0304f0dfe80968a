#include "usonic/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace usonic::nn {

namespace {

// Geometry of a convolution evaluated on the padded input. Output pixel
// (oy, ox) is computed at ext[oy * wp + ox] of an "extended" output whose
// rows have the padded width; this turns every kernel tap into one
// contiguous axpy of length `span` over the padded input.
struct ConvGeometry {
  int pad;
  int hp;
  int wp;
  int ho;
  int wo;
  std::size_t span;
};

ConvGeometry conv_geometry(int h, int w, int k, Padding padding) {
  if (k <= 0) throw std::invalid_argument("kernel size must be positive");
  if (padding == Padding::Same && k % 2 == 0) throw std::invalid_argument("same padding needs an odd kernel");
  ConvGeometry g{};
  g.pad = padding == Padding::Same ? k / 2 : 0;
  g.hp = h + 2 * g.pad;
  g.wp = w + 2 * g.pad;
  g.ho = g.hp - k + 1;
  g.wo = g.wp - k + 1;
  if (g.ho <= 0 || g.wo <= 0) throw std::invalid_argument("input smaller than the kernel");
  g.span = static_cast<std::size_t>(g.ho - 1) * static_cast<std::size_t>(g.wp) + static_cast<std::size_t>(g.wo);
  return g;
}

template <typename T>
void pad_sample(const Tensor4<T>& x, int b, const ConvGeometry& g, std::vector<T>& buf) {
  const std::size_t plane = static_cast<std::size_t>(g.hp) * static_cast<std::size_t>(g.wp);
  buf.assign(plane * static_cast<std::size_t>(x.c), T(0));
  for (int ic = 0; ic < x.c; ++ic) {
    const T* src = x.plane(b, ic);
    T* dst = buf.data() + static_cast<std::size_t>(ic) * plane;
    for (int y = 0; y < x.h; ++y) {
      std::copy(src + static_cast<std::size_t>(y) * static_cast<std::size_t>(x.w),
                src + static_cast<std::size_t>(y + 1) * static_cast<std::size_t>(x.w),
                dst + static_cast<std::size_t>(y + g.pad) * static_cast<std::size_t>(g.wp) + static_cast<std::size_t>(g.pad));
    }
  }
}

void check_kernel(std::size_t kernel_size, std::size_t bias_size, int cin, int cout, int k) {
  const std::size_t expected = static_cast<std::size_t>(cout) * static_cast<std::size_t>(cin) *
                               static_cast<std::size_t>(k) * static_cast<std::size_t>(k);
  if (kernel_size != expected) {
    throw std::invalid_argument("kernel has " + std::to_string(kernel_size) + " values, expected " +
                                std::to_string(expected) + " for " + std::to_string(cin) + " input channels");
  }
  if (bias_size != 0 && bias_size != static_cast<std::size_t>(cout)) throw std::invalid_argument("bias size mismatch");
}

// Dot product returned in double. Sixteen independent partial sums in T let
// the compiler vectorise without reassociating one chain; each lane covers a
// short strided slice and the lanes are combined in double.
template <typename T>
double dot_double(const T* a, const T* b, std::size_t n) {
  constexpr std::size_t kLanes = 16;
  T part[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t j = 0; j < kLanes; ++j) part[j] += a[i + j] * b[i + j];
  }
  double acc = 0.0;
  for (; i < n; ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  for (std::size_t j = 0; j < kLanes; ++j) acc += part[j];
  return acc;
}

}  // namespace

template <typename T>
void conv2d_forward(const Tensor4<T>& x, std::span<const T> kernel, std::span<const T> bias, int cout, int k,
                    Padding padding, Tensor4<T>& y) {
  check_kernel(kernel.size(), bias.size(), x.c, cout, k);
  const ConvGeometry g = conv_geometry(x.h, x.w, k, padding);
  y.reshape(x.n, g.ho, g.wo, cout);
  const std::size_t plane = static_cast<std::size_t>(g.hp) * static_cast<std::size_t>(g.wp);
  std::vector<T> padded;
  std::vector<T> ext(static_cast<std::size_t>(g.ho) * static_cast<std::size_t>(g.wp));
  for (int b = 0; b < x.n; ++b) {
    pad_sample(x, b, g, padded);
    for (int oc = 0; oc < cout; ++oc) {
      std::fill(ext.begin(), ext.end(), bias.empty() ? T(0) : bias[static_cast<std::size_t>(oc)]);
      T* e = ext.data();
      for (int ic = 0; ic < x.c; ++ic) {
        const T* in = padded.data() + static_cast<std::size_t>(ic) * plane;
        const T* kw = kernel.data() + (static_cast<std::size_t>(oc) * static_cast<std::size_t>(x.c) + static_cast<std::size_t>(ic)) *
                                          static_cast<std::size_t>(k * k);
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const T wv = kw[ky * k + kx];
            const T* src = in + static_cast<std::size_t>(ky) * static_cast<std::size_t>(g.wp) + static_cast<std::size_t>(kx);
            for (std::size_t i = 0; i < g.span; ++i) e[i] += wv * src[i];
          }
        }
      }
      T* out = y.plane(b, oc);
      for (int oy = 0; oy < g.ho; ++oy) {
        std::copy(e + static_cast<std::size_t>(oy) * static_cast<std::size_t>(g.wp),
                  e + static_cast<std::size_t>(oy) * static_cast<std::size_t>(g.wp) + static_cast<std::size_t>(g.wo),
                  out + static_cast<std::size_t>(oy) * static_cast<std::size_t>(g.wo));
      }
    }
  }
}

template <typename T>
void conv2d_backward(const Tensor4<T>& x, std::span<const T> kernel, int cout, int k, Padding padding,
                     const Tensor4<T>& dy, std::span<double> dkernel, std::span<double> dbias, Tensor4<T>* dx) {
  check_kernel(kernel.size(), dbias.size(), x.c, cout, k);
  if (dkernel.size() != kernel.size()) throw std::invalid_argument("kernel gradient size mismatch");
  const ConvGeometry g = conv_geometry(x.h, x.w, k, padding);
  if (dy.n != x.n || dy.h != g.ho || dy.w != g.wo || dy.c != cout) throw std::invalid_argument("conv output gradient has the wrong shape");
  if (dx) dx->reshape(x.n, x.h, x.w, x.c);
  const std::size_t plane = static_cast<std::size_t>(g.hp) * static_cast<std::size_t>(g.wp);
  std::vector<T> padded;
  std::vector<T> dpad;
  std::vector<T> dext(static_cast<std::size_t>(g.ho) * static_cast<std::size_t>(g.wp));
  for (int b = 0; b < x.n; ++b) {
    pad_sample(x, b, g, padded);
    if (dx) dpad.assign(plane * static_cast<std::size_t>(x.c), T(0));
    for (int oc = 0; oc < cout; ++oc) {
      std::fill(dext.begin(), dext.end(), T(0));
      const T* d = dy.plane(b, oc);
      double bsum = 0.0;
      for (int oy = 0; oy < g.ho; ++oy) {
        for (int ox = 0; ox < g.wo; ++ox) {
          const T v = d[static_cast<std::size_t>(oy) * static_cast<std::size_t>(g.wo) + static_cast<std::size_t>(ox)];
          dext[static_cast<std::size_t>(oy) * static_cast<std::size_t>(g.wp) + static_cast<std::size_t>(ox)] = v;
          bsum += v;
        }
      }
      if (!dbias.empty()) dbias[static_cast<std::size_t>(oc)] += bsum;
      const T* e = dext.data();
      for (int ic = 0; ic < x.c; ++ic) {
        const std::size_t kbase = (static_cast<std::size_t>(oc) * static_cast<std::size_t>(x.c) + static_cast<std::size_t>(ic)) *
                                  static_cast<std::size_t>(k * k);
        const T* in = padded.data() + static_cast<std::size_t>(ic) * plane;
        T* din = dx ? dpad.data() + static_cast<std::size_t>(ic) * plane : nullptr;
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const std::size_t off = static_cast<std::size_t>(ky) * static_cast<std::size_t>(g.wp) + static_cast<std::size_t>(kx);
            const T* src = in + off;
            dkernel[kbase + static_cast<std::size_t>(ky * k + kx)] += dot_double(e, src, g.span);
            if (din) {
              const T wv = kernel[kbase + static_cast<std::size_t>(ky * k + kx)];
              T* dst = din + off;
              for (std::size_t i = 0; i < g.span; ++i) dst[i] += wv * e[i];
            }
          }
        }
      }
    }
    if (dx) {
      for (int ic = 0; ic < x.c; ++ic) {
        const T* src = dpad.data() + static_cast<std::size_t>(ic) * plane;
        T* dst = dx->plane(b, ic);
        for (int yy = 0; yy < x.h; ++yy) {
          const T* row = src + static_cast<std::size_t>(yy + g.pad) * static_cast<std::size_t>(g.wp) + static_cast<std::size_t>(g.pad);
          std::copy(row, row + x.w, dst + static_cast<std::size_t>(yy) * static_cast<std::size_t>(x.w));
        }
      }
    }
  }
}

template <typename T>
void relu_forward(const Tensor4<T>& x, Tensor4<T>& y) {
  y.reshape(x.n, x.h, x.w, x.c);
  for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
}

template <typename T>
void relu_backward(const Tensor4<T>& y, const Tensor4<T>& dy, Tensor4<T>& dx) {
  if (!y.same_shape(dy)) throw std::invalid_argument("relu gradient shape mismatch");
  dx.reshape(y.n, y.h, y.w, y.c);
  for (std::size_t i = 0; i < y.data.size(); ++i) dx.data[i] = y.data[i] > T(0) ? dy.data[i] : T(0);
}

template <typename T>
void maxpool2_forward(const Tensor4<T>& x, Tensor4<T>& y, std::vector<int>& argmax) {
  if (x.h < 2 || x.w < 2) {
    throw std::invalid_argument("2x2 pooling needs at least 2x2 input, got " + std::to_string(x.h) + "x" + std::to_string(x.w));
  }
  const int ho = x.h / 2;
  const int wo = x.w / 2;
  y.reshape(x.n, ho, wo, x.c);
  argmax.resize(y.size());
  std::size_t o = 0;
  for (int b = 0; b < x.n; ++b) {
    for (int ch = 0; ch < x.c; ++ch) {
      const T* in = x.plane(b, ch);
      T* out = y.plane(b, ch);
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox, ++o) {
          int best = (2 * oy) * x.w + 2 * ox;
          for (int idx : {best + 1, best + x.w, best + x.w + 1}) {
            if (in[idx] > in[best]) best = idx;
          }
          out[oy * wo + ox] = in[best];
          argmax[o] = best;
        }
      }
    }
  }
}

template <typename T>
void maxpool2_backward(const Tensor4<T>& dy, const std::vector<int>& argmax, int in_h, int in_w, Tensor4<T>& dx) {
  if (argmax.size() != dy.size()) throw std::invalid_argument("pool gradient shape mismatch");
  dx.resize(dy.n, in_h, in_w, dy.c);
  std::size_t o = 0;
  for (int b = 0; b < dy.n; ++b) {
    for (int ch = 0; ch < dy.c; ++ch) {
      const T* d = dy.plane(b, ch);
      T* out = dx.plane(b, ch);
      for (std::size_t i = 0; i < dy.plane_size(); ++i, ++o) out[argmax[o]] += d[i];
    }
  }
}

template <typename T>
void batchnorm_forward_train(const Tensor4<T>& x, std::span<const T> gamma, std::span<const T> beta, double eps,
                             Tensor4<T>& y, BatchNormCache<T>& cache, std::vector<double>& mean,
                             std::vector<double>& var) {
  if (gamma.size() != static_cast<std::size_t>(x.c) || beta.size() != gamma.size()) {
    throw std::invalid_argument("batch-norm parameters do not match the channel count");
  }
  y.reshape(x.n, x.h, x.w, x.c);
  cache.xhat.reshape(x.n, x.h, x.w, x.c);
  cache.invstd.assign(static_cast<std::size_t>(x.c), 0.0);
  mean.assign(static_cast<std::size_t>(x.c), 0.0);
  var.assign(static_cast<std::size_t>(x.c), 0.0);
  const std::size_t ps = x.plane_size();
  const double count = static_cast<double>(ps) * x.n;
  for (int ch = 0; ch < x.c; ++ch) {
    double s = 0.0;
    for (int b = 0; b < x.n; ++b) {
      const T* p = x.plane(b, ch);
      for (std::size_t i = 0; i < ps; ++i) s += p[i];
    }
    const double mu = s / count;
    double ss = 0.0;
    for (int b = 0; b < x.n; ++b) {
      const T* p = x.plane(b, ch);
      for (std::size_t i = 0; i < ps; ++i) {
        const double d = p[i] - mu;
        ss += d * d;
      }
    }
    const double v = ss / count;
    const double inv = 1.0 / std::sqrt(v + eps);
    mean[static_cast<std::size_t>(ch)] = mu;
    var[static_cast<std::size_t>(ch)] = v;
    cache.invstd[static_cast<std::size_t>(ch)] = inv;
    const double ga = gamma[static_cast<std::size_t>(ch)];
    const double be = beta[static_cast<std::size_t>(ch)];
    for (int b = 0; b < x.n; ++b) {
      const T* p = x.plane(b, ch);
      T* xh = cache.xhat.plane(b, ch);
      T* out = y.plane(b, ch);
      for (std::size_t i = 0; i < ps; ++i) {
        const double h = (p[i] - mu) * inv;
        xh[i] = static_cast<T>(h);
        out[i] = static_cast<T>(ga * h + be);
      }
    }
  }
}

template <typename T>
void batchnorm_forward_infer(const Tensor4<T>& x, std::span<const T> gamma, std::span<const T> beta,
                             std::span<const T> running_mean, std::span<const T> running_var, double eps,
                             Tensor4<T>& y) {
  if (gamma.size() != static_cast<std::size_t>(x.c) || beta.size() != gamma.size() ||
      running_mean.size() != gamma.size() || running_var.size() != gamma.size()) {
    throw std::invalid_argument("batch-norm parameters do not match the channel count");
  }
  y.reshape(x.n, x.h, x.w, x.c);
  const std::size_t ps = x.plane_size();
  for (int ch = 0; ch < x.c; ++ch) {
    const auto c = static_cast<std::size_t>(ch);
    const double inv = 1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps);
    const double scale = gamma[c] * inv;
    const double shift = beta[c] - scale * running_mean[c];
    for (int b = 0; b < x.n; ++b) {
      const T* p = x.plane(b, ch);
      T* out = y.plane(b, ch);
      for (std::size_t i = 0; i < ps; ++i) out[i] = static_cast<T>(scale * p[i] + shift);
    }
  }
}

template <typename T>
void batchnorm_backward(const Tensor4<T>& dy, std::span<const T> gamma, const BatchNormCache<T>& cache,
                        Tensor4<T>& dx, std::span<double> dgamma, std::span<double> dbeta) {
  if (!dy.same_shape(cache.xhat)) throw std::invalid_argument("batch-norm gradient shape mismatch");
  dx.reshape(dy.n, dy.h, dy.w, dy.c);
  const std::size_t ps = dy.plane_size();
  const double count = static_cast<double>(ps) * dy.n;
  for (int ch = 0; ch < dy.c; ++ch) {
    const auto c = static_cast<std::size_t>(ch);
    double sdy = 0.0;
    double sdyx = 0.0;
    for (int b = 0; b < dy.n; ++b) {
      const T* d = dy.plane(b, ch);
      const T* xh = cache.xhat.plane(b, ch);
      for (std::size_t i = 0; i < ps; ++i) {
        sdy += d[i];
        sdyx += static_cast<double>(d[i]) * xh[i];
      }
    }
    dbeta[c] += sdy;
    dgamma[c] += sdyx;
    const double k = gamma[c] * cache.invstd[c] / count;
    for (int b = 0; b < dy.n; ++b) {
      const T* d = dy.plane(b, ch);
      const T* xh = cache.xhat.plane(b, ch);
      T* out = dx.plane(b, ch);
      for (std::size_t i = 0; i < ps; ++i) out[i] = static_cast<T>(k * (count * d[i] - sdy - xh[i] * sdyx));
    }
  }
}

template <typename T>
void dense_forward(std::span<const T> x, int batch, int in, std::span<const T> weight, std::span<const T> bias,
                   int out, std::span<T> y) {
  if (x.size() != static_cast<std::size_t>(batch) * static_cast<std::size_t>(in) ||
      weight.size() != static_cast<std::size_t>(out) * static_cast<std::size_t>(in) ||
      bias.size() != static_cast<std::size_t>(out) || y.size() != static_cast<std::size_t>(batch) * static_cast<std::size_t>(out)) {
    throw std::invalid_argument("dense layer shape mismatch");
  }
  for (int b = 0; b < batch; ++b) {
    const T* xb = x.data() + static_cast<std::size_t>(b) * static_cast<std::size_t>(in);
    for (int o = 0; o < out; ++o) {
      const T* wo = weight.data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(in);
      const double acc = bias[static_cast<std::size_t>(o)] + dot_double(wo, xb, static_cast<std::size_t>(in));
      y[static_cast<std::size_t>(b) * static_cast<std::size_t>(out) + static_cast<std::size_t>(o)] = static_cast<T>(acc);
    }
  }
}

template <typename T>
void dense_backward(std::span<const T> x, int batch, int in, std::span<const T> weight, int out,
                    std::span<const T> dy, std::span<double> dweight, std::span<double> dbias, std::span<T> dx) {
  if (dy.size() != static_cast<std::size_t>(batch) * static_cast<std::size_t>(out) || dweight.size() != weight.size() ||
      dbias.size() != static_cast<std::size_t>(out)) {
    throw std::invalid_argument("dense gradient shape mismatch");
  }
  for (int o = 0; o < out; ++o) {
    double* dw = dweight.data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(in);
    for (int b = 0; b < batch; ++b) {
      const double g = dy[static_cast<std::size_t>(b) * static_cast<std::size_t>(out) + static_cast<std::size_t>(o)];
      dbias[static_cast<std::size_t>(o)] += g;
      const T* xb = x.data() + static_cast<std::size_t>(b) * static_cast<std::size_t>(in);
      for (int i = 0; i < in; ++i) dw[i] += g * xb[i];
    }
  }
  if (dx.empty()) return;
  for (int b = 0; b < batch; ++b) {
    T* dxb = dx.data() + static_cast<std::size_t>(b) * static_cast<std::size_t>(in);
    for (int i = 0; i < in; ++i) {
      double acc = 0.0;
      for (int o = 0; o < out; ++o) {
        acc += static_cast<double>(weight[static_cast<std::size_t>(o) * static_cast<std::size_t>(in) + static_cast<std::size_t>(i)]) *
               dy[static_cast<std::size_t>(b) * static_cast<std::size_t>(out) + static_cast<std::size_t>(o)];
      }
      dxb[i] = static_cast<T>(acc);
    }
  }
}

ClassProbs softmax(std::span<const double> logits) {
  if (logits.size() != static_cast<std::size_t>(kNumClasses)) throw std::invalid_argument("softmax expects one logit per class");
  const double mx = *std::max_element(logits.begin(), logits.end());
  ClassProbs p{};
  double s = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    p[j] = std::exp(logits[j] - mx);
    s += p[j];
  }
  for (double& v : p) v /= s;
  return p;
}

double xent_loss(int true_class, const ClassProbs& probs) {
  if (true_class < 0 || true_class >= kNumClasses) throw std::out_of_range("class index out of range");
  return -std::log(std::max(probs[static_cast<std::size_t>(true_class)], kXentFloor));
}

double xent_loss(const ClassProbs& target, const ClassProbs& probs) {
  double loss = 0.0;
  for (std::size_t j = 0; j < target.size(); ++j) {
    if (target[j] != 0.0) loss -= target[j] * std::log(std::max(probs[j], kXentFloor));
  }
  return loss;
}

#define USONIC_INSTANTIATE_LAYERS(T)                                                                                   \
  template void conv2d_forward<T>(const Tensor4<T>&, std::span<const T>, std::span<const T>, int, int, Padding,        \
                                  Tensor4<T>&);                                                                        \
  template void conv2d_backward<T>(const Tensor4<T>&, std::span<const T>, int, int, Padding, const Tensor4<T>&,        \
                                   std::span<double>, std::span<double>, Tensor4<T>*);                                 \
  template void relu_forward<T>(const Tensor4<T>&, Tensor4<T>&);                                                       \
  template void relu_backward<T>(const Tensor4<T>&, const Tensor4<T>&, Tensor4<T>&);                                   \
  template void maxpool2_forward<T>(const Tensor4<T>&, Tensor4<T>&, std::vector<int>&);                                \
  template void maxpool2_backward<T>(const Tensor4<T>&, const std::vector<int>&, int, int, Tensor4<T>&);               \
  template void batchnorm_forward_train<T>(const Tensor4<T>&, std::span<const T>, std::span<const T>, double,          \
                                           Tensor4<T>&, BatchNormCache<T>&, std::vector<double>&,                      \
                                           std::vector<double>&);                                                      \
  template void batchnorm_forward_infer<T>(const Tensor4<T>&, std::span<const T>, std::span<const T>,                  \
                                           std::span<const T>, std::span<const T>, double, Tensor4<T>&);               \
  template void batchnorm_backward<T>(const Tensor4<T>&, std::span<const T>, const BatchNormCache<T>&, Tensor4<T>&,    \
                                      std::span<double>, std::span<double>);                                           \
  template void dense_forward<T>(std::span<const T>, int, int, std::span<const T>, std::span<const T>, int,            \
                                 std::span<T>);                                                                        \
  template void dense_backward<T>(std::span<const T>, int, int, std::span<const T>, int, std::span<const T>,           \
                                  std::span<double>, std::span<double>, std::span<T>);

USONIC_INSTANTIATE_LAYERS(float)
USONIC_INSTANTIATE_LAYERS(double)

}  // namespace usonic::nn
