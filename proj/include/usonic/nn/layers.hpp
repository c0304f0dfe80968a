#pragma once

#include <array>
#include <span>
#include <vector>

#include "usonic/common/types.hpp"
#include "usonic/nn/tensor.hpp"

namespace usonic::nn {

enum class Padding { Same, Valid };

/// 2-D cross-correlation. Kernel layout (cout, cin, k, k); `bias` may be empty.
/// Same padding requires odd k and keeps height x width.
template <typename T>
void conv2d_forward(const Tensor4<T>& x, std::span<const T> kernel, std::span<const T> bias, int cout, int k,
                    Padding padding, Tensor4<T>& y);

/// Accumulates dL/dkernel and dL/dbias (double, same layouts) and, if `dx` is
/// non-null, writes dL/dx.
template <typename T>
void conv2d_backward(const Tensor4<T>& x, std::span<const T> kernel, int cout, int k, Padding padding,
                     const Tensor4<T>& dy, std::span<double> dkernel, std::span<double> dbias, Tensor4<T>* dx);

template <typename T>
void relu_forward(const Tensor4<T>& x, Tensor4<T>& y);
/// dx = dy where the forward output y was positive.
template <typename T>
void relu_backward(const Tensor4<T>& y, const Tensor4<T>& dy, Tensor4<T>& dx);

/// 2x2 max pooling with stride 2 (odd trailing rows/columns dropped). Stores
/// the flat in-plane index of each winner. Throws std::invalid_argument if a
/// spatial extent is below 2.
template <typename T>
void maxpool2_forward(const Tensor4<T>& x, Tensor4<T>& y, std::vector<int>& argmax);
template <typename T>
void maxpool2_backward(const Tensor4<T>& dy, const std::vector<int>& argmax, int in_h, int in_w, Tensor4<T>& dx);

/// Batch-norm state kept between forward and backward in training mode.
template <typename T>
struct BatchNormCache {
  Tensor4<T> xhat;
  std::vector<double> invstd;
};

/// Training mode: per-channel batch statistics (biased variance). Returns the
/// batch mean and variance so the caller can update running statistics.
template <typename T>
void batchnorm_forward_train(const Tensor4<T>& x, std::span<const T> gamma, std::span<const T> beta, double eps,
                             Tensor4<T>& y, BatchNormCache<T>& cache, std::vector<double>& mean,
                             std::vector<double>& var);
template <typename T>
void batchnorm_forward_infer(const Tensor4<T>& x, std::span<const T> gamma, std::span<const T> beta,
                             std::span<const T> running_mean, std::span<const T> running_var, double eps,
                             Tensor4<T>& y);
template <typename T>
void batchnorm_backward(const Tensor4<T>& dy, std::span<const T> gamma, const BatchNormCache<T>& cache,
                        Tensor4<T>& dx, std::span<double> dgamma, std::span<double> dbeta);

/// y[b] = W x[b] + bias for a (batch x in) row-major input; W is (out, in).
template <typename T>
void dense_forward(std::span<const T> x, int batch, int in, std::span<const T> weight, std::span<const T> bias,
                   int out, std::span<T> y);
template <typename T>
void dense_backward(std::span<const T> x, int batch, int in, std::span<const T> weight, int out,
                    std::span<const T> dy, std::span<double> dweight, std::span<double> dbias, std::span<T> dx);

using ClassProbs = std::array<double, kNumClasses>;

/// Numerically stable softmax over kNumClasses logits.
ClassProbs softmax(std::span<const double> logits);

/// -log(max(p_true, 1e-12)).
double xent_loss(int true_class, const ClassProbs& probs);
/// -sum_j y_j log(max(p_j, 1e-12)) for a one-hot (or soft) target.
double xent_loss(const ClassProbs& target, const ClassProbs& probs);

inline constexpr double kXentFloor = 1e-12;

}  // namespace usonic::nn
