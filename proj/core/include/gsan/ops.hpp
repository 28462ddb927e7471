#pragma once

// Standard dense neural-network operators with explicit backward passes.
// Every function allocates its result and leaves its inputs untouched, with
// the single exception of batch_norm in training mode, which updates the
// running statistics it is handed.

#include <span>
#include <utility>
#include <vector>

#include "gsan/tensor.hpp"

namespace gsan {

// ---- convolution (cross-correlation, zero padding) --------------------------

// weights: out_channels x (in_channels / groups) x k x k. `bias` is either
// empty or one value per output channel.
Tensor4 conv2d(const Tensor4& input, std::span<const float> weights, std::span<const float> bias,
               const ConvGeometry& geom);

struct ConvGrads {
  Tensor4 input;
  std::vector<float> weights;
  std::vector<float> bias;
};

ConvGrads conv2d_backward(const Tensor4& input, std::span<const float> weights,
                          const ConvGeometry& geom, const Tensor4& upstream);

// ---- pooling ----------------------------------------------------------------

Tensor4 maxpool2d(const Tensor4& input, int window, int stride);
// Routes each upstream value to the first maximal element of its window.
Tensor4 maxpool2d_backward(const Tensor4& input, int window, int stride, const Tensor4& upstream);

// N x C x H x W -> N x C x 1 x 1.
Tensor4 global_avg_pool(const Tensor4& input);
Tensor4 global_avg_pool_backward(const Shape4& input_shape, const Tensor4& upstream);

// ---- batch normalization ----------------------------------------------------

enum class Mode { train, eval };

struct BatchNormState {
  std::vector<float> scale;
  std::vector<float> shift;
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float epsilon = 1e-5f;
  // running <- momentum * running + (1 - momentum) * batch
  float momentum = 0.9f;

  static BatchNormState identity(int channels);
  int channels() const noexcept { return static_cast<int>(scale.size()); }
};

// Saved by a training-mode forward for the backward pass.
struct BatchNormCache {
  Tensor4 normalized;
  std::vector<float> inv_std;
};

// Training mode normalizes with the batch statistics and folds them into the
// running statistics (unbiased variance); evaluation mode uses the running
// statistics and does not touch `state`.
Tensor4 batch_norm(const Tensor4& input, BatchNormState& state, Mode mode,
                   BatchNormCache* cache = nullptr);
Tensor4 batch_norm_eval(const Tensor4& input, const BatchNormState& state);

struct BatchNormGrads {
  Tensor4 input;
  std::vector<float> scale;
  std::vector<float> shift;
};

BatchNormGrads batch_norm_backward(const BatchNormCache& cache, const BatchNormState& state,
                                   const Tensor4& upstream);

// ---- activations ------------------------------------------------------------

Tensor4 relu(const Tensor4& input);
Tensor4 relu_backward(const Tensor4& input, const Tensor4& upstream);

// x * clamp(x + 3, 0, 6) / 6
float hard_swish(float x) noexcept;
Tensor4 hard_swish(const Tensor4& input);
Tensor4 hard_swish_backward(const Tensor4& input, const Tensor4& upstream);

// ---- elementwise / structural -------------------------------------------------

Tensor4 add(const Tensor4& a, const Tensor4& b);
// Channel concatenation [a, b]; batch and spatial dims must agree.
Tensor4 concat_channels(const Tensor4& a, const Tensor4& b);
// Inverse of concat_channels: the first `leading` channels, then the rest.
std::pair<Tensor4, Tensor4> slice_channels(const Tensor4& x, int leading);

// ---- classifier head ----------------------------------------------------------

// Flattens each sample to C*H*W features. weights: out x features.
// Returns N x out x 1 x 1.
Tensor4 linear(const Tensor4& input, std::span<const float> weights, std::span<const float> bias,
               int out_features);

struct LinearGrads {
  Tensor4 input;
  std::vector<float> weights;
  std::vector<float> bias;
};

LinearGrads linear_backward(const Tensor4& input, std::span<const float> weights,
                            int out_features, const Tensor4& upstream);

struct LossAndGrad {
  double loss = 0.0;
  Tensor4 grad;
};

// Mean over the batch of -log softmax(logits)[label]. grad = (softmax -
// one_hot) / batch. Throws ValidationError for labels outside [0, classes).
LossAndGrad softmax_cross_entropy(const Tensor4& logits, std::span<const int> labels);

// Index of the largest logit per sample (first on ties).
std::vector<int> argmax_classes(const Tensor4& logits);

}  // namespace gsan
