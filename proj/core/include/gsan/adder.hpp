#pragma once

// Adder filters: a sliding window that scores each input patch by its
// negative L1 distance to the filter instead of a dot product.

#include <random>
#include <span>
#include <vector>

#include "gsan/tensor.hpp"

namespace gsan {

struct AdderFilterBank {
  ConvGeometry geometry;
  std::vector<float> weights;  // out x (in / groups) x k x k
  std::vector<float> bias;     // one per output channel

  // Zero bias, weights ~ N(0, 2 / fan_in).
  static AdderFilterBank init(const ConvGeometry& geometry, std::mt19937_64& rng);
  void validate() const;
};

// y = -sum |x_patch - w| + b
Tensor4 adder_conv2d(const Tensor4& input, const AdderFilterBank& bank);

struct AdderConvGrads {
  Tensor4 input;
  std::vector<float> weights;
  std::vector<float> bias;
};

// Weight gradient: upstream * sign(x - w), the exact derivative with the kink
// taken as 0. Input gradient: upstream * clamp(w - x, -1, 1), the HardTanh
// clipped form that keeps magnitudes bounded through stacked adder layers.
AdderConvGrads adder_conv2d_backward(const Tensor4& input, const AdderFilterBank& bank,
                                     const Tensor4& upstream);

// Per-layer normalized step eta * sqrt(n) / (||grad||_2 + 1e-8) * grad.
std::vector<float> adder_lr_scale(std::span<const float> grad, float eta);

}  // namespace gsan
