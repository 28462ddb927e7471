#pragma once

// Power-of-two ("bit-shift") weights and the convolution built on them.
//
// A shift weight has the value s * 2^p with s in {-1, 0, +1} and an integer
// exponent p. Multiplying an activation by it is an exponent adjustment plus
// an optional sign flip, so the forward pass needs no multiplier. Training
// keeps a continuous proxy per weight and re-quantizes it after each update;
// gradients reach the proxy through a straight-through estimator.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "gsan/tensor.hpp"

namespace gsan {

struct ShiftRange {
  int p_min = -8;
  int p_max = 8;

  // Proxies with magnitude below 2^(p_min - 1) quantize to zero.
  float zero_threshold() const noexcept;
  void validate() const;
};

struct ShiftWeight {
  std::int8_t sign = 0;      // -1, 0 or +1
  std::int8_t exponent = 0;  // within [p_min, p_max]
  float proxy = 0.0f;

  float value() const noexcept;
  bool operator==(const ShiftWeight&) const = default;
};

// sign(proxy) and round(log2 |proxy|) clamped to the range; zero below the
// threshold. Throws ValidationError for NaN or infinite proxies.
ShiftWeight quantize_shift(float proxy, ShiftRange range = {});

// x * (s * 2^p) computed through the float exponent field. Falls back to a
// multiplication by the exact power of two for zeros, subnormals, non-finite
// values and results that would leave the normal range, so the result is
// always bit-identical to `x * ShiftWeight::value()`.
float apply_shift(float x, std::int8_t sign, std::int8_t exponent) noexcept;

class ShiftFilterBank {
 public:
  ShiftFilterBank() = default;
  // Quantizes `proxies` immediately. Bias may be empty (treated as zeros).
  ShiftFilterBank(ConvGeometry geometry, std::vector<float> proxies, std::vector<float> bias,
                  ShiftRange range = {});
  // Restores a bank with explicit (s, p) pairs, e.g. from a checkpoint.
  // Throws ValidationError when a pair is outside the range.
  static ShiftFilterBank from_quantized(ConvGeometry geometry, std::vector<float> proxies,
                                        std::vector<std::int8_t> signs,
                                        std::vector<std::int8_t> exponents,
                                        std::vector<float> bias, ShiftRange range = {});

  const ConvGeometry& geometry() const noexcept { return geometry_; }
  const ShiftRange& range() const noexcept { return range_; }
  std::size_t size() const noexcept { return proxies_.size(); }

  std::span<float> proxies() noexcept { return proxies_; }
  std::span<const float> proxies() const noexcept { return proxies_; }
  std::span<const std::int8_t> signs() const noexcept { return signs_; }
  std::span<const std::int8_t> exponents() const noexcept { return exponents_; }
  std::span<float> bias() noexcept { return bias_; }
  std::span<const float> bias() const noexcept { return bias_; }

  ShiftWeight weight(std::size_t i) const noexcept {
    return {signs_[i], exponents_[i], proxies_[i]};
  }

  // Re-derives every (s, p) pair from the current proxies.
  void requantize();
  // Dense float filter bank holding s * 2^p.
  std::vector<float> densify() const;

 private:
  ConvGeometry geometry_{};
  ShiftRange range_{};
  std::vector<float> proxies_;
  std::vector<std::int8_t> signs_;
  std::vector<std::int8_t> exponents_;
  std::vector<float> bias_;
};

// Kaiming-uniform proxies over the filter fan-in, magnitudes clamped into
// [2^p_min, 2^p_max].
std::vector<float> init_shift_proxies(const ConvGeometry& geometry, ShiftRange range,
                                      std::mt19937_64& rng);

Tensor4 shift_conv2d(const Tensor4& input, const ShiftFilterBank& bank);

struct ShiftConvGrads {
  Tensor4 input;             // against the quantized weights
  std::vector<float> proxy;  // straight-through: dense weight gradient
  std::vector<float> bias;
};

ShiftConvGrads shift_conv2d_backward(const Tensor4& input, const ShiftFilterBank& bank,
                                     const Tensor4& upstream);

}  // namespace gsan
