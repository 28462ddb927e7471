#include "gsan/shift.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "correlate.hpp"
#include "gsan/error.hpp"
#include "gsan/ops.hpp"

namespace gsan {

float ShiftRange::zero_threshold() const noexcept { return std::ldexp(1.0f, p_min - 1); }

void ShiftRange::validate() const {
  if (p_min > p_max) throw ConfigError("shift range has p_min > p_max");
  // Exponents are stored as int8 and s * 2^p must stay a normal float.
  if (p_min < -126 || p_max > 127) throw ConfigError("shift range exceeds float exponents");
}

float ShiftWeight::value() const noexcept {
  return static_cast<float>(sign) * std::ldexp(1.0f, exponent);
}

ShiftWeight quantize_shift(float proxy, ShiftRange range) {
  if (!std::isfinite(proxy)) {
    throw ValidationError("cannot quantize non-finite proxy weight");
  }
  const float magnitude = std::fabs(proxy);
  if (magnitude < range.zero_threshold()) {
    return {0, static_cast<std::int8_t>(range.p_min), proxy};
  }
  const double p = std::round(std::log2(static_cast<double>(magnitude)));
  const int clamped = std::clamp(static_cast<int>(p), range.p_min, range.p_max);
  return {static_cast<std::int8_t>(proxy < 0.0f ? -1 : 1), static_cast<std::int8_t>(clamped),
          proxy};
}

namespace {

// Precomputed form of one shift weight for the inner loop.
struct PackedShift {
  float scale;  // s * 2^p, used on the fallback path
  std::uint32_t exponent_delta;
  std::uint32_t flip;
  std::int32_t exponent;
  std::uint32_t nonzero;  // 0 or 1
};

PackedShift pack(std::int8_t sign, std::int8_t exponent) noexcept {
  return {static_cast<float>(sign) * std::ldexp(1.0f, exponent),
          static_cast<std::uint32_t>(static_cast<std::int32_t>(exponent)) << 23,
          sign < 0 ? 0x80000000u : 0u, exponent, sign != 0 ? 1u : 0u};
}

inline float shift_packed(float x, const PackedShift& w) noexcept {
  // Branch-free so the accumulation loop vectorizes: both candidates are
  // computed and the exponent-field result is kept only when x is a normal
  // float that stays normal after the shift.
  const auto bits = std::bit_cast<std::uint32_t>(x);
  const std::int32_t biased = static_cast<std::int32_t>((bits >> 23) & 0xffu);
  const std::int32_t shifted = biased + w.exponent;
  const std::uint32_t fast = static_cast<std::uint32_t>(biased != 0) &
                             static_cast<std::uint32_t>(biased != 0xff) &
                             static_cast<std::uint32_t>(shifted > 0) &
                             static_cast<std::uint32_t>(shifted < 0xff) & w.nonzero;
  const std::uint32_t mask = 0u - fast;
  const std::uint32_t by_exponent = (bits + w.exponent_delta) ^ w.flip;
  const std::uint32_t by_multiply = std::bit_cast<std::uint32_t>(x * w.scale);
  return std::bit_cast<float>((by_exponent & mask) | (by_multiply & ~mask));
}

}  // namespace

float apply_shift(float x, std::int8_t sign, std::int8_t exponent) noexcept {
  return shift_packed(x, pack(sign, exponent));
}

namespace {

void check_pair(std::int8_t s, std::int8_t p, const ShiftRange& range) {
  if (s < -1 || s > 1) throw ValidationError("shift sign must be -1, 0 or +1");
  if (p < range.p_min || p > range.p_max) {
    throw ValidationError("shift exponent " + std::to_string(p) + " outside [" +
                          std::to_string(range.p_min) + ", " + std::to_string(range.p_max) + "]");
  }
}

}  // namespace

ShiftFilterBank::ShiftFilterBank(ConvGeometry geometry, std::vector<float> proxies,
                                 std::vector<float> bias, ShiftRange range)
    : geometry_(geometry), range_(range), proxies_(std::move(proxies)), bias_(std::move(bias)) {
  range_.validate();
  if (bias_.empty()) bias_.assign(static_cast<std::size_t>(geometry_.out_channels), 0.0f);
  detail::check_bank(geometry_, proxies_.size(), bias_.size());
  requantize();
}

ShiftFilterBank ShiftFilterBank::from_quantized(ConvGeometry geometry, std::vector<float> proxies,
                                                std::vector<std::int8_t> signs,
                                                std::vector<std::int8_t> exponents,
                                                std::vector<float> bias, ShiftRange range) {
  ShiftFilterBank bank;
  bank.geometry_ = geometry;
  bank.range_ = range;
  range.validate();
  if (bias.empty()) bias.assign(static_cast<std::size_t>(geometry.out_channels), 0.0f);
  detail::check_bank(geometry, proxies.size(), bias.size());
  if (signs.size() != proxies.size() || exponents.size() != proxies.size()) {
    throw DimensionError("weights", "sign/exponent arrays do not match the proxy count");
  }
  for (std::size_t i = 0; i < signs.size(); ++i) check_pair(signs[i], exponents[i], range);
  bank.proxies_ = std::move(proxies);
  bank.signs_ = std::move(signs);
  bank.exponents_ = std::move(exponents);
  bank.bias_ = std::move(bias);
  return bank;
}

void ShiftFilterBank::requantize() {
  signs_.resize(proxies_.size());
  exponents_.resize(proxies_.size());
  for (std::size_t i = 0; i < proxies_.size(); ++i) {
    const ShiftWeight q = quantize_shift(proxies_[i], range_);
    signs_[i] = q.sign;
    exponents_[i] = q.exponent;
  }
}

std::vector<float> ShiftFilterBank::densify() const {
  std::vector<float> dense(proxies_.size());
  for (std::size_t i = 0; i < dense.size(); ++i) dense[i] = weight(i).value();
  return dense;
}

std::vector<float> init_shift_proxies(const ConvGeometry& geometry, ShiftRange range,
                                      std::mt19937_64& rng) {
  const float bound = std::sqrt(6.0f / static_cast<float>(geometry.filter_size()));
  const float lo = std::ldexp(1.0f, range.p_min);
  const float hi = std::ldexp(1.0f, range.p_max);
  std::uniform_real_distribution<float> dist(-bound, bound);
  std::vector<float> proxies(geometry.weight_count());
  for (float& v : proxies) {
    const float x = dist(rng);
    v = std::copysign(std::clamp(std::fabs(x), lo, hi), x);
  }
  return proxies;
}

Tensor4 shift_conv2d(const Tensor4& input, const ShiftFilterBank& bank) {
  const auto signs = bank.signs();
  const auto exponents = bank.exponents();
  std::vector<PackedShift> packed(bank.size());
  for (std::size_t i = 0; i < packed.size(); ++i) packed[i] = pack(signs[i], exponents[i]);
  return detail::correlate<PackedShift>(input, bank.geometry(), packed, bank.bias(),
                                        [](float x, const PackedShift& w) {
                                          return shift_packed(x, w);
                                        });
}

ShiftConvGrads shift_conv2d_backward(const Tensor4& input, const ShiftFilterBank& bank,
                                     const Tensor4& upstream) {
  const std::vector<float> dense = bank.densify();
  ConvGrads g = conv2d_backward(input, dense, bank.geometry(), upstream);
  return {std::move(g.input), std::move(g.weights), std::move(g.bias)};
}

}  // namespace gsan
