#include "gsan/adder.hpp"

#include <algorithm>
#include <cmath>

#include "correlate.hpp"

namespace gsan {

AdderFilterBank AdderFilterBank::init(const ConvGeometry& geometry, std::mt19937_64& rng) {
  geometry.validate();
  std::normal_distribution<float> dist(0.0f,
                                       std::sqrt(2.0f / static_cast<float>(geometry.filter_size())));
  AdderFilterBank bank{geometry, std::vector<float>(geometry.weight_count()),
                       std::vector<float>(static_cast<std::size_t>(geometry.out_channels), 0.0f)};
  for (float& w : bank.weights) w = dist(rng);
  return bank;
}

void AdderFilterBank::validate() const { detail::check_bank(geometry, weights.size(), bias.size()); }

Tensor4 adder_conv2d(const Tensor4& input, const AdderFilterBank& bank) {
  bank.validate();
  // Summed in double: the terms share a sign, so float accumulation error
  // grows with the filter size.
  return detail::correlate<float>(input, bank.geometry, bank.weights, bank.bias,
                                  [](float x, float w) { return -std::fabs(double(x) - double(w)); });
}

AdderConvGrads adder_conv2d_backward(const Tensor4& input, const AdderFilterBank& bank,
                                     const Tensor4& upstream) {
  bank.validate();
  auto g = detail::correlate_backward(
      input, bank.geometry, bank.weights, upstream,
      [](float x, float w) {
        return static_cast<float>(x > w) - static_cast<float>(x < w);
      },
      [](float x, float w) {
        const float v = w - x;
        const float lo = v < -1.0f ? -1.0f : v;
        return lo > 1.0f ? 1.0f : lo;
      });
  return {std::move(g.input), std::move(g.weights), std::move(g.bias)};
}

std::vector<float> adder_lr_scale(std::span<const float> grad, float eta) {
  double sq = 0.0;
  for (float g : grad) sq += static_cast<double>(g) * g;
  const double scale =
      eta * std::sqrt(static_cast<double>(grad.size())) / (std::sqrt(sq) + 1e-8);
  std::vector<float> step(grad.size());
  for (std::size_t i = 0; i < grad.size(); ++i) step[i] = static_cast<float>(scale * grad[i]);
  return step;
}

}  // namespace gsan
