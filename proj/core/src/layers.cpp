#include "gsan/layers.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "gsan/error.hpp"

namespace gsan {

const char* to_string(ParamRole role) {
  switch (role) {
    case ParamRole::shift_proxy: return "shift_proxy";
    case ParamRole::adder_weight: return "adder_weight";
    case ParamRole::dense_weight: return "dense_weight";
    case ParamRole::bias: return "bias";
    case ParamRole::bn_scale: return "bn_scale";
    case ParamRole::bn_shift: return "bn_shift";
  }
  return "?";
}

bool decays(ParamRole role) {
  return role == ParamRole::shift_proxy || role == ParamRole::adder_weight ||
         role == ParamRole::dense_weight;
}

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense_conv: return "dense_conv";
    case LayerKind::shift_conv: return "shift_conv";
    case LayerKind::adder_conv: return "adder_conv";
    case LayerKind::batch_norm: return "batch_norm";
    case LayerKind::linear: return "linear";
  }
  return "?";
}

std::size_t NamedTensor::element_count() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::int64_t b) { return a * static_cast<std::size_t>(b); });
}

namespace {

const NamedTensor& find_entry(const TensorTable& table, const std::string& name,
                              const std::vector<std::int64_t>& shape) {
  const auto it = std::find_if(table.begin(), table.end(),
                               [&](const NamedTensor& t) { return t.name == name; });
  if (it == table.end()) throw ValidationError("missing tensor '" + name + "'");
  if (it->shape != shape) throw ValidationError("tensor '" + name + "' has an unexpected shape");
  return *it;
}

std::string join(const std::string& prefix, const char* leaf) { return prefix + "." + leaf; }

std::int64_t i64(std::size_t v) { return static_cast<std::int64_t>(v); }

// Copies into the existing buffer so spans handed out by collect_params stay
// valid across backward passes.
void store(std::vector<float>& dst, const std::vector<float>& src) {
  dst.resize(src.size());
  std::copy(src.begin(), src.end(), dst.begin());
}

}  // namespace

const std::vector<float>& require_f32(const TensorTable& table, const std::string& name,
                                      const std::vector<std::int64_t>& shape) {
  const NamedTensor& t = find_entry(table, name, shape);
  const auto* v = std::get_if<std::vector<float>>(&t.values);
  if (v == nullptr) throw ValidationError("tensor '" + name + "' is not f32");
  return *v;
}

const std::vector<std::int8_t>& require_i8(const TensorTable& table, const std::string& name,
                                           const std::vector<std::int64_t>& shape) {
  const NamedTensor& t = find_entry(table, name, shape);
  const auto* v = std::get_if<std::vector<std::int8_t>>(&t.values);
  if (v == nullptr) throw ValidationError("tensor '" + name + "' is not i8");
  return *v;
}

// ---- ShiftConv ----------------------------------------------------------------

ShiftConv::ShiftConv(const ConvGeometry& geometry, std::mt19937_64& rng, ShiftRange range)
    : bank_(geometry, init_shift_proxies(geometry, range, rng), {}, range) {}

Tensor4 ShiftConv::forward(const Tensor4& x) {
  input_ = x;
  return infer(x);
}

Tensor4 ShiftConv::infer(const Tensor4& x) const {
  if (relaxed_) return conv2d(x, bank_.proxies(), bank_.bias(), bank_.geometry());
  return shift_conv2d(x, bank_);
}

Tensor4 ShiftConv::backward(const Tensor4& dy) {
  if (relaxed_) {
    ConvGrads g = conv2d_backward(input_, bank_.proxies(), bank_.geometry(), dy);
    store(proxy_grad_, g.weights);
    store(bias_grad_, g.bias);
    return std::move(g.input);
  }
  ShiftConvGrads g = shift_conv2d_backward(input_, bank_, dy);
  store(proxy_grad_, g.proxy);
  store(bias_grad_, g.bias);
  return std::move(g.input);
}

std::vector<std::int64_t> ShiftConv::weight_shape() const {
  const ConvGeometry& g = bank_.geometry();
  return {g.out_channels, g.in_per_group(), g.kernel, g.kernel};
}

void ShiftConv::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  proxy_grad_.resize(bank_.size(), 0.0f);
  bias_grad_.resize(bank_.bias().size(), 0.0f);
  out.push_back({join(prefix, "proxy"), ParamRole::shift_proxy, bank_.proxies(), proxy_grad_});
  out.push_back({join(prefix, "bias"), ParamRole::bias, bank_.bias(), bias_grad_});
}

void ShiftConv::export_state(const std::string& prefix, TensorTable& out) const {
  const auto shape = weight_shape();
  const auto bias = bank_.bias();
  const auto proxies = bank_.proxies();
  const auto signs = bank_.signs();
  const auto exponents = bank_.exponents();
  out.push_back({join(prefix, "proxy"), shape, std::vector<float>(proxies.begin(), proxies.end())});
  out.push_back({join(prefix, "sign"), shape, std::vector<std::int8_t>(signs.begin(), signs.end())});
  out.push_back({join(prefix, "exponent"), shape,
                 std::vector<std::int8_t>(exponents.begin(), exponents.end())});
  out.push_back({join(prefix, "bias"), {i64(bias.size())}, std::vector<float>(bias.begin(), bias.end())});
}

void ShiftConv::import_state(const std::string& prefix, const TensorTable& table) {
  const auto shape = weight_shape();
  const std::int64_t channels = bank_.geometry().out_channels;
  bank_ = ShiftFilterBank::from_quantized(
      bank_.geometry(), require_f32(table, join(prefix, "proxy"), shape),
      require_i8(table, join(prefix, "sign"), shape),
      require_i8(table, join(prefix, "exponent"), shape),
      require_f32(table, join(prefix, "bias"), {channels}), bank_.range());
}

void ShiftConv::collect_layers(const std::string& prefix, std::vector<LayerRecord>& out) const {
  out.push_back({prefix, LayerKind::shift_conv, bank_.geometry(), bank_.size()});
}

// ---- AdderConv ----------------------------------------------------------------

AdderConv::AdderConv(const ConvGeometry& geometry, std::mt19937_64& rng)
    : bank_(AdderFilterBank::init(geometry, rng)) {}

Tensor4 AdderConv::forward(const Tensor4& x) {
  input_ = x;
  return adder_conv2d(x, bank_);
}

Tensor4 AdderConv::infer(const Tensor4& x) const { return adder_conv2d(x, bank_); }

Tensor4 AdderConv::backward(const Tensor4& dy) {
  AdderConvGrads g = adder_conv2d_backward(input_, bank_, dy);
  store(weight_grad_, g.weights);
  store(bias_grad_, g.bias);
  return std::move(g.input);
}

std::vector<std::int64_t> AdderConv::weight_shape() const {
  const ConvGeometry& g = bank_.geometry;
  return {g.out_channels, g.in_per_group(), g.kernel, g.kernel};
}

void AdderConv::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  weight_grad_.resize(bank_.weights.size(), 0.0f);
  bias_grad_.resize(bank_.bias.size(), 0.0f);
  out.push_back({join(prefix, "weight"), ParamRole::adder_weight, bank_.weights, weight_grad_});
  out.push_back({join(prefix, "bias"), ParamRole::bias, bank_.bias, bias_grad_});
}

void AdderConv::export_state(const std::string& prefix, TensorTable& out) const {
  out.push_back({join(prefix, "weight"), weight_shape(), bank_.weights});
  out.push_back({join(prefix, "bias"), {i64(bank_.bias.size())}, bank_.bias});
}

void AdderConv::import_state(const std::string& prefix, const TensorTable& table) {
  bank_.weights = require_f32(table, join(prefix, "weight"), weight_shape());
  bank_.bias = require_f32(table, join(prefix, "bias"), {i64(bank_.bias.size())});
}

void AdderConv::collect_layers(const std::string& prefix, std::vector<LayerRecord>& out) const {
  out.push_back({prefix, LayerKind::adder_conv, bank_.geometry, bank_.weights.size()});
}

// ---- BatchNorm2d ----------------------------------------------------------------

Tensor4 BatchNorm2d::forward(const Tensor4& x) {
  return batch_norm(x, state_, Mode::train, &cache_);
}

Tensor4 BatchNorm2d::infer(const Tensor4& x) const { return batch_norm_eval(x, state_); }

Tensor4 BatchNorm2d::backward(const Tensor4& dy) {
  BatchNormGrads g = batch_norm_backward(cache_, state_, dy);
  store(scale_grad_, g.scale);
  store(shift_grad_, g.shift);
  return std::move(g.input);
}

void BatchNorm2d::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  scale_grad_.resize(state_.scale.size(), 0.0f);
  shift_grad_.resize(state_.shift.size(), 0.0f);
  out.push_back({join(prefix, "scale"), ParamRole::bn_scale, state_.scale, scale_grad_});
  out.push_back({join(prefix, "shift"), ParamRole::bn_shift, state_.shift, shift_grad_});
}

void BatchNorm2d::export_state(const std::string& prefix, TensorTable& out) const {
  const std::vector<std::int64_t> shape{state_.channels()};
  out.push_back({join(prefix, "scale"), shape, state_.scale});
  out.push_back({join(prefix, "shift"), shape, state_.shift});
  out.push_back({join(prefix, "running_mean"), shape, state_.running_mean});
  out.push_back({join(prefix, "running_var"), shape, state_.running_var});
}

void BatchNorm2d::import_state(const std::string& prefix, const TensorTable& table) {
  const std::vector<std::int64_t> shape{state_.channels()};
  state_.scale = require_f32(table, join(prefix, "scale"), shape);
  state_.shift = require_f32(table, join(prefix, "shift"), shape);
  state_.running_mean = require_f32(table, join(prefix, "running_mean"), shape);
  state_.running_var = require_f32(table, join(prefix, "running_var"), shape);
}

void BatchNorm2d::collect_layers(const std::string& prefix, std::vector<LayerRecord>& out) const {
  out.push_back({prefix, LayerKind::batch_norm, {}, 0});
}

// ---- Linear ---------------------------------------------------------------------

Linear::Linear(int in_features, int out_features, std::mt19937_64& rng)
    : in_features_(in_features),
      out_features_(out_features),
      weights_(static_cast<std::size_t>(in_features) * out_features),
      bias_(static_cast<std::size_t>(out_features), 0.0f) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(in_features));
  std::uniform_real_distribution<float> dist(-bound, bound);
  for (float& w : weights_) w = dist(rng);
}

Tensor4 Linear::forward(const Tensor4& x) {
  input_ = x;
  return infer(x);
}

Tensor4 Linear::infer(const Tensor4& x) const { return linear(x, weights_, bias_, out_features_); }

Tensor4 Linear::backward(const Tensor4& dy) {
  LinearGrads g = linear_backward(input_, weights_, out_features_, dy);
  store(weight_grad_, g.weights);
  store(bias_grad_, g.bias);
  return std::move(g.input);
}

void Linear::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  weight_grad_.resize(weights_.size(), 0.0f);
  bias_grad_.resize(bias_.size(), 0.0f);
  out.push_back({join(prefix, "weight"), ParamRole::dense_weight, weights_, weight_grad_});
  out.push_back({join(prefix, "bias"), ParamRole::bias, bias_, bias_grad_});
}

void Linear::export_state(const std::string& prefix, TensorTable& out) const {
  out.push_back({join(prefix, "weight"), {out_features_, in_features_}, weights_});
  out.push_back({join(prefix, "bias"), {out_features_}, bias_});
}

void Linear::import_state(const std::string& prefix, const TensorTable& table) {
  weights_ = require_f32(table, join(prefix, "weight"), {out_features_, in_features_});
  bias_ = require_f32(table, join(prefix, "bias"), {out_features_});
}

void Linear::collect_layers(const std::string& prefix, std::vector<LayerRecord>& out) const {
  out.push_back({prefix, LayerKind::linear, {}, weights_.size()});
}

}  // namespace gsan
