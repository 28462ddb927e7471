#pragma once

// Trainable layer wrappers around the stateless operators. A layer owns its
// parameters and gradients and caches what its backward pass needs.
//
//   forward(x)   training mode: caches inputs, batch-norm uses batch stats
//   infer(x)     evaluation mode: const, touches nothing
//   backward(dy) overwrites the layer's gradients, returns d loss / d x

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gsan/adder.hpp"
#include "gsan/ops.hpp"
#include "gsan/shift.hpp"
#include "gsan/tensor.hpp"

namespace gsan {

enum class ParamRole { shift_proxy, adder_weight, dense_weight, bias, bn_scale, bn_shift };

const char* to_string(ParamRole role);
// Weight decay applies to filter and classifier weights only.
bool decays(ParamRole role);

// A view of one trainable tensor and its gradient.
struct ParamRef {
  std::string name;
  ParamRole role;
  std::span<float> value;
  std::span<const float> grad;
};

// A named, typed copy of a parameter or buffer, as stored in checkpoints.
struct NamedTensor {
  std::string name;
  std::vector<std::int64_t> shape;
  std::variant<std::vector<float>, std::vector<std::int8_t>> values;

  std::size_t element_count() const;
};

using TensorTable = std::vector<NamedTensor>;

// Looks up `name` and checks its element type and shape. Throws
// ValidationError when the entry is missing or does not match.
const std::vector<float>& require_f32(const TensorTable& table, const std::string& name,
                                      const std::vector<std::int64_t>& shape);
const std::vector<std::int8_t>& require_i8(const TensorTable& table, const std::string& name,
                                           const std::vector<std::int64_t>& shape);

enum class LayerKind { dense_conv, shift_conv, adder_conv, batch_norm, linear };

const char* to_string(LayerKind kind);

// One entry of a model's structural census.
struct LayerRecord {
  std::string name;
  LayerKind kind;
  ConvGeometry geometry{};  // conv layers only
  std::size_t weights = 0;
};

class ShiftConv {
 public:
  ShiftConv() = default;
  ShiftConv(const ConvGeometry& geometry, std::mt19937_64& rng, ShiftRange range = {});

  Tensor4 forward(const Tensor4& x);
  Tensor4 infer(const Tensor4& x) const;
  Tensor4 backward(const Tensor4& dy);

  // Straight-through reference mode: evaluates with the continuous proxies
  // in place of s * 2^p. Used to check gradients; never set in training.
  void set_relaxed(bool relaxed) noexcept { relaxed_ = relaxed; }
  void requantize() { bank_.requantize(); }

  const ShiftFilterBank& bank() const noexcept { return bank_; }
  ShiftFilterBank& bank() noexcept { return bank_; }

  void collect_params(const std::string& prefix, std::vector<ParamRef>& out);
  void export_state(const std::string& prefix, TensorTable& out) const;
  void import_state(const std::string& prefix, const TensorTable& table);
  void collect_layers(const std::string& prefix, std::vector<LayerRecord>& out) const;

 private:
  std::vector<std::int64_t> weight_shape() const;

  ShiftFilterBank bank_;
  bool relaxed_ = false;
  Tensor4 input_;
  std::vector<float> proxy_grad_;
  std::vector<float> bias_grad_;
};

class AdderConv {
 public:
  AdderConv() = default;
  AdderConv(const ConvGeometry& geometry, std::mt19937_64& rng);

  Tensor4 forward(const Tensor4& x);
  Tensor4 infer(const Tensor4& x) const;
  Tensor4 backward(const Tensor4& dy);

  const AdderFilterBank& bank() const noexcept { return bank_; }
  AdderFilterBank& bank() noexcept { return bank_; }

  void collect_params(const std::string& prefix, std::vector<ParamRef>& out);
  void export_state(const std::string& prefix, TensorTable& out) const;
  void import_state(const std::string& prefix, const TensorTable& table);
  void collect_layers(const std::string& prefix, std::vector<LayerRecord>& out) const;

 private:
  std::vector<std::int64_t> weight_shape() const;

  AdderFilterBank bank_;
  Tensor4 input_;
  std::vector<float> weight_grad_;
  std::vector<float> bias_grad_;
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels) : state_(BatchNormState::identity(channels)) {}

  Tensor4 forward(const Tensor4& x);
  Tensor4 infer(const Tensor4& x) const;
  Tensor4 backward(const Tensor4& dy);

  const BatchNormState& state() const noexcept { return state_; }
  BatchNormState& state() noexcept { return state_; }

  void collect_params(const std::string& prefix, std::vector<ParamRef>& out);
  void export_state(const std::string& prefix, TensorTable& out) const;
  void import_state(const std::string& prefix, const TensorTable& table);
  void collect_layers(const std::string& prefix, std::vector<LayerRecord>& out) const;

 private:
  BatchNormState state_;
  BatchNormCache cache_;
  std::vector<float> scale_grad_;
  std::vector<float> shift_grad_;
};

// Fully connected classifier head (the only multiplying layer of a model).
class Linear {
 public:
  Linear() = default;
  Linear(int in_features, int out_features, std::mt19937_64& rng);

  Tensor4 forward(const Tensor4& x);
  Tensor4 infer(const Tensor4& x) const;
  Tensor4 backward(const Tensor4& dy);

  int in_features() const noexcept { return in_features_; }
  int out_features() const noexcept { return out_features_; }
  std::span<float> weights() noexcept { return weights_; }
  std::span<float> bias() noexcept { return bias_; }

  void collect_params(const std::string& prefix, std::vector<ParamRef>& out);
  void export_state(const std::string& prefix, TensorTable& out) const;
  void import_state(const std::string& prefix, const TensorTable& table);
  void collect_layers(const std::string& prefix, std::vector<LayerRecord>& out) const;

 private:
  int in_features_ = 0;
  int out_features_ = 0;
  std::vector<float> weights_;
  std::vector<float> bias_;
  Tensor4 input_;
  std::vector<float> weight_grad_;
  std::vector<float> bias_grad_;
};

}  // namespace gsan
