#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gsan/ghost_sa.hpp"
#include "gsan/layers.hpp"
#include "gsan/tensor.hpp"

namespace gsan {

struct StageSpec {
  int in = 0;
  int expansion = 0;
  int out = 0;
  int stride = 1;
  int gamma = 0;  // 0: use NetworkSpec::gamma_default

  bool operator==(const StageSpec&) const = default;
};

// Declarative GhostSANet description. Channel counts are the unscaled
// ("1.0x") widths; `alpha` scales every width except the image channels and
// the class count.
struct NetworkSpec {
  int input_channels = 1;
  int input_size = 28;  // square input extent, used by the cost analyzer
  int stem_channels = 16;
  int stem_stride = 1;
  std::vector<StageSpec> stages;
  int head_channels = 64;
  double alpha = 1.0;
  int classes = 10;
  int gamma_default = 2;
  int intrinsic_kernel = 1;
  int ghost_kernel = 3;

  // Throws ConfigError naming the offending stage.
  void validate() const;
  // Widths with alpha applied (alpha of the result is 1).
  NetworkSpec scaled() const;
  int stage_gamma(std::size_t stage) const;
  BottleneckConfig bottleneck(std::size_t stage) const;

  bool operator==(const NetworkSpec&) const = default;
};

// round(alpha * channels) rounded up to a multiple of 4, at least 4.
// alpha == 1 returns `channels` unchanged.
int scale_channels(int channels, double alpha);

// Structural census of a built model.
struct Census {
  std::size_t shift_conv_banks = 0;
  std::size_t adder_conv_banks = 0;
  std::size_t dense_conv_banks = 0;
  std::size_t linear_layers = 0;
  std::size_t batch_norm_layers = 0;
  std::size_t shift_weights = 0;
  std::size_t adder_weights = 0;
  std::size_t linear_weights = 0;
  std::size_t parameters = 0;  // every trainable scalar
};

Census census_of(const std::vector<LayerRecord>& layers, std::size_t parameters);

// stem (3x3 shift conv, BN, ReLU) -> GhostSA bottlenecks -> head (1x1 shift
// conv, BN, hard-swish) -> global average pool -> linear classifier.
class GhostSANet {
 public:
  GhostSANet(const NetworkSpec& spec, std::uint64_t seed);

  const NetworkSpec& spec() const noexcept { return spec_; }

  // Training-mode forward; caches activations for backward().
  Tensor4 forward(const Tensor4& x);
  // Evaluation-mode forward; safe to call concurrently.
  Tensor4 infer(const Tensor4& x) const;
  // Back-propagates d loss / d logits through the cached forward pass and
  // overwrites every parameter gradient.
  void backward(const Tensor4& dlogits);

  std::vector<ParamRef> parameters();
  std::size_t parameter_count();
  TensorTable state() const;
  void load_state(const TensorTable& table);
  void requantize();
  void set_relaxed(bool relaxed);

  std::vector<LayerRecord> layers() const;
  Census census();

  std::vector<GhostSABottleneck>& stages() noexcept { return stages_; }
  ShiftConv& stem() noexcept { return stem_; }
  ShiftConv& head() noexcept { return head_; }
  Linear& classifier() noexcept { return classifier_; }

 private:
  NetworkSpec spec_;
  NetworkSpec effective_;
  ShiftConv stem_;
  BatchNorm2d stem_bn_;
  std::vector<GhostSABottleneck> stages_;
  ShiftConv head_;
  BatchNorm2d head_bn_;
  Linear classifier_;

  // training caches
  Tensor4 stem_pre_;
  Tensor4 head_pre_;
  Shape4 head_shape_{};
};

}  // namespace gsan
