#pragma once

// GhostSA building blocks.
//
// A GhostSA module produces c_o channels in two parts:
//   intrinsic  m1 = ceil(c_o / gamma) channels from a d x d shift conv;
//   ghost      m2 = c_o - m1 channels generated from the intrinsic maps by a
//              k x k depthwise shift conv followed by a 1x1 adder conv.
// Output is the channel concatenation [intrinsic, ghost]. Every conv is
// followed by batch norm.
//
// A bottleneck stacks two modules around a residual shortcut; the stride-2
// variant downsamples with a 2x2 max-pool between the modules.

#include <random>
#include <string>
#include <vector>

#include "gsan/layers.hpp"
#include "gsan/tensor.hpp"

namespace gsan {

struct ChannelSplit {
  int intrinsic = 0;  // m1
  int ghost = 0;      // m2

  bool operator==(const ChannelSplit&) const = default;
};

// m1 = ceil(c_o / gamma), m2 = c_o - m1. Throws ConfigError for gamma < 2 or
// c_o < 2.
ChannelSplit split_channels(int out_channels, int gamma);

struct GhostSAConfig {
  int in_channels = 1;
  int out_channels = 2;
  int gamma = 2;
  int intrinsic_kernel = 1;  // d
  int ghost_kernel = 3;      // k
  int stride = 1;            // applied by the intrinsic conv

  void validate() const;
  ChannelSplit split() const { return split_channels(out_channels, gamma); }
  // Depthwise channel multiplier ceil(m2 / m1); the depthwise stage emits
  // m1 * multiplier maps which the adder projects onto exactly m2.
  int depthwise_multiplier() const;
  int depthwise_channels() const;

  ConvGeometry intrinsic_geometry() const;
  ConvGeometry depthwise_geometry() const;
  ConvGeometry pointwise_geometry() const;
};

class GhostSAModule {
 public:
  GhostSAModule() = default;
  GhostSAModule(const GhostSAConfig& config, std::mt19937_64& rng);

  const GhostSAConfig& config() const noexcept { return config_; }

  Tensor4 forward(const Tensor4& x);
  Tensor4 infer(const Tensor4& x) const;
  Tensor4 backward(const Tensor4& dy);

  ShiftConv& intrinsic() noexcept { return intrinsic_; }
  ShiftConv& depthwise() noexcept { return depthwise_; }
  AdderConv& pointwise() noexcept { return pointwise_; }
  BatchNorm2d& intrinsic_bn() noexcept { return intrinsic_bn_; }
  BatchNorm2d& depthwise_bn() noexcept { return depthwise_bn_; }
  BatchNorm2d& pointwise_bn() noexcept { return pointwise_bn_; }
  const ShiftConv& intrinsic() const noexcept { return intrinsic_; }
  const ShiftConv& depthwise() const noexcept { return depthwise_; }
  const AdderConv& pointwise() const noexcept { return pointwise_; }
  const BatchNorm2d& intrinsic_bn() const noexcept { return intrinsic_bn_; }
  const BatchNorm2d& depthwise_bn() const noexcept { return depthwise_bn_; }
  const BatchNorm2d& pointwise_bn() const noexcept { return pointwise_bn_; }

  void requantize();
  void set_relaxed(bool relaxed);
  void collect_params(const std::string& prefix, std::vector<ParamRef>& out);
  void export_state(const std::string& prefix, TensorTable& out) const;
  void import_state(const std::string& prefix, const TensorTable& table);
  void collect_layers(const std::string& prefix, std::vector<LayerRecord>& out) const;

 private:
  GhostSAConfig config_{};
  ShiftConv intrinsic_;
  BatchNorm2d intrinsic_bn_;
  ShiftConv depthwise_;
  BatchNorm2d depthwise_bn_;
  AdderConv pointwise_;
  BatchNorm2d pointwise_bn_;
};

struct BottleneckConfig {
  int in_channels = 1;
  int expansion_channels = 2;
  int out_channels = 2;
  int stride = 1;  // 1 or 2
  int gamma = 2;
  int intrinsic_kernel = 1;
  int ghost_kernel = 3;

  void validate() const;
  GhostSAConfig expand_config() const;
  GhostSAConfig project_config() const;
  // 1x1 shift conv on the shortcut when channel counts differ.
  bool has_projection() const noexcept { return in_channels != out_channels; }
};

class GhostSABottleneck {
 public:
  GhostSABottleneck() = default;
  GhostSABottleneck(const BottleneckConfig& config, std::mt19937_64& rng);

  const BottleneckConfig& config() const noexcept { return config_; }

  Tensor4 forward(const Tensor4& x);
  Tensor4 infer(const Tensor4& x) const;
  Tensor4 backward(const Tensor4& dy);

  GhostSAModule& expand() noexcept { return expand_; }
  GhostSAModule& project() noexcept { return project_; }
  const GhostSAModule& expand() const noexcept { return expand_; }
  const GhostSAModule& project() const noexcept { return project_; }
  ShiftConv& shortcut_conv() noexcept { return shortcut_conv_; }
  BatchNorm2d& shortcut_bn() noexcept { return shortcut_bn_; }
  const ShiftConv& shortcut_conv() const noexcept { return shortcut_conv_; }
  const BatchNorm2d& shortcut_bn() const noexcept { return shortcut_bn_; }

  void requantize();
  void set_relaxed(bool relaxed);
  void collect_params(const std::string& prefix, std::vector<ParamRef>& out);
  void export_state(const std::string& prefix, TensorTable& out) const;
  void import_state(const std::string& prefix, const TensorTable& table);
  void collect_layers(const std::string& prefix, std::vector<LayerRecord>& out) const;

 private:
  Tensor4 shortcut_infer(const Tensor4& x) const;

  BottleneckConfig config_{};
  GhostSAModule expand_;
  GhostSAModule project_;
  ShiftConv shortcut_conv_;
  BatchNorm2d shortcut_bn_;

  // training caches
  Tensor4 input_;
  Tensor4 expanded_;  // expand output before ReLU
  Tensor4 activated_;  // after ReLU, before pooling
};

}  // namespace gsan
