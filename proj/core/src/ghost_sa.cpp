#include "gsan/ghost_sa.hpp"

#include "gsan/error.hpp"
#include "gsan/ops.hpp"

namespace gsan {

ChannelSplit split_channels(int out_channels, int gamma) {
  if (gamma < 2) throw ConfigError("gamma must be >= 2, got " + std::to_string(gamma));
  if (out_channels < 2) {
    throw ConfigError("a GhostSA split needs >= 2 output channels, got " +
                      std::to_string(out_channels));
  }
  const int intrinsic = (out_channels + gamma - 1) / gamma;
  return {intrinsic, out_channels - intrinsic};
}

// ---- GhostSAConfig ---------------------------------------------------------------

void GhostSAConfig::validate() const {
  if (in_channels < 1) throw ConfigError("GhostSA in_channels must be >= 1");
  split();
  if (intrinsic_kernel < 1 || intrinsic_kernel % 2 == 0) {
    throw ConfigError("intrinsic kernel must be odd, got " + std::to_string(intrinsic_kernel));
  }
  if (ghost_kernel < 1 || ghost_kernel % 2 == 0) {
    throw ConfigError("ghost kernel must be odd, got " + std::to_string(ghost_kernel));
  }
  if (stride < 1) throw ConfigError("GhostSA stride must be >= 1");
}

int GhostSAConfig::depthwise_multiplier() const {
  const ChannelSplit s = split();
  return (s.ghost + s.intrinsic - 1) / s.intrinsic;
}

int GhostSAConfig::depthwise_channels() const { return split().intrinsic * depthwise_multiplier(); }

ConvGeometry GhostSAConfig::intrinsic_geometry() const {
  return same_conv(in_channels, split().intrinsic, intrinsic_kernel, stride);
}

ConvGeometry GhostSAConfig::depthwise_geometry() const {
  const int m1 = split().intrinsic;
  return same_conv(m1, depthwise_channels(), ghost_kernel, 1, m1);
}

ConvGeometry GhostSAConfig::pointwise_geometry() const {
  return same_conv(depthwise_channels(), split().ghost, 1);
}

// ---- GhostSAModule ---------------------------------------------------------------

GhostSAModule::GhostSAModule(const GhostSAConfig& config, std::mt19937_64& rng) : config_(config) {
  config_.validate();
  intrinsic_ = ShiftConv(config_.intrinsic_geometry(), rng);
  intrinsic_bn_ = BatchNorm2d(config_.split().intrinsic);
  depthwise_ = ShiftConv(config_.depthwise_geometry(), rng);
  depthwise_bn_ = BatchNorm2d(config_.depthwise_channels());
  pointwise_ = AdderConv(config_.pointwise_geometry(), rng);
  pointwise_bn_ = BatchNorm2d(config_.split().ghost);
}

Tensor4 GhostSAModule::forward(const Tensor4& x) {
  Tensor4 intrinsic = intrinsic_bn_.forward(intrinsic_.forward(x));
  Tensor4 cheap = depthwise_bn_.forward(depthwise_.forward(intrinsic));
  Tensor4 ghost = pointwise_bn_.forward(pointwise_.forward(cheap));
  return concat_channels(intrinsic, ghost);
}

Tensor4 GhostSAModule::infer(const Tensor4& x) const {
  Tensor4 intrinsic = intrinsic_bn_.infer(intrinsic_.infer(x));
  Tensor4 cheap = depthwise_bn_.infer(depthwise_.infer(intrinsic));
  Tensor4 ghost = pointwise_bn_.infer(pointwise_.infer(cheap));
  return concat_channels(intrinsic, ghost);
}

Tensor4 GhostSAModule::backward(const Tensor4& dy) {
  auto [d_intrinsic, d_ghost] = slice_channels(dy, config_.split().intrinsic);
  Tensor4 d_cheap = pointwise_.backward(pointwise_bn_.backward(d_ghost));
  Tensor4 d_from_ghost = depthwise_.backward(depthwise_bn_.backward(d_cheap));
  Tensor4 d_total = add(d_intrinsic, d_from_ghost);
  return intrinsic_.backward(intrinsic_bn_.backward(d_total));
}

void GhostSAModule::requantize() {
  intrinsic_.requantize();
  depthwise_.requantize();
}

void GhostSAModule::set_relaxed(bool relaxed) {
  intrinsic_.set_relaxed(relaxed);
  depthwise_.set_relaxed(relaxed);
}

void GhostSAModule::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  intrinsic_.collect_params(prefix + ".intrinsic", out);
  intrinsic_bn_.collect_params(prefix + ".intrinsic_bn", out);
  depthwise_.collect_params(prefix + ".depthwise", out);
  depthwise_bn_.collect_params(prefix + ".depthwise_bn", out);
  pointwise_.collect_params(prefix + ".pointwise", out);
  pointwise_bn_.collect_params(prefix + ".pointwise_bn", out);
}

void GhostSAModule::export_state(const std::string& prefix, TensorTable& out) const {
  intrinsic_.export_state(prefix + ".intrinsic", out);
  intrinsic_bn_.export_state(prefix + ".intrinsic_bn", out);
  depthwise_.export_state(prefix + ".depthwise", out);
  depthwise_bn_.export_state(prefix + ".depthwise_bn", out);
  pointwise_.export_state(prefix + ".pointwise", out);
  pointwise_bn_.export_state(prefix + ".pointwise_bn", out);
}

void GhostSAModule::import_state(const std::string& prefix, const TensorTable& table) {
  intrinsic_.import_state(prefix + ".intrinsic", table);
  intrinsic_bn_.import_state(prefix + ".intrinsic_bn", table);
  depthwise_.import_state(prefix + ".depthwise", table);
  depthwise_bn_.import_state(prefix + ".depthwise_bn", table);
  pointwise_.import_state(prefix + ".pointwise", table);
  pointwise_bn_.import_state(prefix + ".pointwise_bn", table);
}

void GhostSAModule::collect_layers(const std::string& prefix,
                                   std::vector<LayerRecord>& out) const {
  intrinsic_.collect_layers(prefix + ".intrinsic", out);
  intrinsic_bn_.collect_layers(prefix + ".intrinsic_bn", out);
  depthwise_.collect_layers(prefix + ".depthwise", out);
  depthwise_bn_.collect_layers(prefix + ".depthwise_bn", out);
  pointwise_.collect_layers(prefix + ".pointwise", out);
  pointwise_bn_.collect_layers(prefix + ".pointwise_bn", out);
}

// ---- BottleneckConfig -----------------------------------------------------------

void BottleneckConfig::validate() const {
  if (stride != 1 && stride != 2) {
    throw ConfigError("bottleneck stride must be 1 or 2, got " + std::to_string(stride));
  }
  expand_config().validate();
  project_config().validate();
}

GhostSAConfig BottleneckConfig::expand_config() const {
  return {in_channels, expansion_channels, gamma, intrinsic_kernel, ghost_kernel, 1};
}

GhostSAConfig BottleneckConfig::project_config() const {
  return {expansion_channels, out_channels, gamma, intrinsic_kernel, ghost_kernel, 1};
}

// ---- GhostSABottleneck ------------------------------------------------------------

GhostSABottleneck::GhostSABottleneck(const BottleneckConfig& config, std::mt19937_64& rng)
    : config_(config) {
  config_.validate();
  expand_ = GhostSAModule(config_.expand_config(), rng);
  project_ = GhostSAModule(config_.project_config(), rng);
  if (config_.has_projection()) {
    shortcut_conv_ = ShiftConv(same_conv(config_.in_channels, config_.out_channels, 1), rng);
    shortcut_bn_ = BatchNorm2d(config_.out_channels);
  }
}

Tensor4 GhostSABottleneck::forward(const Tensor4& x) {
  input_ = x;
  expanded_ = expand_.forward(x);
  activated_ = relu(expanded_);
  const Tensor4 pooled = config_.stride == 2 ? maxpool2d(activated_, 2, 2) : activated_;
  Tensor4 main = project_.forward(pooled);

  Tensor4 shortcut = config_.stride == 2 ? maxpool2d(x, 2, 2) : x;
  if (config_.has_projection()) shortcut = shortcut_bn_.forward(shortcut_conv_.forward(shortcut));
  return add(main, shortcut);
}

Tensor4 GhostSABottleneck::shortcut_infer(const Tensor4& x) const {
  Tensor4 shortcut = config_.stride == 2 ? maxpool2d(x, 2, 2) : x;
  if (config_.has_projection()) shortcut = shortcut_bn_.infer(shortcut_conv_.infer(shortcut));
  return shortcut;
}

Tensor4 GhostSABottleneck::infer(const Tensor4& x) const {
  const Tensor4 activated = relu(expand_.infer(x));
  const Tensor4 pooled = config_.stride == 2 ? maxpool2d(activated, 2, 2) : activated;
  return add(project_.infer(pooled), shortcut_infer(x));
}

Tensor4 GhostSABottleneck::backward(const Tensor4& dy) {
  Tensor4 d_pooled = project_.backward(dy);
  Tensor4 d_activated =
      config_.stride == 2 ? maxpool2d_backward(activated_, 2, 2, d_pooled) : std::move(d_pooled);
  Tensor4 dx = expand_.backward(relu_backward(expanded_, d_activated));

  Tensor4 d_shortcut = dy;
  if (config_.has_projection()) d_shortcut = shortcut_conv_.backward(shortcut_bn_.backward(dy));
  if (config_.stride == 2) d_shortcut = maxpool2d_backward(input_, 2, 2, d_shortcut);
  return add(dx, d_shortcut);
}

void GhostSABottleneck::requantize() {
  expand_.requantize();
  project_.requantize();
  if (config_.has_projection()) shortcut_conv_.requantize();
}

void GhostSABottleneck::set_relaxed(bool relaxed) {
  expand_.set_relaxed(relaxed);
  project_.set_relaxed(relaxed);
  shortcut_conv_.set_relaxed(relaxed);
}

void GhostSABottleneck::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  expand_.collect_params(prefix + ".expand", out);
  project_.collect_params(prefix + ".project", out);
  if (config_.has_projection()) {
    shortcut_conv_.collect_params(prefix + ".shortcut", out);
    shortcut_bn_.collect_params(prefix + ".shortcut_bn", out);
  }
}

void GhostSABottleneck::export_state(const std::string& prefix, TensorTable& out) const {
  expand_.export_state(prefix + ".expand", out);
  project_.export_state(prefix + ".project", out);
  if (config_.has_projection()) {
    shortcut_conv_.export_state(prefix + ".shortcut", out);
    shortcut_bn_.export_state(prefix + ".shortcut_bn", out);
  }
}

void GhostSABottleneck::import_state(const std::string& prefix, const TensorTable& table) {
  expand_.import_state(prefix + ".expand", table);
  project_.import_state(prefix + ".project", table);
  if (config_.has_projection()) {
    shortcut_conv_.import_state(prefix + ".shortcut", table);
    shortcut_bn_.import_state(prefix + ".shortcut_bn", table);
  }
}

void GhostSABottleneck::collect_layers(const std::string& prefix,
                                       std::vector<LayerRecord>& out) const {
  expand_.collect_layers(prefix + ".expand", out);
  project_.collect_layers(prefix + ".project", out);
  if (config_.has_projection()) {
    shortcut_conv_.collect_layers(prefix + ".shortcut", out);
    shortcut_bn_.collect_layers(prefix + ".shortcut_bn", out);
  }
}

}  // namespace gsan
