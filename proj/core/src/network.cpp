#include "gsan/network.hpp"

#include <cmath>

#include "gsan/error.hpp"
#include "gsan/ops.hpp"

namespace gsan {

int scale_channels(int channels, double alpha) {
  if (alpha == 1.0) return channels;
  const auto rounded = static_cast<int>(std::lround(alpha * channels));
  const int up = (rounded + 3) / 4 * 4;
  return up < 4 ? 4 : up;
}

void NetworkSpec::validate() const {
  auto fail = [](const std::string& where, const std::string& what) {
    throw ConfigError(where + ": " + what);
  };
  if (!(alpha > 0.0) || !std::isfinite(alpha)) fail("network", "alpha must be > 0");
  if (input_channels < 1) fail("network", "input_channels must be >= 1");
  if (input_size < 1) fail("network", "input_size must be >= 1");
  if (stem_channels < 1) fail("network", "stem_channels must be >= 1");
  if (stem_stride < 1) fail("network", "stem_stride must be >= 1");
  if (head_channels < 1) fail("network", "head_channels must be >= 1");
  if (classes < 2) fail("network", "classes must be >= 2");
  if (gamma_default < 2) fail("network", "gamma_default must be >= 2");
  if (stages.empty()) fail("network", "at least one stage is required");
  int channels = stem_channels;
  int extent = (input_size - 1) / stem_stride + 1;  // 3x3 stem, padding 1
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const StageSpec& s = stages[i];
    const std::string where = "stage " + std::to_string(i + 1);
    if (s.in != channels) {
      fail(where, "in = " + std::to_string(s.in) + " but the previous layer produces " +
                      std::to_string(channels) + " channels");
    }
    if (s.gamma != 0 && s.gamma < 2) fail(where, "gamma must be >= 2");
    try {
      bottleneck(i).validate();
    } catch (const ConfigError& e) {
      fail(where, e.what());
    }
    if (s.stride == 2 && extent < 2) {
      fail(where, "stride 2 needs a feature map of at least 2x2, the input of " +
                      std::to_string(input_size) + " leaves " + std::to_string(extent) + "x" +
                      std::to_string(extent));
    }
    if (s.stride == 2) extent /= 2;
    channels = s.out;
  }
}

NetworkSpec NetworkSpec::scaled() const {
  NetworkSpec out = *this;
  out.alpha = 1.0;
  out.stem_channels = scale_channels(stem_channels, alpha);
  out.head_channels = scale_channels(head_channels, alpha);
  for (StageSpec& s : out.stages) {
    s.in = scale_channels(s.in, alpha);
    s.expansion = scale_channels(s.expansion, alpha);
    s.out = scale_channels(s.out, alpha);
  }
  return out;
}

int NetworkSpec::stage_gamma(std::size_t stage) const {
  const int g = stages.at(stage).gamma;
  return g == 0 ? gamma_default : g;
}

BottleneckConfig NetworkSpec::bottleneck(std::size_t stage) const {
  const StageSpec& s = stages.at(stage);
  return {s.in, s.expansion, s.out, s.stride, stage_gamma(stage), intrinsic_kernel, ghost_kernel};
}

Census census_of(const std::vector<LayerRecord>& layers, std::size_t parameters) {
  Census c;
  c.parameters = parameters;
  for (const LayerRecord& l : layers) {
    switch (l.kind) {
      case LayerKind::dense_conv:
        ++c.dense_conv_banks;
        break;
      case LayerKind::shift_conv:
        ++c.shift_conv_banks;
        c.shift_weights += l.weights;
        break;
      case LayerKind::adder_conv:
        ++c.adder_conv_banks;
        c.adder_weights += l.weights;
        break;
      case LayerKind::linear:
        ++c.linear_layers;
        c.linear_weights += l.weights;
        break;
      case LayerKind::batch_norm:
        ++c.batch_norm_layers;
        break;
    }
  }
  return c;
}

// ---- GhostSANet -------------------------------------------------------------------

GhostSANet::GhostSANet(const NetworkSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  effective_ = spec_.scaled();
  std::mt19937_64 rng(seed);
  stem_ = ShiftConv(same_conv(effective_.input_channels, effective_.stem_channels, 3,
                              effective_.stem_stride),
                    rng);
  stem_bn_ = BatchNorm2d(effective_.stem_channels);
  for (std::size_t i = 0; i < effective_.stages.size(); ++i) {
    stages_.emplace_back(effective_.bottleneck(i), rng);
  }
  head_ = ShiftConv(same_conv(effective_.stages.back().out, effective_.head_channels, 1), rng);
  head_bn_ = BatchNorm2d(effective_.head_channels);
  classifier_ = Linear(effective_.head_channels, effective_.classes, rng);
}

Tensor4 GhostSANet::forward(const Tensor4& x) {
  stem_pre_ = stem_bn_.forward(stem_.forward(x));
  Tensor4 h = relu(stem_pre_);
  for (GhostSABottleneck& stage : stages_) h = stage.forward(h);
  head_pre_ = head_bn_.forward(head_.forward(h));
  head_shape_ = head_pre_.shape();
  return classifier_.forward(global_avg_pool(hard_swish(head_pre_)));
}

Tensor4 GhostSANet::infer(const Tensor4& x) const {
  Tensor4 h = relu(stem_bn_.infer(stem_.infer(x)));
  for (const GhostSABottleneck& stage : stages_) h = stage.infer(h);
  h = hard_swish(head_bn_.infer(head_.infer(h)));
  return classifier_.infer(global_avg_pool(h));
}

void GhostSANet::backward(const Tensor4& dlogits) {
  Tensor4 d = global_avg_pool_backward(head_shape_, classifier_.backward(dlogits));
  d = head_.backward(head_bn_.backward(hard_swish_backward(head_pre_, d)));
  for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) d = it->backward(d);
  stem_.backward(stem_bn_.backward(relu_backward(stem_pre_, d)));
}

std::vector<ParamRef> GhostSANet::parameters() {
  std::vector<ParamRef> out;
  stem_.collect_params("stem", out);
  stem_bn_.collect_params("stem_bn", out);
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    stages_[i].collect_params("stage" + std::to_string(i + 1), out);
  }
  head_.collect_params("head", out);
  head_bn_.collect_params("head_bn", out);
  classifier_.collect_params("classifier", out);
  return out;
}

std::size_t GhostSANet::parameter_count() {
  std::size_t total = 0;
  for (const ParamRef& p : parameters()) total += p.value.size();
  return total;
}

TensorTable GhostSANet::state() const {
  TensorTable out;
  stem_.export_state("stem", out);
  stem_bn_.export_state("stem_bn", out);
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    stages_[i].export_state("stage" + std::to_string(i + 1), out);
  }
  head_.export_state("head", out);
  head_bn_.export_state("head_bn", out);
  classifier_.export_state("classifier", out);
  return out;
}

void GhostSANet::load_state(const TensorTable& table) {
  stem_.import_state("stem", table);
  stem_bn_.import_state("stem_bn", table);
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    stages_[i].import_state("stage" + std::to_string(i + 1), table);
  }
  head_.import_state("head", table);
  head_bn_.import_state("head_bn", table);
  classifier_.import_state("classifier", table);
}

void GhostSANet::requantize() {
  stem_.requantize();
  for (GhostSABottleneck& stage : stages_) stage.requantize();
  head_.requantize();
}

void GhostSANet::set_relaxed(bool relaxed) {
  stem_.set_relaxed(relaxed);
  for (GhostSABottleneck& stage : stages_) stage.set_relaxed(relaxed);
  head_.set_relaxed(relaxed);
}

std::vector<LayerRecord> GhostSANet::layers() const {
  std::vector<LayerRecord> out;
  stem_.collect_layers("stem", out);
  stem_bn_.collect_layers("stem_bn", out);
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    stages_[i].collect_layers("stage" + std::to_string(i + 1), out);
  }
  head_.collect_layers("head", out);
  head_bn_.collect_layers("head_bn", out);
  classifier_.collect_layers("classifier", out);
  return out;
}

Census GhostSANet::census() { return census_of(layers(), parameter_count()); }

}  // namespace gsan
