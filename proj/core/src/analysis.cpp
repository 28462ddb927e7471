#include "gsan/analysis.hpp"

#include <cmath>
#include <ostream>
#include <utility>

#include "gsan/error.hpp"

namespace gsan {

namespace {

using u64 = std::uint64_t;

u64 area(int h, int w) { return static_cast<u64>(h) * static_cast<u64>(w); }

void conv_output(const ConvGeometry& g, int in_h, int in_w, LayerCost& cost) {
  g.validate();
  cost.out_h = g.output_extent(in_h);
  cost.out_w = g.output_extent(in_w);
}

// Weights read plus outputs written, per output pixel, for a plain conv.
u64 conv_mem(const ConvGeometry& g, u64 hw) {
  return hw * (static_cast<u64>(g.weight_count()) + static_cast<u64>(g.out_channels));
}

}  // namespace

const char* to_string(CostKind kind) {
  switch (kind) {
    case CostKind::standard_conv: return "conv";
    case CostKind::shift_conv: return "shift_conv";
    case CostKind::adder_conv: return "adder_conv";
    case CostKind::ghost_sa: return "ghost_sa";
    case CostKind::batch_norm: return "batch_norm";
    case CostKind::linear: return "linear";
  }
  return "?";
}

LayerSpec LayerSpec::conv(std::string name, CostKind kind, const ConvGeometry& g, int in_h,
                          int in_w) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = kind;
  s.geometry = g;
  s.in_h = in_h;
  s.in_w = in_w;
  return s;
}

LayerSpec LayerSpec::ghost_module(std::string name, const GhostSAConfig& c, int in_h, int in_w) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = CostKind::ghost_sa;
  s.ghost = c;
  s.in_h = in_h;
  s.in_w = in_w;
  return s;
}

LayerSpec LayerSpec::norm(std::string name, int channels) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = CostKind::batch_norm;
  s.channels = channels;
  return s;
}

LayerSpec LayerSpec::dense(std::string name, int in_features, int out_features) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = CostKind::linear;
  s.in_features = in_features;
  s.out_features = out_features;
  return s;
}

void CostReport::add(const LayerCost& layer) {
  flops += layer.flops;
  shift_ops += layer.shift_ops;
  params += layer.params;
  shift_weights += layer.shift_weights;
  adder_weights += layer.adder_weights;
  mult_weights += layer.mult_weights;
  param_bits += layer.param_bits;
  mem_accesses += layer.mem_accesses;
  layers.push_back(layer);
}

u64 flops_standard_conv(const ConvGeometry& geometry, int h_o, int w_o) {
  return static_cast<u64>(geometry.weight_count()) * area(h_o, w_o);
}

LayerCost cost_ghost_sa(const GhostSAConfig& config, int h_o, int w_o) {
  config.validate();
  const ChannelSplit split = config.split();
  const u64 ci = static_cast<u64>(config.in_channels);
  const u64 m1 = static_cast<u64>(split.intrinsic);
  const u64 m2 = static_cast<u64>(split.ghost);
  const u64 g = static_cast<u64>(config.depthwise_channels());
  const u64 d2 = static_cast<u64>(config.intrinsic_kernel) * config.intrinsic_kernel;
  const u64 k2 = static_cast<u64>(config.ghost_kernel) * config.ghost_kernel;
  const u64 hw = area(h_o, w_o);

  LayerCost c;
  c.kind = CostKind::ghost_sa;
  c.out_h = h_o;
  c.out_w = w_o;
  c.flops = hw * g * m2;
  c.shift_ops = hw * (ci * d2 * m1 + g * k2);
  c.shift_weights = ci * d2 * m1 + g * k2;
  c.adder_weights = g * m2;
  const u64 biases = m1 + g + m2;
  c.params = c.shift_weights + c.adder_weights + biases + 2 * biases;
  c.param_bits = std::log2(static_cast<double>(ci * d2 * m1)) +
                 std::log2(static_cast<double>(g * k2)) + static_cast<double>(g * m2);
  c.mem_accesses = hw * (ci * d2 * m1 + m1 + g * k2 + g + g * m2 + m2);
  return c;
}

RatioReport ratios(const GhostSAConfig& config, int baseline_kernel) {
  config.validate();
  if (baseline_kernel < 1) throw ConfigError("baseline kernel must be >= 1");
  const ChannelSplit split = config.split();
  const double ci = config.in_channels;
  const double co = config.out_channels;
  const double m1 = split.intrinsic;
  const double m2 = split.ghost;
  const double k2 = static_cast<double>(baseline_kernel) * baseline_kernel;
  const double d2 = static_cast<double>(config.intrinsic_kernel) * config.intrinsic_kernel;
  const double kg2 = static_cast<double>(config.ghost_kernel) * config.ghost_kernel;
  const double gamma = config.gamma;

  RatioReport r;
  r.r_s = ci * co * k2 / (m1 * m2);
  r.r_c = ci * co * k2 / (std::log2(ci * m1 * d2) + std::log2(m1 * kg2) + m1 * m2);
  r.r_m = (ci * co * k2 + co) / (ci * m1 * d2 + m1 + m1 * kg2 + m1 + m1 * m2 + m2);
  r.r_m_closed_form = (k2 * gamma * ci + co) / (ci + co + k2 + 1.0);
  r.k2gamma = k2 * gamma;
  return r;
}

LayerCost analyze_layer(const LayerSpec& layer) {
  LayerCost c;
  switch (layer.kind) {
    case CostKind::standard_conv: {
      conv_output(layer.geometry, layer.in_h, layer.in_w, c);
      const u64 hw = area(c.out_h, c.out_w);
      c.flops = flops_standard_conv(layer.geometry, c.out_h, c.out_w);
      c.mult_weights = layer.geometry.weight_count();
      c.params = c.mult_weights + (layer.bias ? layer.geometry.out_channels : 0);
      c.param_bits = static_cast<double>(c.mult_weights);
      c.mem_accesses = conv_mem(layer.geometry, hw);
      break;
    }
    case CostKind::shift_conv: {
      conv_output(layer.geometry, layer.in_h, layer.in_w, c);
      const u64 hw = area(c.out_h, c.out_w);
      c.shift_weights = layer.geometry.weight_count();
      c.shift_ops = c.shift_weights * hw;
      c.params = c.shift_weights + layer.geometry.out_channels;
      c.param_bits = std::log2(static_cast<double>(c.shift_weights));
      c.mem_accesses = conv_mem(layer.geometry, hw);
      break;
    }
    case CostKind::adder_conv: {
      conv_output(layer.geometry, layer.in_h, layer.in_w, c);
      const u64 hw = area(c.out_h, c.out_w);
      c.adder_weights = layer.geometry.weight_count();
      c.flops = c.adder_weights * hw;
      c.params = c.adder_weights + layer.geometry.out_channels;
      c.param_bits = static_cast<double>(c.adder_weights);
      c.mem_accesses = conv_mem(layer.geometry, hw);
      break;
    }
    case CostKind::ghost_sa: {
      const ConvGeometry g = layer.ghost.intrinsic_geometry();
      LayerCost out;
      conv_output(g, layer.in_h, layer.in_w, out);
      c = cost_ghost_sa(layer.ghost, out.out_h, out.out_w);
      break;
    }
    case CostKind::batch_norm:
      if (layer.channels < 1) throw ConfigError(layer.name + ": batch norm needs >= 1 channel");
      c.params = 2 * static_cast<u64>(layer.channels);
      break;
    case CostKind::linear: {
      if (layer.in_features < 1 || layer.out_features < 1) {
        throw ConfigError(layer.name + ": linear layer needs positive feature counts");
      }
      const u64 weights = static_cast<u64>(layer.in_features) * layer.out_features;
      c.out_h = c.out_w = 1;
      c.flops = weights;
      c.mult_weights = weights;
      c.params = weights + layer.out_features;
      c.mem_accesses = weights + layer.out_features;
      break;
    }
  }
  c.name = layer.name;
  c.kind = layer.kind;
  return c;
}

CostReport analyze_layers(const std::vector<LayerSpec>& layers) {
  CostReport report;
  for (const LayerSpec& l : layers) report.add(analyze_layer(l));
  return report;
}

std::vector<LayerSpec> describe_network(const NetworkSpec& spec) {
  spec.validate();
  const NetworkSpec s = spec.scaled();
  std::vector<LayerSpec> out;
  int h = s.input_size;

  const ConvGeometry stem = same_conv(s.input_channels, s.stem_channels, 3, s.stem_stride);
  out.push_back(LayerSpec::conv("stem", CostKind::shift_conv, stem, h, h));
  out.push_back(LayerSpec::norm("stem_bn", s.stem_channels));
  h = stem.output_extent(h);

  for (std::size_t i = 0; i < s.stages.size(); ++i) {
    const BottleneckConfig b = s.bottleneck(i);
    const std::string prefix = "stage" + std::to_string(i + 1);
    out.push_back(LayerSpec::ghost_module(prefix + ".expand", b.expand_config(), h, h));
    if (b.stride == 2) {
      if (h < 2) throw DimensionError("spatial", prefix + ": map too small to pool");
      h /= 2;
    }
    out.push_back(LayerSpec::ghost_module(prefix + ".project", b.project_config(), h, h));
    if (b.has_projection()) {
      out.push_back(LayerSpec::conv(prefix + ".shortcut", CostKind::shift_conv,
                                    same_conv(b.in_channels, b.out_channels, 1), h, h));
      out.push_back(LayerSpec::norm(prefix + ".shortcut_bn", b.out_channels));
    }
  }

  out.push_back(LayerSpec::conv("head", CostKind::shift_conv,
                                same_conv(s.stages.back().out, s.head_channels, 1), h, h));
  out.push_back(LayerSpec::norm("head_bn", s.head_channels));
  out.push_back(LayerSpec::dense("classifier", s.head_channels, s.classes));
  return out;
}

CostReport analyze_network(const NetworkSpec& spec) {
  return analyze_layers(describe_network(spec));
}

namespace {

// Shared ResNet-20 walk; `conv` produces the layer for one 3x3 convolution.
template <class MakeConv>
std::vector<LayerSpec> resnet20_walk(MakeConv conv, bool norms) {
  std::vector<LayerSpec> out;
  int h = 32;
  out.push_back(conv("conv1", 3, 16, 1, h));
  if (norms) out.push_back(LayerSpec::norm("bn1", 16));
  int channels = 16;
  const int widths[3] = {16, 32, 64};
  for (int stage = 0; stage < 3; ++stage) {
    for (int block = 0; block < 3; ++block) {
      const int stride = (stage > 0 && block == 0) ? 2 : 1;
      const std::string prefix =
          "layer" + std::to_string(stage + 1) + "." + std::to_string(block);
      out.push_back(conv(prefix + ".conv1", channels, widths[stage], stride, h));
      if (norms) out.push_back(LayerSpec::norm(prefix + ".bn1", widths[stage]));
      h /= stride;
      out.push_back(conv(prefix + ".conv2", widths[stage], widths[stage], 1, h));
      if (norms) out.push_back(LayerSpec::norm(prefix + ".bn2", widths[stage]));
      channels = widths[stage];
    }
  }
  out.push_back(LayerSpec::dense("fc", 64, 10));
  return out;
}

}  // namespace

std::vector<LayerSpec> resnet20_layers() {
  return resnet20_walk(
      [](const std::string& name, int in, int out, int stride, int h) {
        return LayerSpec::conv(name, CostKind::standard_conv, same_conv(in, out, 3, stride), h, h);
      },
      true);
}

std::vector<LayerSpec> ghostsa_resnet20_layers(int gamma) {
  // GhostSA modules carry their own batch norms.
  return resnet20_walk(
      [gamma](const std::string& name, int in, int out, int stride, int h) {
        return LayerSpec::ghost_module(name, GhostSAConfig{in, out, gamma, 1, 3, stride}, h, h);
      },
      false);
}

// ---- reporting --------------------------------------------------------------------

namespace {

void write_ratios_tsv(std::ostream& out, const std::string& name, const GhostSAConfig& c) {
  const RatioReport r = ratios(c, c.ghost_kernel);
  const ChannelSplit s = c.split();
  out << "ratio\t" << name << '\t' << c.gamma << '\t' << s.intrinsic << '\t' << s.ghost << '\t'
      << r.r_s << '\t' << r.r_c << '\t' << r.r_m << '\t' << r.r_m_closed_form << '\t' << r.k2gamma
      << '\n';
}

void write_ratios_kv(std::ostream& out, const std::string& name, const GhostSAConfig& c) {
  const RatioReport r = ratios(c, c.ghost_kernel);
  const ChannelSplit s = c.split();
  out << name << ".gamma=" << c.gamma << '\n'
      << name << ".m1=" << s.intrinsic << '\n'
      << name << ".m2=" << s.ghost << '\n'
      << name << ".r_s=" << r.r_s << '\n'
      << name << ".r_c=" << r.r_c << '\n'
      << name << ".r_m=" << r.r_m << '\n'
      << name << ".r_m_closed_form=" << r.r_m_closed_form << '\n'
      << name << ".k2gamma=" << r.k2gamma << '\n';
}

}  // namespace

void write_cost_report(std::ostream& out, const CostReport& report,
                       const std::vector<LayerSpec>& layers, ReportFormat format) {
  const auto precision = out.precision(8);
  if (format == ReportFormat::tsv) {
    out << "layer\tkind\th_o\tw_o\tflops\tshift_ops\tparams\tparam_bits\tmem_accesses\n";
    for (const LayerCost& l : report.layers) {
      out << l.name << '\t' << to_string(l.kind) << '\t' << l.out_h << '\t' << l.out_w << '\t'
          << l.flops << '\t' << l.shift_ops << '\t' << l.params << '\t' << l.param_bits << '\t'
          << l.mem_accesses << '\n';
    }
    out << "total\t-\t-\t-\t" << report.flops << '\t' << report.shift_ops << '\t' << report.params
        << '\t' << report.param_bits << '\t' << report.mem_accesses << '\n';
    bool header = false;
    for (const LayerSpec& l : layers) {
      if (l.kind != CostKind::ghost_sa) continue;
      if (!header) {
        out << "\nratio\tlayer\tgamma\tm1\tm2\tr_s\tr_c\tr_m\tr_m_closed_form\tk2gamma\n";
        header = true;
      }
      write_ratios_tsv(out, l.name, l.ghost);
    }
  } else {
    for (const LayerCost& l : report.layers) {
      out << l.name << ".kind=" << to_string(l.kind) << '\n'
          << l.name << ".flops=" << l.flops << '\n'
          << l.name << ".shift_ops=" << l.shift_ops << '\n'
          << l.name << ".params=" << l.params << '\n'
          << l.name << ".param_bits=" << l.param_bits << '\n'
          << l.name << ".mem_accesses=" << l.mem_accesses << '\n';
    }
    for (const LayerSpec& l : layers) {
      if (l.kind == CostKind::ghost_sa) write_ratios_kv(out, l.name, l.ghost);
    }
    out << "total.flops=" << report.flops << '\n'
        << "total.shift_ops=" << report.shift_ops << '\n'
        << "total.params=" << report.params << '\n'
        << "total.shift_weights=" << report.shift_weights << '\n'
        << "total.adder_weights=" << report.adder_weights << '\n'
        << "total.mult_weights=" << report.mult_weights << '\n'
        << "total.param_bits=" << report.param_bits << '\n'
        << "total.mem_accesses=" << report.mem_accesses << '\n';
  }
  out.precision(precision);
}

}  // namespace gsan
