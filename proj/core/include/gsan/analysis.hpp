#pragma once

// Static cost model.
//
// Counting convention: one multiply-accumulate or add-accumulate is one FLOP;
// shift-accumulates are tallied separately as shift_ops and cost zero FLOPs.
// Batch norm, activations and pooling are listed but cost nothing.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gsan/ghost_sa.hpp"
#include "gsan/network.hpp"
#include "gsan/tensor.hpp"

namespace gsan {

enum class CostKind { standard_conv, shift_conv, adder_conv, ghost_sa, batch_norm, linear };

const char* to_string(CostKind kind);

struct LayerSpec {
  std::string name;
  CostKind kind = CostKind::standard_conv;
  ConvGeometry geometry{};  // conv kinds
  GhostSAConfig ghost{};    // ghost_sa
  int in_h = 1;
  int in_w = 1;
  int channels = 0;      // batch_norm
  int in_features = 0;   // linear
  int out_features = 0;  // linear
  bool bias = false;     // standard_conv only; every other conv carries one

  static LayerSpec conv(std::string name, CostKind kind, const ConvGeometry& g, int in_h, int in_w);
  static LayerSpec ghost_module(std::string name, const GhostSAConfig& c, int in_h, int in_w);
  static LayerSpec norm(std::string name, int channels);
  static LayerSpec dense(std::string name, int in_features, int out_features);
};

struct LayerCost {
  std::string name;
  CostKind kind = CostKind::standard_conv;
  int out_h = 0;
  int out_w = 0;
  std::uint64_t flops = 0;
  std::uint64_t shift_ops = 0;
  std::uint64_t params = 0;  // every stored scalar, including biases and BN affine
  std::uint64_t shift_weights = 0;
  std::uint64_t adder_weights = 0;
  std::uint64_t mult_weights = 0;  // weights consumed by multiplications
  // Compressed parameter figure: each shift filter set is charged log2 of its
  // element count, adder and multiplying weights one each. BN and the
  // classifier are not charged.
  double param_bits = 0.0;
  std::uint64_t mem_accesses = 0;
};

struct CostReport {
  std::uint64_t flops = 0;
  std::uint64_t shift_ops = 0;
  std::uint64_t params = 0;
  std::uint64_t shift_weights = 0;
  std::uint64_t adder_weights = 0;
  std::uint64_t mult_weights = 0;
  double param_bits = 0.0;
  std::uint64_t mem_accesses = 0;
  std::vector<LayerCost> layers;

  void add(const LayerCost& layer);
};

struct RatioReport {
  double r_s = 0.0;  // speedup
  double r_c = 0.0;  // compression
  double r_m = 0.0;  // memory access
  // (k^2 gamma c_i + c_o) / (c_i + c_o + k^2 + 1), the simplified form of r_m.
  double r_m_closed_form = 0.0;
  double k2gamma = 0.0;
};

// c_i * h_o * w_o * c_o * k * k (divided by groups).
std::uint64_t flops_standard_conv(const ConvGeometry& geometry, int h_o, int w_o);

// Cost of one GhostSA module producing an h_o x w_o map.
LayerCost cost_ghost_sa(const GhostSAConfig& config, int h_o, int w_o);

// Exact ratios of a k x k standard convolution to its GhostSA replacement
// with the same c_i and c_o. The GhostSA side uses the ideal one-filter-per-
// intrinsic-channel depthwise stage.
RatioReport ratios(const GhostSAConfig& config, int baseline_kernel);

LayerCost analyze_layer(const LayerSpec& layer);
CostReport analyze_layers(const std::vector<LayerSpec>& layers);

// Layer list of the network described by `spec` (alpha applied) on a
// spec.input_size square input.
std::vector<LayerSpec> describe_network(const NetworkSpec& spec);
CostReport analyze_network(const NetworkSpec& spec);

// ResNet-20 for 32x32x3 inputs and 10 classes with parameter-free shortcuts.
// Without `gamma` every 3x3 convolution is a standard one; with it, each is
// replaced by a GhostSA module (d = 1, k = 3).
std::vector<LayerSpec> resnet20_layers();
std::vector<LayerSpec> ghostsa_resnet20_layers(int gamma);

enum class ReportFormat { tsv, kv };

// Per-layer table plus totals, and a ratio row per GhostSA layer.
void write_cost_report(std::ostream& out, const CostReport& report,
                       const std::vector<LayerSpec>& layers, ReportFormat format);

}  // namespace gsan
