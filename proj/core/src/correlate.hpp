#pragma once

// Shared sliding-window machinery for the three convolution flavours
// (multiply, shift, adder). All of them lower the input with im2col and then
// run the same accumulation loop, so their results differ only in the
// per-element combine operation. shift_conv2d relies on this to be
// bit-identical to conv2d on densified weights.

#include <algorithm>
#include <cstddef>
#include <span>
#include <type_traits>
#include <vector>

#include "gsan/error.hpp"
#include "gsan/tensor.hpp"

namespace gsan::detail {

// Lowers one image's channel block [c0, c0 + channels) into a
// (channels * k * k) x (h_o * w_o) matrix. Out-of-bounds taps are zero.
inline void im2col(const Tensor4& x, int n, int c0, int channels, const ConvGeometry& g, int h_o,
                   int w_o, float* col) {
  const int h = x.h();
  const int w = x.w();
  const int k = g.kernel;
  const std::size_t positions = static_cast<std::size_t>(h_o) * w_o;
  for (int c = 0; c < channels; ++c) {
    const float* src = x.plane(n, c0 + c);
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        float* dst = col + (static_cast<std::size_t>(c * k + kh) * k + kw) * positions;
        for (int oh = 0; oh < h_o; ++oh) {
          const int ih = oh * g.stride - g.padding + kh;
          float* row = dst + static_cast<std::size_t>(oh) * w_o;
          if (ih < 0 || ih >= h) {
            std::fill(row, row + w_o, 0.0f);
            continue;
          }
          const float* src_row = src + static_cast<std::size_t>(ih) * w;
          for (int ow = 0; ow < w_o; ++ow) {
            const int iw = ow * g.stride - g.padding + kw;
            row[ow] = (iw >= 0 && iw < w) ? src_row[iw] : 0.0f;
          }
        }
      }
    }
  }
}

// Scatter-adds a column matrix back into image planes (adjoint of im2col).
inline void col2im_add(const float* col, const ConvGeometry& g, int h_o, int w_o, Tensor4& dx, int n,
                       int c0, int channels) {
  const int h = dx.h();
  const int w = dx.w();
  const int k = g.kernel;
  const std::size_t positions = static_cast<std::size_t>(h_o) * w_o;
  for (int c = 0; c < channels; ++c) {
    float* dst = dx.plane(n, c0 + c);
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        const float* src = col + (static_cast<std::size_t>(c * k + kh) * k + kw) * positions;
        for (int oh = 0; oh < h_o; ++oh) {
          const int ih = oh * g.stride - g.padding + kh;
          if (ih < 0 || ih >= h) continue;
          float* dst_row = dst + static_cast<std::size_t>(ih) * w;
          const float* src_row = src + static_cast<std::size_t>(oh) * w_o;
          for (int ow = 0; ow < w_o; ++ow) {
            const int iw = ow * g.stride - g.padding + kw;
            if (iw >= 0 && iw < w) dst_row[iw] += src_row[ow];
          }
        }
      }
    }
  }
}

// A 1x1, stride-1, unpadded window is the identity lowering: the image block
// is already the column matrix.
inline bool lowering_is_identity(const ConvGeometry& g) {
  return g.kernel == 1 && g.stride == 1 && g.padding == 0;
}

// Runs `body(n, group, col, positions)` for every image and group with the
// lowered column matrix of that block.
template <class Body>
void for_each_lowered_block(const Tensor4& x, const ConvGeometry& g, int h_o, int w_o,
                            std::vector<float>& scratch, Body&& body) {
  const int cig = g.in_per_group();
  const std::size_t positions = static_cast<std::size_t>(h_o) * w_o;
  const bool identity = lowering_is_identity(g);
  if (!identity) scratch.resize(g.filter_size() * positions);
  for (int n = 0; n < x.n(); ++n) {
    for (int grp = 0; grp < g.groups; ++grp) {
      const float* col = nullptr;
      if (identity) {
        col = x.plane(n, grp * cig);
      } else {
        im2col(x, n, grp * cig, cig, g, h_o, w_o, scratch.data());
        col = scratch.data();
      }
      body(n, grp, col, positions);
    }
  }
}

// out[r][p] = sum_k combine(col[k][p], weights[r][k]) + bias[r] for the rows
// of one group, accumulated in k order starting from +0 in the combine's
// result type and rounded to float once. `weights` points at the group's
// first row; `bias` at its first bias or is null.
template <class Weight, class Combine>
void accumulate_rows(const float* col, std::size_t filter_size, std::size_t positions,
                     const Weight* weights, const float* bias, int rows, float* out,
                     Combine combine) {
  using Acc = decltype(combine(0.0f, Weight{}));
  std::vector<Acc> wide;
  if constexpr (!std::is_same_v<Acc, float>) wide.resize(positions);
  for (int r = 0; r < rows; ++r) {
    float* o = out + static_cast<std::size_t>(r) * positions;
    Acc* a = nullptr;
    if constexpr (std::is_same_v<Acc, float>) {
      a = o;
    } else {
      a = wide.data();
    }
    std::fill(a, a + positions, Acc{0});
    const Weight* wr = weights + static_cast<std::size_t>(r) * filter_size;
    for (std::size_t k = 0; k < filter_size; ++k) {
      const Weight wk = wr[k];
      const float* c = col + k * positions;
      for (std::size_t p = 0; p < positions; ++p) a[p] += combine(c[p], wk);
    }
    const Acc b = bias ? Acc(bias[r]) : Acc{0};
    for (std::size_t p = 0; p < positions; ++p) o[p] = static_cast<float>(a[p] + b);
  }
}

// Forward pass shared by all flavours: lowering, accumulation, bias.
template <class Weight, class Combine>
Tensor4 correlate(const Tensor4& x, const ConvGeometry& g, std::span<const Weight> weights,
                  std::span<const float> bias, Combine combine) {
  const Shape4 out_shape = g.output_shape(x.shape());
  Tensor4 y(out_shape);
  const int cog = g.out_per_group();
  std::vector<float> scratch;
  for_each_lowered_block(x, g, out_shape.h, out_shape.w, scratch,
                         [&](int n, int grp, const float* col, std::size_t positions) {
                           accumulate_rows(col, g.filter_size(), positions,
                                           weights.data() + grp * cog * g.filter_size(),
                                           bias.empty() ? nullptr : bias.data() + grp * cog, cog,
                                           y.plane(n, grp * cog), combine);
                         });
  return y;
}

struct BackwardBuffers {
  Tensor4 input;
  std::vector<float> weights;
  std::vector<float> bias;
};

// Backward pass shared by the multiply and adder flavours.
//   weight_term(x, w) -> d out / d w  (scaled by upstream)
//   input_term(x, w)  -> d out / d x  (scaled by upstream)
template <class WeightTerm, class InputTerm>
BackwardBuffers correlate_backward(const Tensor4& x, const ConvGeometry& g,
                                   std::span<const float> weights, const Tensor4& dy,
                                   WeightTerm weight_term, InputTerm input_term) {
  const Shape4 out_shape = g.output_shape(x.shape());
  if (dy.shape() != out_shape) {
    throw DimensionError("upstream", "gradient shape " + to_string(dy.shape()) +
                                         " does not match output shape " + to_string(out_shape));
  }
  BackwardBuffers grads{Tensor4(x.shape()), std::vector<float>(g.weight_count(), 0.0f),
                        std::vector<float>(static_cast<std::size_t>(g.out_channels), 0.0f)};
  const int cog = g.out_per_group();
  const int cig = g.in_per_group();
  const std::size_t fs = g.filter_size();
  std::vector<float> scratch;
  std::vector<float> dcol(fs * out_shape.plane());
  const bool identity = lowering_is_identity(g);

  for_each_lowered_block(x, g, out_shape.h, out_shape.w, scratch, [&](int n, int grp,
                                                                       const float* col,
                                                                       std::size_t positions) {
    std::fill(dcol.begin(), dcol.end(), 0.0f);
    for (int r = 0; r < cog; ++r) {
      const int co = grp * cog + r;
      const float* d = dy.plane(n, co);
      const float* wr = weights.data() + static_cast<std::size_t>(co) * fs;
      float* gw = grads.weights.data() + static_cast<std::size_t>(co) * fs;
      float db = 0.0f;
      for (std::size_t p = 0; p < positions; ++p) db += d[p];
      grads.bias[co] += db;
      for (std::size_t k = 0; k < fs; ++k) {
        const float wk = wr[k];
        const float* c = col + k * positions;
        float* dc = dcol.data() + k * positions;
        for (std::size_t p = 0; p < positions; ++p) dc[p] += d[p] * input_term(c[p], wk);
        // Eight interleaved partial sums let the reduction vectorize; the
        // summation order is fixed, so results stay deterministic.
        float lane[8] = {};
        std::size_t p = 0;
        for (; p + 8 <= positions; p += 8) {
          for (int j = 0; j < 8; ++j) lane[j] += d[p + j] * weight_term(c[p + j], wk);
        }
        float acc = 0.0f;
        for (; p < positions; ++p) acc += d[p] * weight_term(c[p], wk);
        for (float v : lane) acc += v;
        gw[k] += acc;
      }
    }
    if (identity) {
      float* dst = grads.input.plane(n, grp * cig);
      for (std::size_t i = 0; i < dcol.size(); ++i) dst[i] += dcol[i];
    } else {
      col2im_add(dcol.data(), g, out_shape.h, out_shape.w, grads.input, n, grp * cig, cig);
    }
  });
  return grads;
}

// Validates weight/bias lengths against a geometry.
inline void check_bank(const ConvGeometry& g, std::size_t weights, std::size_t bias) {
  g.validate();
  if (weights != g.weight_count()) {
    throw DimensionError("weights", "expected " + std::to_string(g.weight_count()) +
                                        " filter elements, got " + std::to_string(weights));
  }
  if (bias != 0 && bias != static_cast<std::size_t>(g.out_channels)) {
    throw DimensionError("bias", "expected " + std::to_string(g.out_channels) +
                                     " bias values, got " + std::to_string(bias));
  }
}

}  // namespace gsan::detail
