#include "gsan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "correlate.hpp"
#include "gsan/error.hpp"

namespace gsan {

namespace {

void check_same_shape(const Tensor4& a, const Tensor4& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(what, to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

}  // namespace

Tensor4 conv2d(const Tensor4& input, std::span<const float> weights, std::span<const float> bias,
               const ConvGeometry& geom) {
  detail::check_bank(geom, weights.size(), bias.size());
  return detail::correlate<float>(input, geom, weights, bias,
                                  [](float x, float w) { return x * w; });
}

ConvGrads conv2d_backward(const Tensor4& input, std::span<const float> weights,
                          const ConvGeometry& geom, const Tensor4& upstream) {
  detail::check_bank(geom, weights.size(), 0);
  auto g = detail::correlate_backward(
      input, geom, weights, upstream, [](float x, float) { return x; },
      [](float, float w) { return w; });
  return {std::move(g.input), std::move(g.weights), std::move(g.bias)};
}

// ---- pooling ----------------------------------------------------------------

namespace {

ConvGeometry pool_geometry(const Tensor4& input, int window, int stride) {
  if (window < 1 || stride < 1) {
    throw ConfigError("pool window and stride must be >= 1");
  }
  if (input.h() < window || input.w() < window) {
    throw DimensionError("spatial", "pool window " + std::to_string(window) +
                                        " larger than input " + to_string(input.shape()));
  }
  return {window, stride, 0, input.c(), input.c(), input.c()};
}

}  // namespace

Tensor4 maxpool2d(const Tensor4& input, int window, int stride) {
  const ConvGeometry g = pool_geometry(input, window, stride);
  const Shape4 os = g.output_shape(input.shape());
  Tensor4 out(os);
  for (int n = 0; n < os.n; ++n) {
    for (int c = 0; c < os.c; ++c) {
      const float* src = input.plane(n, c);
      float* dst = out.plane(n, c);
      for (int oh = 0; oh < os.h; ++oh) {
        for (int ow = 0; ow < os.w; ++ow) {
          float best = -std::numeric_limits<float>::infinity();
          for (int i = 0; i < window; ++i) {
            const float* row = src + static_cast<std::size_t>(oh * stride + i) * input.w();
            for (int j = 0; j < window; ++j) best = std::max(best, row[ow * stride + j]);
          }
          dst[oh * os.w + ow] = best;
        }
      }
    }
  }
  return out;
}

Tensor4 maxpool2d_backward(const Tensor4& input, int window, int stride, const Tensor4& upstream) {
  const ConvGeometry g = pool_geometry(input, window, stride);
  const Shape4 os = g.output_shape(input.shape());
  if (upstream.shape() != os) {
    throw DimensionError("upstream", to_string(upstream.shape()) + " vs " + to_string(os));
  }
  Tensor4 dx(input.shape());
  for (int n = 0; n < os.n; ++n) {
    for (int c = 0; c < os.c; ++c) {
      const float* src = input.plane(n, c);
      const float* d = upstream.plane(n, c);
      float* dst = dx.plane(n, c);
      for (int oh = 0; oh < os.h; ++oh) {
        for (int ow = 0; ow < os.w; ++ow) {
          std::size_t arg = 0;
          float best = -std::numeric_limits<float>::infinity();
          for (int i = 0; i < window; ++i) {
            for (int j = 0; j < window; ++j) {
              const std::size_t idx =
                  static_cast<std::size_t>(oh * stride + i) * input.w() + ow * stride + j;
              if (src[idx] > best) {
                best = src[idx];
                arg = idx;
              }
            }
          }
          dst[arg] += d[oh * os.w + ow];
        }
      }
    }
  }
  return dx;
}

Tensor4 global_avg_pool(const Tensor4& input) {
  Tensor4 out({input.n(), input.c(), 1, 1});
  const std::size_t plane = input.shape().plane();
  for (int n = 0; n < input.n(); ++n) {
    for (int c = 0; c < input.c(); ++c) {
      const float* src = input.plane(n, c);
      double sum = 0.0;
      for (std::size_t i = 0; i < plane; ++i) sum += src[i];
      out.at(n, c, 0, 0) = static_cast<float>(sum / static_cast<double>(plane));
    }
  }
  return out;
}

Tensor4 global_avg_pool_backward(const Shape4& input_shape, const Tensor4& upstream) {
  if (upstream.shape() != Shape4{input_shape.n, input_shape.c, 1, 1}) {
    throw DimensionError("upstream", "expected " + std::to_string(input_shape.n) + "x" +
                                         std::to_string(input_shape.c) + "x1x1, got " +
                                         to_string(upstream.shape()));
  }
  Tensor4 dx(input_shape);
  const std::size_t plane = input_shape.plane();
  const float inv = 1.0f / static_cast<float>(plane);
  for (int n = 0; n < input_shape.n; ++n) {
    for (int c = 0; c < input_shape.c; ++c) {
      const float g = upstream.at(n, c, 0, 0) * inv;
      float* dst = dx.plane(n, c);
      std::fill(dst, dst + plane, g);
    }
  }
  return dx;
}

// ---- batch normalization ----------------------------------------------------

BatchNormState BatchNormState::identity(int channels) {
  const auto c = static_cast<std::size_t>(channels);
  return {std::vector<float>(c, 1.0f), std::vector<float>(c, 0.0f), std::vector<float>(c, 0.0f),
          std::vector<float>(c, 1.0f)};
}

namespace {

void check_bn(const Tensor4& input, const BatchNormState& s) {
  const auto c = static_cast<std::size_t>(input.c());
  if (s.scale.size() != c || s.shift.size() != c || s.running_mean.size() != c ||
      s.running_var.size() != c) {
    throw DimensionError("channels", "batch-norm parameters do not have " +
                                         std::to_string(c) + " entries");
  }
}

}  // namespace

Tensor4 batch_norm_eval(const Tensor4& input, const BatchNormState& state) {
  check_bn(input, state);
  Tensor4 out(input.shape());
  const std::size_t plane = input.shape().plane();
  for (int c = 0; c < input.c(); ++c) {
    const float inv_std = 1.0f / std::sqrt(state.running_var[c] + state.epsilon);
    const float a = state.scale[c] * inv_std;
    const float b = state.shift[c] - state.running_mean[c] * a;
    for (int n = 0; n < input.n(); ++n) {
      const float* src = input.plane(n, c);
      float* dst = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * a + b;
    }
  }
  return out;
}

Tensor4 batch_norm(const Tensor4& input, BatchNormState& state, Mode mode,
                   BatchNormCache* cache) {
  if (mode == Mode::eval) return batch_norm_eval(input, state);
  check_bn(input, state);
  Tensor4 out(input.shape());
  Tensor4 normalized(input.shape());
  std::vector<float> inv_stds(static_cast<std::size_t>(input.c()));
  const std::size_t plane = input.shape().plane();
  const double count = static_cast<double>(plane) * input.n();
  for (int c = 0; c < input.c(); ++c) {
    double sum = 0.0;
    for (int n = 0; n < input.n(); ++n) {
      const float* src = input.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) sum += src[i];
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (int n = 0; n < input.n(); ++n) {
      const float* src = input.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = src[i] - mean;
        sq += d * d;
      }
    }
    const double var = sq / count;
    const float inv_std = static_cast<float>(1.0 / std::sqrt(var + state.epsilon));
    inv_stds[c] = inv_std;
    const float m = static_cast<float>(mean);
    for (int n = 0; n < input.n(); ++n) {
      const float* src = input.plane(n, c);
      float* xn = normalized.plane(n, c);
      float* dst = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        xn[i] = (src[i] - m) * inv_std;
        dst[i] = xn[i] * state.scale[c] + state.shift[c];
      }
    }
    const double unbiased = count > 1.0 ? var * count / (count - 1.0) : var;
    state.running_mean[c] =
        state.momentum * state.running_mean[c] + (1.0f - state.momentum) * m;
    state.running_var[c] = state.momentum * state.running_var[c] +
                           (1.0f - state.momentum) * static_cast<float>(unbiased);
  }
  if (cache != nullptr) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_stds);
  }
  return out;
}

BatchNormGrads batch_norm_backward(const BatchNormCache& cache, const BatchNormState& state,
                                   const Tensor4& upstream) {
  check_same_shape(cache.normalized, upstream, "upstream");
  const Shape4 s = upstream.shape();
  BatchNormGrads g{Tensor4(s), std::vector<float>(static_cast<std::size_t>(s.c), 0.0f),
                   std::vector<float>(static_cast<std::size_t>(s.c), 0.0f)};
  const std::size_t plane = s.plane();
  const double count = static_cast<double>(plane) * s.n;
  for (int c = 0; c < s.c; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xn = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const float* d = upstream.plane(n, c);
      const float* xn = cache.normalized.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += d[i];
        sum_dy_xn += static_cast<double>(d[i]) * xn[i];
      }
    }
    g.shift[c] = static_cast<float>(sum_dy);
    g.scale[c] = static_cast<float>(sum_dy_xn);
    const float k = state.scale[c] * cache.inv_std[c];
    const float mean_dy = static_cast<float>(sum_dy / count);
    const float mean_dy_xn = static_cast<float>(sum_dy_xn / count);
    for (int n = 0; n < s.n; ++n) {
      const float* d = upstream.plane(n, c);
      const float* xn = cache.normalized.plane(n, c);
      float* dx = g.input.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) dx[i] = k * (d[i] - mean_dy - xn[i] * mean_dy_xn);
    }
  }
  return g;
}

// ---- activations ------------------------------------------------------------

Tensor4 relu(const Tensor4& input) {
  Tensor4 out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0f ? input[i] : 0.0f;
  return out;
}

Tensor4 relu_backward(const Tensor4& input, const Tensor4& upstream) {
  check_same_shape(input, upstream, "upstream");
  Tensor4 dx(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) dx[i] = input[i] > 0.0f ? upstream[i] : 0.0f;
  return dx;
}

float hard_swish(float x) noexcept { return x * std::clamp(x + 3.0f, 0.0f, 6.0f) / 6.0f; }

Tensor4 hard_swish(const Tensor4& input) {
  Tensor4 out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = hard_swish(input[i]);
  return out;
}

Tensor4 hard_swish_backward(const Tensor4& input, const Tensor4& upstream) {
  check_same_shape(input, upstream, "upstream");
  Tensor4 dx(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    const float x = input[i];
    float slope = 0.0f;
    if (x >= 3.0f) {
      slope = 1.0f;
    } else if (x > -3.0f) {
      slope = (2.0f * x + 3.0f) / 6.0f;
    }
    dx[i] = upstream[i] * slope;
  }
  return dx;
}

// ---- elementwise / structural -------------------------------------------------

Tensor4 add(const Tensor4& a, const Tensor4& b) {
  check_same_shape(a, b, "operands");
  Tensor4 out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Tensor4 concat_channels(const Tensor4& a, const Tensor4& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw DimensionError("spatial", "cannot concatenate " + to_string(a.shape()) + " and " +
                                        to_string(b.shape()));
  }
  Tensor4 out({a.n(), a.c() + b.c(), a.h(), a.w()});
  const std::size_t plane = a.shape().plane();
  for (int n = 0; n < a.n(); ++n) {
    std::copy_n(a.plane(n, 0), plane * a.c(), out.plane(n, 0));
    std::copy_n(b.plane(n, 0), plane * b.c(), out.plane(n, a.c()));
  }
  return out;
}

std::pair<Tensor4, Tensor4> slice_channels(const Tensor4& x, int leading) {
  if (leading < 1 || leading >= x.c()) {
    throw DimensionError("channels", "cannot split " + std::to_string(x.c()) + " channels at " +
                                         std::to_string(leading));
  }
  Tensor4 a({x.n(), leading, x.h(), x.w()});
  Tensor4 b({x.n(), x.c() - leading, x.h(), x.w()});
  const std::size_t plane = x.shape().plane();
  for (int n = 0; n < x.n(); ++n) {
    std::copy_n(x.plane(n, 0), plane * a.c(), a.plane(n, 0));
    std::copy_n(x.plane(n, leading), plane * b.c(), b.plane(n, 0));
  }
  return {std::move(a), std::move(b)};
}

// ---- classifier head ----------------------------------------------------------

namespace {

std::size_t features_of(const Tensor4& x) {
  return static_cast<std::size_t>(x.c()) * x.h() * x.w();
}

void check_linear(const Tensor4& input, std::size_t weights, std::size_t bias, int out_features) {
  if (out_features < 1) throw ConfigError("linear layer needs >= 1 output feature");
  const std::size_t f = features_of(input);
  if (weights != f * static_cast<std::size_t>(out_features)) {
    throw DimensionError("weights", "linear expects " + std::to_string(f * out_features) +
                                        " weights for " + std::to_string(f) + " features, got " +
                                        std::to_string(weights));
  }
  if (bias != 0 && bias != static_cast<std::size_t>(out_features)) {
    throw DimensionError("bias", "expected " + std::to_string(out_features) + " bias values");
  }
}

}  // namespace

Tensor4 linear(const Tensor4& input, std::span<const float> weights, std::span<const float> bias,
               int out_features) {
  check_linear(input, weights.size(), bias.size(), out_features);
  const std::size_t f = features_of(input);
  Tensor4 out({input.n(), out_features, 1, 1});
  for (int n = 0; n < input.n(); ++n) {
    const float* x = input.plane(n, 0);
    for (int o = 0; o < out_features; ++o) {
      const float* w = weights.data() + static_cast<std::size_t>(o) * f;
      float acc = 0.0f;
      for (std::size_t i = 0; i < f; ++i) acc += x[i] * w[i];
      out.at(n, o, 0, 0) = acc + (bias.empty() ? 0.0f : bias[o]);
    }
  }
  return out;
}

LinearGrads linear_backward(const Tensor4& input, std::span<const float> weights,
                            int out_features, const Tensor4& upstream) {
  check_linear(input, weights.size(), 0, out_features);
  if (upstream.shape() != Shape4{input.n(), out_features, 1, 1}) {
    throw DimensionError("upstream", "linear gradient has shape " + to_string(upstream.shape()));
  }
  const std::size_t f = features_of(input);
  LinearGrads g{Tensor4(input.shape()), std::vector<float>(weights.size(), 0.0f),
                std::vector<float>(static_cast<std::size_t>(out_features), 0.0f)};
  for (int n = 0; n < input.n(); ++n) {
    const float* x = input.plane(n, 0);
    float* dx = g.input.plane(n, 0);
    for (int o = 0; o < out_features; ++o) {
      const float d = upstream.at(n, o, 0, 0);
      const float* w = weights.data() + static_cast<std::size_t>(o) * f;
      float* gw = g.weights.data() + static_cast<std::size_t>(o) * f;
      g.bias[o] += d;
      for (std::size_t i = 0; i < f; ++i) {
        gw[i] += d * x[i];
        dx[i] += d * w[i];
      }
    }
  }
  return g;
}

LossAndGrad softmax_cross_entropy(const Tensor4& logits, std::span<const int> labels) {
  const int batch = logits.n();
  const int classes = static_cast<int>(features_of(logits));
  if (labels.size() != static_cast<std::size_t>(batch)) {
    throw DimensionError("labels", std::to_string(labels.size()) + " labels for a batch of " +
                                       std::to_string(batch));
  }
  LossAndGrad out{0.0, Tensor4(logits.shape())};
  double total = 0.0;
  for (int n = 0; n < batch; ++n) {
    const int label = labels[n];
    if (label < 0 || label >= classes) {
      throw ValidationError("label " + std::to_string(label) + " outside [0, " +
                            std::to_string(classes) + ")");
    }
    const float* z = logits.plane(n, 0);
    float* g = out.grad.plane(n, 0);
    const float zmax = *std::max_element(z, z + classes);
    double denom = 0.0;
    for (int k = 0; k < classes; ++k) denom += std::exp(static_cast<double>(z[k] - zmax));
    const double log_denom = std::log(denom);
    total += log_denom - static_cast<double>(z[label] - zmax);
    for (int k = 0; k < classes; ++k) {
      const double p = std::exp(static_cast<double>(z[k] - zmax) - log_denom);
      g[k] = static_cast<float>((p - (k == label ? 1.0 : 0.0)) / batch);
    }
  }
  out.loss = total / batch;
  return out;
}

std::vector<int> argmax_classes(const Tensor4& logits) {
  const std::size_t classes = features_of(logits);
  std::vector<int> out(static_cast<std::size_t>(logits.n()));
  for (int n = 0; n < logits.n(); ++n) {
    const float* z = logits.plane(n, 0);
    out[n] = static_cast<int>(std::max_element(z, z + classes) - z);
  }
  return out;
}

}  // namespace gsan
