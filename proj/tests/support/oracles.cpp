#include "oracles.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace oracle {

Tensor4 random_tensor(Shape4 shape, std::mt19937_64& rng, float lo, float hi) {
  Tensor4 t(shape);
  std::uniform_real_distribution<float> d(lo, hi);
  for (float& v : t.data()) v = d(rng);
  return t;
}

std::vector<float> random_vector(std::size_t n, std::mt19937_64& rng, float lo, float hi) {
  std::vector<float> v(n);
  std::uniform_real_distribution<float> d(lo, hi);
  for (float& x : v) x = d(rng);
  return v;
}

namespace {

int extent(int in, const ConvGeometry& g) { return (in + 2 * g.padding - g.kernel) / g.stride + 1; }

template <class Term>
Tensor4 scan(const Tensor4& x, const std::vector<float>& w, const std::vector<float>& b,
             const ConvGeometry& g, Term term) {
  const int ho = extent(x.h(), g);
  const int wo = extent(x.w(), g);
  const int cig = g.in_channels / g.groups;
  const int cog = g.out_channels / g.groups;
  const int k = g.kernel;
  Tensor4 y({x.n(), g.out_channels, ho, wo});
  for (int n = 0; n < x.n(); ++n)
    for (int co = 0; co < g.out_channels; ++co)
      for (int oh = 0; oh < ho; ++oh)
        for (int ow = 0; ow < wo; ++ow) {
          double acc = 0.0;
          const int grp = co / cog;
          for (int ci = 0; ci < cig; ++ci)
            for (int kh = 0; kh < k; ++kh)
              for (int kw = 0; kw < k; ++kw) {
                const int ih = oh * g.stride - g.padding + kh;
                const int iw = ow * g.stride - g.padding + kw;
                float xv = 0.0f;
                if (ih >= 0 && ih < x.h() && iw >= 0 && iw < x.w()) {
                  xv = x.at(n, grp * cig + ci, ih, iw);
                }
                const float wv = w[((static_cast<std::size_t>(co) * cig + ci) * k + kh) * k + kw];
                acc += term(xv, wv);
              }
          y.at(n, co, oh, ow) = static_cast<float>(acc + (b.empty() ? 0.0 : b[co]));
        }
  return y;
}

}  // namespace

Tensor4 conv2d(const Tensor4& x, const std::vector<float>& w, const std::vector<float>& b,
               const ConvGeometry& g) {
  return scan(x, w, b, g, [](float a, float c) { return static_cast<double>(a) * c; });
}

Tensor4 adder_conv2d(const Tensor4& x, const std::vector<float>& w, const std::vector<float>& b,
                     const ConvGeometry& g) {
  return scan(x, w, b, g, [](float a, float c) { return -std::fabs(static_cast<double>(a) - c); });
}

Tensor4 maxpool(const Tensor4& x, int window, int stride) {
  const int ho = (x.h() - window) / stride + 1;
  const int wo = (x.w() - window) / stride + 1;
  Tensor4 y({x.n(), x.c(), ho, wo});
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int oh = 0; oh < ho; ++oh)
        for (int ow = 0; ow < wo; ++ow) {
          float best = -INFINITY;
          for (int i = 0; i < window; ++i)
            for (int j = 0; j < window; ++j) {
              const float v = x.at(n, c, oh * stride + i, ow * stride + j);
              if (v > best) best = v;
            }
          y.at(n, c, oh, ow) = best;
        }
  return y;
}

Tensor4 normalize(const Tensor4& x, const std::vector<float>& mean, const std::vector<float>& var,
                  const std::vector<float>& scale, const std::vector<float>& shift, float eps) {
  Tensor4 y(x.shape());
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int h = 0; h < x.h(); ++h)
        for (int w = 0; w < x.w(); ++w) {
          const double z = (x.at(n, c, h, w) - mean[c]) / std::sqrt(static_cast<double>(var[c]) + eps);
          y.at(n, c, h, w) = static_cast<float>(z * scale[c] + shift[c]);
        }
  return y;
}

void channel_stats(const Tensor4& x, std::vector<float>& mean, std::vector<float>& var) {
  mean.assign(x.c(), 0.0f);
  var.assign(x.c(), 0.0f);
  const double count = static_cast<double>(x.n()) * x.h() * x.w();
  for (int c = 0; c < x.c(); ++c) {
    double s = 0.0;
    for (int n = 0; n < x.n(); ++n)
      for (int h = 0; h < x.h(); ++h)
        for (int w = 0; w < x.w(); ++w) s += x.at(n, c, h, w);
    const double m = s / count;
    double q = 0.0;
    for (int n = 0; n < x.n(); ++n)
      for (int h = 0; h < x.h(); ++h)
        for (int w = 0; w < x.w(); ++w) q += (x.at(n, c, h, w) - m) * (x.at(n, c, h, w) - m);
    mean[c] = static_cast<float>(m);
    var[c] = static_cast<float>(q / count);
  }
}

float power_of_two(int sign, int exponent) {
  float v = 1.0f;
  for (int i = 0; i < exponent; ++i) v *= 2.0f;
  for (int i = 0; i > exponent; --i) v *= 0.5f;
  return static_cast<float>(sign) * v;
}

double central_difference(const std::function<double()>& f, float& value, double step) {
  const float saved = value;
  // The perturbed values are rounded to float; divide by the step actually taken.
  const float up_value = static_cast<float>(saved + step);
  const float down_value = static_cast<float>(saved - step);
  value = up_value;
  const double up = f();
  value = down_value;
  const double down = f();
  value = saved;
  return (up - down) / (static_cast<double>(up_value) - down_value);
}

double gradient_rel_error(const std::function<double()>& f, float* values, std::size_t count,
                          const std::vector<float>& analytic, double step) {
  double num2 = 0.0;
  double diff2 = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double numeric = central_difference(f, values[i], step);
    num2 += numeric * numeric;
    diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
  }
  if (num2 == 0.0) return std::sqrt(diff2);
  return std::sqrt(diff2 / num2);
}

double dot(const Tensor4& y, const Tensor4& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += double(y[i]) * r[i];
  return s;
}

double max_abs_diff(const Tensor4& a, const Tensor4& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(double(a[i]) - b[i]));
  return m;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(double(a[i]) - b[i]));
  return m;
}

bool bit_identical(const Tensor4& a, const Tensor4& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

bool bit_identical(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

IdxFile read_idx(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), {});
  auto be32 = [&](std::size_t at) {
    return (std::uint32_t(bytes.at(at)) << 24) | (std::uint32_t(bytes.at(at + 1)) << 16) |
           (std::uint32_t(bytes.at(at + 2)) << 8) | std::uint32_t(bytes.at(at + 3));
  };
  IdxFile f;
  f.magic = be32(0);
  const unsigned rank = f.magic & 0xffu;
  std::size_t at = 4;
  for (unsigned i = 0; i < rank; ++i, at += 4) f.dims.push_back(be32(at));
  f.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(at), bytes.end());
  return f;
}

}  // namespace oracle
