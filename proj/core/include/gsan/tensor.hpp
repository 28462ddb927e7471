#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace gsan {

struct Shape4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const noexcept {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }

  bool operator==(const Shape4&) const = default;
};

std::string to_string(const Shape4& s);

// Dense N x C x H x W float array, row-major with W fastest.
//
// A default-constructed tensor is empty (all dimensions zero) and serves as
// an "absent" placeholder; every tensor built from a shape has all
// dimensions >= 1.
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(Shape4 shape, float fill = 0.0f);
  Tensor4(Shape4 shape, std::vector<float> data);

  const Shape4& shape() const noexcept { return shape_; }
  int n() const noexcept { return shape_.n; }
  int c() const noexcept { return shape_.c; }
  int h() const noexcept { return shape_.h; }
  int w() const noexcept { return shape_.w; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  std::vector<float>& storage() noexcept { return data_; }
  const std::vector<float>& storage() const noexcept { return data_; }

  float& operator[](std::size_t i) noexcept { return data_[i]; }
  float operator[](std::size_t i) const noexcept { return data_[i]; }

  std::size_t offset(int n, int c, int h, int w) const noexcept {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  float& at(int n, int c, int h, int w) noexcept { return data_[offset(n, c, h, w)]; }
  float at(int n, int c, int h, int w) const noexcept { return data_[offset(n, c, h, w)]; }

  // Pointer to the H x W plane of (n, c).
  float* plane(int n, int c) noexcept { return data_.data() + offset(n, c, 0, 0); }
  const float* plane(int n, int c) const noexcept { return data_.data() + offset(n, c, 0, 0); }

  // Same data, new shape with an equal element count.
  Tensor4 reshaped(Shape4 shape) const;

 private:
  Shape4 shape_{};
  std::vector<float> data_;
};

// Square-kernel convolution geometry. `groups` splits input and output
// channels into independent blocks (groups == in_channels is depthwise).
struct ConvGeometry {
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  int in_channels = 1;
  int out_channels = 1;
  int groups = 1;

  // Throws ConfigError when a field is out of range.
  void validate() const;
  // Throws DimensionError unless the output size is a positive integer.
  int output_extent(int input_extent) const;
  Shape4 output_shape(const Shape4& input) const;

  int in_per_group() const noexcept { return in_channels / groups; }
  int out_per_group() const noexcept { return out_channels / groups; }
  // Elements of one output channel's filter: (c_i / groups) * k * k.
  std::size_t filter_size() const noexcept {
    return static_cast<std::size_t>(in_per_group()) * kernel * kernel;
  }
  std::size_t weight_count() const noexcept { return filter_size() * out_channels; }

  bool operator==(const ConvGeometry&) const = default;
};

// "Same" padding for an odd kernel at stride 1.
ConvGeometry same_conv(int in_channels, int out_channels, int kernel, int stride = 1, int groups = 1);

}  // namespace gsan
