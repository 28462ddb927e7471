#include "gsan/tensor.hpp"

#include "gsan/error.hpp"

namespace gsan {

std::string to_string(const Shape4& s) {
  return std::to_string(s.n) + "x" + std::to_string(s.c) + "x" + std::to_string(s.h) + "x" +
         std::to_string(s.w);
}

namespace {

void check_dims(const Shape4& s) {
  if (s.n < 1) throw DimensionError("batch", "dimension must be >= 1, got " + to_string(s));
  if (s.c < 1) throw DimensionError("channels", "dimension must be >= 1, got " + to_string(s));
  if (s.h < 1) throw DimensionError("height", "dimension must be >= 1, got " + to_string(s));
  if (s.w < 1) throw DimensionError("width", "dimension must be >= 1, got " + to_string(s));
}

}  // namespace

Tensor4::Tensor4(Shape4 shape, float fill) : shape_(shape) {
  check_dims(shape_);
  data_.assign(shape_.numel(), fill);
}

Tensor4::Tensor4(Shape4 shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
  check_dims(shape_);
  if (data_.size() != shape_.numel()) {
    throw DimensionError("data", "expected " + std::to_string(shape_.numel()) +
                                     " elements for " + to_string(shape_) + ", got " +
                                     std::to_string(data_.size()));
  }
}

Tensor4 Tensor4::reshaped(Shape4 shape) const {
  if (shape.numel() != size()) {
    throw DimensionError("data", "cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  return Tensor4(shape, data_);
}

void ConvGeometry::validate() const {
  if (kernel < 1) throw ConfigError("kernel must be >= 1, got " + std::to_string(kernel));
  if (stride < 1) throw ConfigError("stride must be >= 1, got " + std::to_string(stride));
  if (padding < 0) throw ConfigError("padding must be >= 0, got " + std::to_string(padding));
  if (in_channels < 1 || out_channels < 1) throw ConfigError("channel counts must be >= 1");
  if (groups < 1 || in_channels % groups != 0 || out_channels % groups != 0) {
    throw ConfigError("groups (" + std::to_string(groups) + ") must divide in_channels (" +
                      std::to_string(in_channels) + ") and out_channels (" +
                      std::to_string(out_channels) + ")");
  }
}

int ConvGeometry::output_extent(int input_extent) const {
  const int span = input_extent + 2 * padding - kernel;
  if (span < 0) {
    throw DimensionError("spatial", "kernel " + std::to_string(kernel) +
                                        " exceeds padded input extent " +
                                        std::to_string(input_extent + 2 * padding));
  }
  return span / stride + 1;
}

Shape4 ConvGeometry::output_shape(const Shape4& input) const {
  validate();
  if (input.c != in_channels) {
    throw DimensionError("channels", "input has " + std::to_string(input.c) +
                                         " channels, geometry expects " +
                                         std::to_string(in_channels));
  }
  return {input.n, out_channels, output_extent(input.h), output_extent(input.w)};
}

ConvGeometry same_conv(int in_channels, int out_channels, int kernel, int stride, int groups) {
  return {kernel, stride, kernel / 2, in_channels, out_channels, groups};
}

}  // namespace gsan
