#pragma once

#include <array>
#include <string>
#include <vector>

#include "gsan/tensor.hpp"

namespace gsan {

struct Dataset {
  Tensor4 images;
  std::vector<int> labels;
  std::string split;  // "train" or "test"
  int classes = 10;

  int size() const noexcept { return static_cast<int>(labels.size()); }
  // Throws ValidationError unless image and label counts agree and every
  // label lies in [0, classes).
  void validate() const;
  // Copies of the samples at `indices`, in that order.
  Tensor4 gather_images(const std::vector<int>& indices) const;
  std::vector<int> gather_labels(const std::vector<int>& indices) const;
  // The first `count` samples (all of them when count <= 0 or too large).
  Dataset head(int count) const;
};

struct DatasetPair {
  Dataset train;
  Dataset test;
};

// IDX files train-images-idx3-ubyte / train-labels-idx1-ubyte and the t10k-
// pair, each optionally gzip-compressed (".gz" suffix). Pixels scaled to
// [0, 1]. Throws IoError for missing files, FormatError for bad headers.
DatasetPair load_mnist(const std::string& dir);

// data_batch_1.bin .. data_batch_5.bin and test_batch.bin, 3073-byte records.
// Pixels scaled to [0, 1] then normalized per channel with cifar10_mean and
// cifar10_std.
DatasetPair load_cifar10(const std::string& dir);

inline constexpr std::array<float, 3> cifar10_mean{0.4914f, 0.4822f, 0.4465f};
inline constexpr std::array<float, 3> cifar10_std{0.2470f, 0.2435f, 0.2616f};

// Raw IDX access used by the loaders and tests.
struct IdxImages {
  int count = 0;
  int rows = 0;
  int cols = 0;
  std::vector<unsigned char> pixels;
};

IdxImages read_idx_images(const std::string& path);
std::vector<unsigned char> read_idx_labels(const std::string& path);

}  // namespace gsan
