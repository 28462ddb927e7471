#include "gsan/datasets.hpp"

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "gsan/error.hpp"

namespace gsan {

void Dataset::validate() const {
  if (images.empty()) throw ValidationError(split + ": dataset is empty");
  if (images.n() != size()) {
    throw ValidationError(split + ": " + std::to_string(images.n()) + " images but " +
                          std::to_string(size()) + " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw ValidationError(split + ": label " + std::to_string(labels[i]) + " at index " +
                            std::to_string(i) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

Tensor4 Dataset::gather_images(const std::vector<int>& indices) const {
  const Shape4 s = images.shape();
  const std::size_t sample = static_cast<std::size_t>(s.c) * s.h * s.w;
  Tensor4 out({static_cast<int>(indices.size()), s.c, s.h, s.w});
  float* dst = out.data().data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::memcpy(dst + i * sample, images.plane(indices[i], 0), sample * sizeof(float));
  }
  return out;
}

std::vector<int> Dataset::gather_labels(const std::vector<int>& indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(labels[static_cast<std::size_t>(i)]);
  return out;
}

Dataset Dataset::head(int count) const {
  if (count <= 0 || count >= size()) return *this;
  std::vector<int> idx(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) idx[static_cast<std::size_t>(i)] = i;
  return Dataset{gather_images(idx), gather_labels(idx), split, classes};
}

// ---- MNIST ------------------------------------------------------------------------

namespace {

// Reads a whole file, inflating it when it is gzip-compressed.
std::vector<unsigned char> slurp(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw IoError(path, "cannot open for reading");
  std::vector<unsigned char> out;
  unsigned char buf[1 << 16];
  for (;;) {
    const int n = gzread(f, buf, sizeof buf);
    if (n < 0) {
      int err = 0;
      const std::string msg = gzerror(f, &err);
      gzclose(f);
      throw IoError(path, "read failed: " + msg, static_cast<long long>(out.size()));
    }
    if (n == 0) break;
    out.insert(out.end(), buf, buf + n);
  }
  gzclose(f);
  return out;
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

std::string resolve(const std::string& dir, const std::string& name) {
  namespace fs = std::filesystem;
  const fs::path plain = fs::path(dir) / name;
  if (fs::exists(plain)) return plain.string();
  const fs::path gz = fs::path(dir) / (name + ".gz");
  if (fs::exists(gz)) return gz.string();
  throw IoError(plain.string(), "file not found (also tried .gz)");
}

Dataset mnist_split(const std::string& dir, const std::string& prefix, const std::string& split) {
  const IdxImages img = read_idx_images(resolve(dir, prefix + "-images-idx3-ubyte"));
  const std::string label_path = resolve(dir, prefix + "-labels-idx1-ubyte");
  const std::vector<unsigned char> lab = read_idx_labels(label_path);
  if (static_cast<int>(lab.size()) != img.count) {
    throw FormatError(label_path, std::to_string(lab.size()) + " labels for " +
                                      std::to_string(img.count) + " images");
  }
  Dataset d;
  d.split = split;
  d.images = Tensor4({img.count, 1, img.rows, img.cols});
  float* px = d.images.data().data();
  for (std::size_t i = 0; i < img.pixels.size(); ++i) px[i] = img.pixels[i] / 255.0f;
  d.labels.assign(lab.begin(), lab.end());
  d.validate();
  return d;
}

}  // namespace

IdxImages read_idx_images(const std::string& path) {
  const std::vector<unsigned char> b = slurp(path);
  if (b.size() < 16) throw FormatError(path, "truncated IDX header", static_cast<long long>(b.size()));
  const std::uint32_t magic = be32(b, 0);
  if (magic != 2051) {
    throw FormatError(path, "bad IDX image magic " + std::to_string(magic) + " (expected 2051)", 0);
  }
  IdxImages out;
  out.count = static_cast<int>(be32(b, 4));
  out.rows = static_cast<int>(be32(b, 8));
  out.cols = static_cast<int>(be32(b, 12));
  if (out.count < 1 || out.rows < 1 || out.cols < 1) {
    throw FormatError(path, "IDX image header has a zero dimension", 4);
  }
  const std::size_t need =
      static_cast<std::size_t>(out.count) * static_cast<std::size_t>(out.rows) * out.cols;
  if (b.size() - 16 < need) {
    throw FormatError(path, "truncated IDX image payload", static_cast<long long>(b.size()));
  }
  out.pixels.assign(b.begin() + 16, b.begin() + 16 + static_cast<std::ptrdiff_t>(need));
  return out;
}

std::vector<unsigned char> read_idx_labels(const std::string& path) {
  const std::vector<unsigned char> b = slurp(path);
  if (b.size() < 8) throw FormatError(path, "truncated IDX header", static_cast<long long>(b.size()));
  const std::uint32_t magic = be32(b, 0);
  if (magic != 2049) {
    throw FormatError(path, "bad IDX label magic " + std::to_string(magic) + " (expected 2049)", 0);
  }
  const std::size_t count = be32(b, 4);
  if (b.size() - 8 < count) {
    throw FormatError(path, "truncated IDX label payload", static_cast<long long>(b.size()));
  }
  return {b.begin() + 8, b.begin() + 8 + static_cast<std::ptrdiff_t>(count)};
}

DatasetPair load_mnist(const std::string& dir) {
  return {mnist_split(dir, "train", "train"), mnist_split(dir, "t10k", "test")};
}

// ---- CIFAR-10 ---------------------------------------------------------------------

namespace {

constexpr std::size_t cifar_record = 3073;
constexpr int cifar_per_batch = 10000;

void read_cifar_batch(const std::string& path, Dataset& d, int first) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for reading");
  std::vector<unsigned char> rec(cifar_record);
  for (int i = 0; i < cifar_per_batch; ++i) {
    in.read(reinterpret_cast<char*>(rec.data()), static_cast<std::streamsize>(cifar_record));
    if (in.gcount() != static_cast<std::streamsize>(cifar_record)) {
      throw IoError(path, "truncated record " + std::to_string(i),
                    static_cast<long long>(i * cifar_record + static_cast<std::size_t>(in.gcount())));
    }
    if (rec[0] > 9) {
      throw FormatError(path, "label byte " + std::to_string(rec[0]) + " out of range",
                        static_cast<long long>(i * cifar_record));
    }
    const int n = first + i;
    d.labels[static_cast<std::size_t>(n)] = rec[0];
    for (int c = 0; c < 3; ++c) {
      float* dst = d.images.plane(n, c);
      const unsigned char* src = rec.data() + 1 + c * 1024;
      const std::size_t ci = static_cast<std::size_t>(c);
      for (int p = 0; p < 1024; ++p) {
        dst[p] = (src[p] / 255.0f - cifar10_mean[ci]) / cifar10_std[ci];
      }
    }
  }
}

}  // namespace

DatasetPair load_cifar10(const std::string& dir) {
  namespace fs = std::filesystem;
  DatasetPair out;
  out.train.split = "train";
  out.train.images = Tensor4({5 * cifar_per_batch, 3, 32, 32});
  out.train.labels.resize(5 * cifar_per_batch);
  for (int b = 0; b < 5; ++b) {
    read_cifar_batch((fs::path(dir) / ("data_batch_" + std::to_string(b + 1) + ".bin")).string(),
                     out.train, b * cifar_per_batch);
  }
  out.test.split = "test";
  out.test.images = Tensor4({cifar_per_batch, 3, 32, 32});
  out.test.labels.resize(cifar_per_batch);
  read_cifar_batch((fs::path(dir) / "test_batch.bin").string(), out.test, 0);
  return out;
}

}  // namespace gsan
