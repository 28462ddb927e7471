#pragma once

// Locations of optional external data for the tests. A dataset directory
// comes from $GSAN_DATA_DIR (itself or its mnist/ and cifar-10-batches-bin/
// sub-directories) or from the GSAN_TEST_*_DIR values baked in at configure
// time. An empty result means the data is absent.

#include <cstdlib>
#include <filesystem>
#include <string>

#ifndef GSAN_TEST_MNIST_DIR
#define GSAN_TEST_MNIST_DIR ""
#endif
#ifndef GSAN_TEST_CIFAR10_DIR
#define GSAN_TEST_CIFAR10_DIR ""
#endif

namespace test_paths {

inline std::string find_dataset(const char* probe, const char* sub, const char* configured) {
  namespace fs = std::filesystem;
  auto holds = [&](const fs::path& p) {
    return fs::exists(p / probe) || fs::exists(p / (std::string(probe) + ".gz"));
  };
  if (const char* env = std::getenv("GSAN_DATA_DIR"); env && *env) {
    for (const fs::path& p : {fs::path(env), fs::path(env) / sub}) {
      if (holds(p)) return p.string();
    }
  }
  if (*configured && holds(configured)) return configured;
  return {};
}

inline std::string mnist_dir() {
  return find_dataset("t10k-labels-idx1-ubyte", "mnist", GSAN_TEST_MNIST_DIR);
}

inline std::string cifar10_dir() {
  return find_dataset("test_batch.bin", "cifar-10-batches-bin", GSAN_TEST_CIFAR10_DIR);
}

}  // namespace test_paths
