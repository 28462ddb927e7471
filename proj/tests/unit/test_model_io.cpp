#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <unistd.h>

#include "doctest.h"
#include "gsan/checkpoint.hpp"
#include "gsan/config.hpp"
#include "gsan/datasets.hpp"
#include "gsan/error.hpp"
#include "gsan/training.hpp"
#include "oracles.hpp"
#include "test_paths.hpp"

using namespace gsan;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("gsan_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out << bytes;
}

void put_be32(std::string& s, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) s.push_back(static_cast<char>((v >> shift) & 0xff));
}

const char* toy_config = R"(# toy network
alpha = 1
classes = 10
stem_channels = 8
gamma_default = 2
input_size = 12
head_channels = 16

[stage]
in = 8
exp = 16
out = 8

[stage]   # downsampling stage
in = 8
exp = 24
out = 12
stride = 2
gamma = 3
)";

// Pushes BN running statistics and weights away from their initial values.
void perturb(GhostSANet& net, std::mt19937_64& rng) {
  const NetworkSpec& s = net.spec();
  const Tensor4 x = oracle::random_tensor({6, s.input_channels, s.input_size, s.input_size}, rng);
  const std::vector<int> labels{0, 1, 2, 3, 4, 5};
  train_batch(net, x, labels);
  auto params = net.parameters();
  SgdState state;
  sgd_step(params, state, {0.05f, 0.0f, 0.0f, true, 0.1f});
  net.requantize();
}

bool same_tables(const TensorTable& a, const TensorTable& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].shape != b[i].shape || a[i].values != b[i].values) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_SUITE("model-io") {

TEST_CASE("config text parses into a network spec") {
  const NetworkSpec s = parse_network_config_text(toy_config);
  CHECK(s.stem_channels == 8);
  CHECK(s.input_size == 12);
  REQUIRE(s.stages.size() == 2);
  CHECK(s.stages[1] == StageSpec{8, 24, 12, 2, 3});
  CHECK(s.stage_gamma(0) == 2);
  CHECK(s.stage_gamma(1) == 3);
}

TEST_CASE("config round trip") {
  const NetworkSpec s = parse_network_config_text(toy_config);
  CHECK(parse_network_config_text(emit_network_config(s)) == s);
  NetworkSpec odd = s;
  odd.alpha = 0.1 + 0.2;  // not exactly representable in short decimal
  CHECK(parse_network_config_text(emit_network_config(odd)) == odd);
}

TEST_CASE("config errors carry line numbers") {
  CHECK_THROWS_WITH_AS(parse_network_config_text("classes = 10\n"),
                       doctest::Contains("at least one stage"), ConfigError);
  try {
    parse_network_config_text("[stage]\nin = 8\nexp = 16\nin = 4\nout = 8\n");
    FAIL("expected duplicate-key error");
  } catch (const ConfigError& e) {
    CHECK(e.line() == 4);
    CHECK(std::string(e.what()).find("duplicate") != std::string::npos);
  }
  try {
    parse_network_config_text("classes = 10\n\n[stage]\nin = 8\nexpansion = 16\nout = 8\n");
    FAIL("expected unknown-key error");
  } catch (const ConfigError& e) {
    CHECK(e.line() == 5);
    CHECK(e.column() == 1);
  }
  try {
    parse_network_config_text("alpha 0.5\n");
    FAIL("expected syntax error");
  } catch (const ConfigError& e) {
    CHECK(e.line() == 1);
    CHECK(e.column() > 0);
  }
  CHECK_THROWS_AS(parse_network_config_text("[stage\nin = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_network_config_text("alpha = x\n[stage]\nin=8\nexp=8\nout=8\n"),
                  ConfigError);
  // chaining: stage 2 must start where stage 1 ends
  CHECK_THROWS_WITH_AS(
      parse_network_config_text("stem_channels = 8\n[stage]\nin=8\nexp=8\nout=8\n[stage]\nin=4\nexp=8\nout=8\n"),
      doctest::Contains("stage 2"), ConfigError);
}

TEST_CASE("alpha in a config applies the width rounding") {
  std::string text = toy_config;
  text.replace(text.find("alpha = 1"), 9, "alpha = 0.5");
  const NetworkSpec s = parse_network_config_text(text);
  CHECK(s.alpha == 0.5);
  const NetworkSpec scaled = s.scaled();
  CHECK(scaled.stages[1].out == scale_channels(12, 0.5));
  CHECK(scaled.stages[1].out == 8);
  CHECK(scaled.stem_channels == 4);
}

TEST_CASE("config file errors") {
  CHECK_THROWS_AS(parse_network_config("/nonexistent/net.cfg"), IoError);
  TempDir dir;
  spit(dir.file("bad.cfg"), "[stage]\nin = 8\nbogus = 1\n");
  CHECK_THROWS_WITH_AS(parse_network_config(dir.file("bad.cfg")), doctest::Contains("line 3"),
                       ConfigError);
}

TEST_CASE("checkpoint save, load, save is byte-identical") {
  TempDir dir;
  std::mt19937_64 rng(81);
  GhostSANet net(parse_network_config_text(toy_config), 3);
  perturb(net, rng);
  save_checkpoint(net, dir.file("a.gsan"));
  GhostSANet loaded = load_checkpoint(dir.file("a.gsan"));
  save_checkpoint(loaded, dir.file("b.gsan"));
  CHECK(slurp(dir.file("a.gsan")) == slurp(dir.file("b.gsan")));
  CHECK(same_tables(net.state(), loaded.state()));
  CHECK(loaded.spec() == net.spec());

  const Tensor4 x = oracle::random_tensor({5, 1, 12, 12}, rng);
  CHECK(oracle::bit_identical(net.infer(x), loaded.infer(x)));
}

TEST_CASE("checkpoint stores shift pairs as i8 next to their proxies") {
  GhostSANet net(parse_network_config_text(toy_config), 4);
  const TensorTable t = net.state();
  const auto find = [&](const std::string& name) -> const NamedTensor* {
    for (const NamedTensor& e : t) {
      if (e.name == name) return &e;
    }
    return nullptr;
  };
  REQUIRE(find("stem.proxy") != nullptr);
  REQUIRE(find("stem.sign") != nullptr);
  REQUIRE(find("stem.exponent") != nullptr);
  CHECK(std::holds_alternative<std::vector<std::int8_t>>(find("stem.sign")->values));
  CHECK(std::holds_alternative<std::vector<std::int8_t>>(find("stem.exponent")->values));
  CHECK(find("stem_bn.running_mean") != nullptr);
  CHECK(find("stem_bn.running_var") != nullptr);
}

TEST_CASE("corrupted checkpoints are rejected") {
  GhostSANet net(parse_network_config_text(toy_config), 5);
  const std::string good = encode_checkpoint(net.spec(), net.state());
  CHECK_NOTHROW(decode_checkpoint(good));

  std::string flipped = good;
  flipped[flipped.size() - 10] ^= 0x01;
  CHECK_THROWS_AS(decode_checkpoint(flipped), FormatError);

  std::string version = good;
  version[4] = 2;
  CHECK_THROWS_WITH_AS(decode_checkpoint(version), doctest::Contains("version"), FormatError);

  std::string magic = good;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(magic), FormatError);

  for (std::size_t cut : {std::size_t{3}, std::size_t{20}, good.size() / 2, good.size() - 1}) {
    try {
      decode_checkpoint(good.substr(0, cut));
      FAIL("truncated checkpoint accepted");
    } catch (const FormatError& e) {
      CHECK(e.offset() >= 0);
      CHECK(e.offset() <= static_cast<long long>(cut));
    }
  }
  CHECK_THROWS_AS(decode_checkpoint(good + "x"), FormatError);
}

TEST_CASE("load_checkpoint error mapping") {
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/m.gsan"), IoError);
  TempDir dir;
  spit(dir.file("junk.gsan"), "not a checkpoint");
  CHECK_THROWS_AS(load_checkpoint(dir.file("junk.gsan")), FormatError);
}

TEST_CASE("checkpoint round trip over random models") {
  std::mt19937_64 rng(82);
  std::uniform_int_distribution<int> width(1, 4), gamma(2, 4), pick(0, 1);
  for (int trial = 0; trial < 8; ++trial) {
    NetworkSpec s;
    s.input_size = 8;
    s.stem_channels = 4 * width(rng);
    int c = s.stem_channels;
    for (int st = 0; st < 2; ++st) {
      const int out = 4 * width(rng);
      s.stages.push_back({c, 4 * width(rng) + 4, out, pick(rng) ? 2 : 1, gamma(rng)});
      c = out;
    }
    s.head_channels = 4 * width(rng);
    GhostSANet net(s, rng());
    perturb(net, rng);
    const Checkpoint back = decode_checkpoint(encode_checkpoint(net.spec(), net.state()));
    CHECK(back.spec == net.spec());
    CHECK(same_tables(back.tensors, net.state()));
  }
}

TEST_CASE("IDX headers") {
  TempDir dir;
  std::string images;
  put_be32(images, 2051);
  put_be32(images, 2);
  put_be32(images, 2);
  put_be32(images, 3);
  for (int i = 0; i < 12; ++i) images.push_back(static_cast<char>(i * 20));
  spit(dir.file("img"), images);
  const IdxImages parsed = read_idx_images(dir.file("img"));
  CHECK(parsed.count == 2);
  CHECK(parsed.rows == 2);
  CHECK(parsed.cols == 3);
  CHECK(parsed.pixels[11] == 220);

  std::string labels;
  put_be32(labels, 2049);
  put_be32(labels, 3);
  labels += std::string("\x01\x07\x09", 3);
  spit(dir.file("lbl"), labels);
  CHECK(read_idx_labels(dir.file("lbl")) == std::vector<unsigned char>{1, 7, 9});

  CHECK_THROWS_AS(read_idx_images(dir.file("lbl")), FormatError);
  CHECK_THROWS_AS(read_idx_labels(dir.file("img")), FormatError);
  spit(dir.file("short"), images.substr(0, images.size() - 1));
  CHECK_THROWS_AS(read_idx_images(dir.file("short")), FormatError);
  CHECK_THROWS_AS(read_idx_images(dir.file("missing")), IoError);
}

TEST_CASE("MNIST loader against an independent parser") {
  const std::string dir = test_paths::mnist_dir();
  if (dir.empty()) {
    MESSAGE("MNIST not found; skipped");
    return;
  }
  const DatasetPair d = load_mnist(dir);
  CHECK(d.train.size() == 60000);
  CHECK(d.test.size() == 10000);
  CHECK(d.train.images.shape() == Shape4{60000, 1, 28, 28});
  CHECK_NOTHROW(d.train.validate());

  const auto raw = oracle::read_idx((fs::path(dir) / "t10k-images-idx3-ubyte").string());
  CHECK(raw.magic == 2051);
  std::array<int, 256> expect{}, got{};
  for (int p = 0; p < 784; ++p) ++expect[raw.payload[p]];
  for (int p = 0; p < 784; ++p) {
    const float v = d.test.images[p];
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
    ++got[static_cast<int>(std::lround(v * 255.0f))];
  }
  CHECK(expect == got);
  const auto raw_labels = oracle::read_idx((fs::path(dir) / "t10k-labels-idx1-ubyte").string());
  CHECK(raw_labels.magic == 2049);
  for (int i = 0; i < 100; ++i) CHECK(d.test.labels[i] == raw_labels.payload[i]);

  const DatasetPair again = load_mnist(dir);
  CHECK(oracle::bit_identical(again.test.images, d.test.images));
  CHECK(again.train.labels == d.train.labels);
}

TEST_CASE("CIFAR-10 loader") {
  TempDir dir;
  CHECK_THROWS_AS(load_cifar10(dir.path.string()), IoError);
  // two whole records and part of a third
  std::string bytes(2 * 3073 + 100, '\0');
  spit(dir.file("data_batch_1.bin"), bytes);
  try {
    load_cifar10(dir.path.string());
    FAIL("truncated batch accepted");
  } catch (const IoError& e) {
    CHECK(e.path().find("data_batch_1.bin") != std::string::npos);
    CHECK(e.offset() == 2 * 3073 + 100);
  }
  const std::string real = test_paths::cifar10_dir();
  if (real.empty()) {
    MESSAGE("CIFAR-10 not found; full-load check skipped");
    return;
  }
  const DatasetPair d = load_cifar10(real);
  CHECK(d.train.size() == 50000);
  CHECK(d.test.size() == 10000);
  CHECK(d.train.images.shape() == Shape4{50000, 3, 32, 32});
  const std::string first = slurp((fs::path(real) / "data_batch_1.bin").string()).substr(0, 3073);
  CHECK(d.train.labels[0] == static_cast<unsigned char>(first[0]));
  for (int c = 0; c < 3; ++c) {
    for (int p = 0; p < 1024; p += 97) {
      const float expect =
          (static_cast<unsigned char>(first[1 + c * 1024 + p]) / 255.0f - cifar10_mean[c]) /
          cifar10_std[c];
      CHECK(d.train.images[c * 1024 + p] == doctest::Approx(expect).epsilon(1e-6));
    }
  }
}

TEST_CASE("dataset validation and head") {
  Dataset d;
  d.images = Tensor4({3, 1, 2, 2});
  d.labels = {0, 1, 2};
  d.split = "train";
  CHECK_NOTHROW(d.validate());
  d.labels[1] = 10;
  CHECK_THROWS_AS(d.validate(), ValidationError);
  d.labels = {0, 1};
  CHECK_THROWS_AS(d.validate(), ValidationError);
  d.labels = {4, 5, 6};
  const Dataset h = d.head(2);
  CHECK(h.size() == 2);
  CHECK(h.labels == std::vector<int>{4, 5});
  CHECK(d.head(0).size() == 3);
}

}  // TEST_SUITE
