#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <unistd.h>

#include "cli.hpp"
#include "doctest.h"
#include "gsan/analysis.hpp"
#include "gsan/checkpoint.hpp"
#include "gsan/config.hpp"
#include "gsan/training.hpp"
#include "test_paths.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int status;
  std::string out;
  std::string err;
};

Outcome gsan_run(std::vector<std::string> args) {
  args.insert(args.begin(), "gsan");
  std::ostringstream out, err;
  const int status = gsan::cli::run(args, out, err);
  return {status, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("gsan_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
  static int& counter() {
    static int n = 0;
    return n;
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

std::map<std::string, std::string> parse_kv(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

// Rows of the ratio table keyed by layer name.
std::map<std::string, std::vector<std::string>> ratio_rows(const std::string& tsv) {
  std::map<std::string, std::vector<std::string>> rows;
  std::istringstream in(tsv);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("ratio\t", 0) != 0 || line.rfind("ratio\tlayer", 0) == 0) continue;
    std::vector<std::string> cells;
    std::istringstream cols(line);
    std::string cell;
    while (std::getline(cols, cell, '\t')) cells.push_back(cell);
    rows[cells.at(1)] = cells;
  }
  return rows;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("no subcommand or a missing --config is a usage error") {
  const Outcome none = gsan_run({});
  CHECK(none.status == gsan::cli::exit_config);
  const Outcome train = gsan_run({"train", "--data-dir", "/nonexistent"});
  CHECK(train.status == gsan::cli::exit_config);
  CHECK(train.err.find("--config") != std::string::npos);
  CHECK(train.err.find("Usage") != std::string::npos);
}

TEST_CASE("help exits cleanly") {
  const Outcome h = gsan_run({"--help"});
  CHECK(h.status == 0);
  CHECK(h.out.find("train") != std::string::npos);
}

TEST_CASE("bench with too few repeats is a validation error") {
  const Outcome r = gsan_run({"bench", "--repeats", "10"});
  CHECK(r.status == gsan::cli::exit_config);
  CHECK(r.err.find("repeats") != std::string::npos);
}

TEST_CASE("analyze kv totals equal the programmatic report") {
  const Outcome r = gsan_run({"analyze", "--backbone", "ghostsa-resnet20", "--gamma", "3",
                              "--format", "kv"});
  REQUIRE(r.status == 0);
  const auto kv = parse_kv(r.out);
  const gsan::CostReport api = gsan::analyze_layers(gsan::ghostsa_resnet20_layers(3));
  CHECK(kv.at("total.flops") == std::to_string(api.flops));
  CHECK(kv.at("total.params") == std::to_string(api.params));
  CHECK(kv.at("total.shift_ops") == std::to_string(api.shift_ops));
  CHECK(kv.at("total.mem_accesses") == std::to_string(api.mem_accesses));
  CHECK(kv.at("total.mult_weights") == std::to_string(api.mult_weights));

  const Outcome std_r = gsan_run({"analyze", "--backbone", "resnet20", "--format", "kv"});
  REQUIRE(std_r.status == 0);
  CHECK(parse_kv(std_r.out).at("total.flops") ==
        std::to_string(gsan::analyze_layers(gsan::resnet20_layers()).flops));
}

TEST_CASE("analyze at gamma 4 shows larger m2 and flops than at gamma 2") {
  TempDir tmp;
  spit(tmp / "toy.cfg", gsan::emit_network_config(gsan::mnist_toy_spec()));
  const Outcome g2 = gsan_run({"analyze", "--config", tmp / "toy.cfg", "--gamma", "2"});
  const Outcome g4 = gsan_run({"analyze", "--config", tmp / "toy.cfg", "--gamma", "4"});
  REQUIRE(g2.status == 0);
  REQUIRE(g4.status == 0);
  const auto a = ratio_rows(g2.out);
  const auto b = ratio_rows(g4.out);
  REQUIRE(!a.empty());
  REQUIRE(a.size() == b.size());
  for (const auto& [name, row] : a) {
    INFO(name);
    const auto& other = b.at(name);
    CHECK(row[2] == "2");
    CHECK(other[2] == "4");
    CHECK(std::stol(other[4]) > std::stol(row[4]));
  }
  const auto kv2 = parse_kv(gsan_run({"analyze", "--config", tmp / "toy.cfg", "--gamma", "2",
                                      "--format", "kv"}).out);
  const auto kv4 = parse_kv(gsan_run({"analyze", "--config", tmp / "toy.cfg", "--gamma", "4",
                                      "--format", "kv"}).out);
  CHECK(std::stoull(kv4.at("total.flops")) > std::stoull(kv2.at("total.flops")));
}

TEST_CASE("analyze is byte-identical across runs and writes the kv report") {
  TempDir tmp;
  const Outcome a = gsan_run({"analyze", "--backbone", "ghostsa-resnet20", "--out", tmp / "r.kv"});
  const Outcome b = gsan_run({"analyze", "--backbone", "ghostsa-resnet20"});
  REQUIRE(a.status == 0);
  CHECK(a.out == b.out);
  const Outcome kv = gsan_run({"analyze", "--backbone", "ghostsa-resnet20", "--format", "kv"});
  CHECK(slurp(tmp / "r.kv") == kv.out);
}

TEST_CASE("analyze needs exactly one source") {
  CHECK(gsan_run({"analyze"}).status == gsan::cli::exit_config);
  CHECK(gsan_run({"analyze", "--backbone", "resnet20", "--config", "x.cfg"}).status ==
        gsan::cli::exit_config);
  CHECK(gsan_run({"analyze", "--backbone", "vgg"}).status == gsan::cli::exit_config);
}

TEST_CASE("inspect reports zero dense multiplying conv filters") {
  TempDir tmp;
  spit(tmp / "toy.cfg", gsan::emit_network_config(gsan::mnist_toy_spec()));
  const Outcome fresh = gsan_run({"inspect", "--config", tmp / "toy.cfg"});
  REQUIRE(fresh.status == 0);
  CHECK(fresh.out.find("dense multiplying conv filters: 0\n") != std::string::npos);
  CHECK(fresh.out.find("classifier (multiplying, exempt): 1 layer") != std::string::npos);

  gsan::GhostSANet net(gsan::mnist_toy_spec(), 9);
  gsan::save_checkpoint(net, tmp / "m.gsan");
  const Outcome saved = gsan_run({"inspect", "--checkpoint", tmp / "m.gsan"});
  REQUIRE(saved.status == 0);
  CHECK(saved.out.find("dense multiplying conv filters: 0\n") != std::string::npos);
  CHECK(saved.out.find("stem.sign\ti8\t") != std::string::npos);
  CHECK(saved.out.find("trainable parameters: " + std::to_string(net.parameter_count())) !=
        std::string::npos);
}

TEST_CASE("file problems exit with the i/o status") {
  TempDir tmp;
  CHECK(gsan_run({"inspect", "--checkpoint", tmp / "missing.gsan"}).status == gsan::cli::exit_io);
  spit(tmp / "junk.gsan", "not a checkpoint");
  CHECK(gsan_run({"inspect", "--checkpoint", tmp / "junk.gsan"}).status == gsan::cli::exit_io);
  CHECK(gsan_run({"analyze", "--config", tmp / "missing.cfg"}).status == gsan::cli::exit_io);
  spit(tmp / "bad.cfg", "input_size = 28\nbogus = 1\n");
  CHECK(gsan_run({"analyze", "--config", tmp / "bad.cfg"}).status == gsan::cli::exit_config);
  CHECK(gsan_run({"eval", "--checkpoint", tmp / "missing.gsan", "--data-dir", tmp.path.string()})
            .status == gsan::cli::exit_io);
}

TEST_CASE("train then eval on MNIST") {
  const std::string dir = test_paths::mnist_dir();
  if (dir.empty()) {
    MESSAGE("MNIST not found; skipped");
    return;
  }
  TempDir tmp;
  spit(tmp / "toy.cfg", gsan::emit_network_config(gsan::mnist_toy_spec()));
  auto train = [&](const std::string& tag) {
    return gsan_run({"train", "--config", tmp / "toy.cfg", "--data-dir", dir, "--seed", "3",
                     "--epochs", "1", "--train-limit", "300", "--test-limit", "200", "--out",
                     tmp / (tag + ".gsan"), "--log", tmp / (tag + ".tsv")});
  };
  const Outcome a = train("a");
  REQUIRE(a.status == 0);
  const Outcome b = train("b");
  REQUIRE(b.status == 0);
  CHECK(slurp(tmp / "a.tsv") == slurp(tmp / "b.tsv"));
  CHECK(slurp(tmp / "a.gsan") == slurp(tmp / "b.gsan"));

  const std::string log = slurp(tmp / "a.tsv");
  REQUIRE(log.rfind("epoch\ttrain_loss\ttest_top1\n1\t", 0) == 0);
  const std::string logged = log.substr(log.rfind('\t') + 1, log.size() - log.rfind('\t') - 2);

  CHECK_NOTHROW(gsan::load_checkpoint(tmp / "a.gsan"));
  const Outcome e = gsan_run({"eval", "--checkpoint", tmp / "a.gsan", "--data-dir", dir,
                              "--test-limit", "200"});
  REQUIRE(e.status == 0);
  CHECK(e.out == "top1\t" + logged + "\n");
  const Outcome again = gsan_run({"eval", "--checkpoint", tmp / "a.gsan", "--data-dir", dir,
                                  "--test-limit", "200"});
  CHECK(again.out == e.out);
}

}  // TEST_SUITE
