#pragma once

// Kernel latency harness: dense multiply, shift and adder convolutions on
// identical geometries. Reports robust timing statistics and never ranks the
// kernels; relative speed is a property of the host.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace gsan {

enum class KernelTag { mul, shift, add };

const char* to_string(KernelTag tag);

struct BenchGeometry {
  int kernel = 3;
  int channels = 64;
  int spatial = 56;
  bool depthwise = true;  // groups == channels

  bool operator==(const BenchGeometry&) const = default;
  auto operator<=>(const BenchGeometry&) const = default;
};

struct BenchOptions {
  int repeats = 100;
  int warmups = 10;
  std::uint64_t seed = 7;

  // Throws ValidationError for repeats < 30 or warmups < 5.
  void validate() const;
};

struct BenchRecord {
  KernelTag tag = KernelTag::mul;
  BenchGeometry geometry;
  int repeats = 0;
  int warmups = 0;
  double median_ns = 0.0;
  double mad_ns = 0.0;
  double mean_ns = 0.0;
  double cv_percent = 0.0;
  double checksum = 0.0;            // of the timed kernel's output
  double reference_checksum = 0.0;  // of an untimed library call
  std::string host;

  bool checksum_matches() const noexcept { return checksum == reference_checksum; }
};

struct SampleStats {
  double median = 0.0;
  double mad = 0.0;  // median absolute deviation (unscaled)
  double mean = 0.0;
  double cv_percent = 0.0;  // sample stddev / mean * 100
};

SampleStats summarize(std::vector<double> samples);

// Smallest observable steady_clock increment, in nanoseconds.
double timer_tick_ns();
// Kernel, OS and compiler summary for reports.
std::string host_descriptor();

// Times one kernel. Throws ValidationError for bad options and when the
// median is below 100 timer ticks (the geometry is too small to time).
BenchRecord bench_kernel(KernelTag tag, const BenchGeometry& geometry, const BenchOptions& options);

struct BenchSuite {
  std::vector<BenchGeometry> geometries;
  std::vector<KernelTag> tags{KernelTag::mul, KernelTag::shift, KernelTag::add};
  BenchOptions options;
};

// k = 3 depthwise and k = 1 pointwise at 64 channels, 56 x 56.
BenchSuite default_bench_suite();
// Top-level keys: repeats, warmups, seed. One [geometry] section per
// geometry with keys kernel, channels, spatial, depthwise (true/false;
// defaults to kernel > 1).
BenchSuite parse_bench_suite_text(std::string_view text);
BenchSuite parse_bench_suite(const std::string& path);

// Records sorted by (geometry, tag).
std::vector<BenchRecord> bench_suite(const BenchSuite& suite);

// tag, k, channels, spatial, median_ns, mad_ns, cv_percent.
void write_bench_tsv(std::ostream& out, const std::vector<BenchRecord>& records);
// The TSV table preceded by the host descriptor and followed by per-geometry
// latency ratios against the multiply kernel.
void write_bench_report(std::ostream& out, const std::vector<BenchRecord>& records);

}  // namespace gsan
