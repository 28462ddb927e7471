#include "gsan/bench.hpp"

#include <sys/utsname.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "gsan/adder.hpp"
#include "gsan/config.hpp"
#include "gsan/error.hpp"
#include "gsan/ops.hpp"
#include "gsan/shift.hpp"

namespace gsan {

const char* to_string(KernelTag tag) {
  switch (tag) {
    case KernelTag::mul: return "mul";
    case KernelTag::shift: return "shift";
    case KernelTag::add: return "add";
  }
  return "?";
}

void BenchOptions::validate() const {
  if (repeats < 30) {
    throw ValidationError("repeats must be >= 30 for a reportable record, got " +
                          std::to_string(repeats));
  }
  if (warmups < 5) throw ValidationError("warmups must be >= 5, got " + std::to_string(warmups));
}

namespace {

double median_of(std::vector<double>& v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double checksum_of(const Tensor4& t) {
  double s = 0.0;
  for (float v : t.data()) s += v;
  return s;
}

}  // namespace

SampleStats summarize(std::vector<double> samples) {
  SampleStats s;
  if (samples.empty()) return s;
  double sum = 0.0;
  for (double v : samples) sum += v;
  s.mean = sum / static_cast<double>(samples.size());
  double sq = 0.0;
  for (double v : samples) sq += (v - s.mean) * (v - s.mean);
  const double stddev =
      samples.size() > 1 ? std::sqrt(sq / static_cast<double>(samples.size() - 1)) : 0.0;
  s.cv_percent = s.mean > 0.0 ? stddev / s.mean * 100.0 : 0.0;
  s.median = median_of(samples);
  for (double& v : samples) v = std::fabs(v - s.median);
  s.mad = median_of(samples);
  return s;
}

double timer_tick_ns() {
  using clock = std::chrono::steady_clock;
  double best = 1e18;
  for (int i = 0; i < 200; ++i) {
    const auto a = clock::now();
    auto b = clock::now();
    while (b == a) b = clock::now();
    best = std::min(best, std::chrono::duration<double, std::nano>(b - a).count());
  }
  return best;
}

std::string host_descriptor() {
  std::ostringstream out;
  utsname u{};
  if (uname(&u) == 0) out << u.sysname << ' ' << u.release << ' ' << u.machine;
  std::ifstream cpu("/proc/cpuinfo");
  std::string line;
  while (std::getline(cpu, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) out << "; " << line.substr(colon + 2);
      break;
    }
  }
#if defined(__clang__)
  out << "; clang " << __clang_major__ << '.' << __clang_minor__;
#elif defined(__GNUC__)
  out << "; gcc " << __GNUC__ << '.' << __GNUC_MINOR__;
#endif
  return out.str();
}

BenchRecord bench_kernel(KernelTag tag, const BenchGeometry& geometry, const BenchOptions& options) {
  options.validate();
  if (geometry.kernel < 1 || geometry.kernel % 2 == 0) {
    throw ValidationError("bench kernel must be odd, got " + std::to_string(geometry.kernel));
  }
  if (geometry.channels < 1 || geometry.spatial < geometry.kernel) {
    throw ValidationError("bench geometry needs channels >= 1 and spatial >= kernel");
  }
  const ConvGeometry g = same_conv(geometry.channels, geometry.channels, geometry.kernel, 1,
                                   geometry.depthwise ? geometry.channels : 1);
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<float> uni(-1.0f, 1.0f);
  Tensor4 x({1, geometry.channels, geometry.spatial, geometry.spatial});
  for (float& v : x.data()) v = uni(rng);

  std::function<Tensor4()> kernel;
  std::vector<float> dense;
  std::vector<float> bias(static_cast<std::size_t>(geometry.channels), 0.0f);
  ShiftFilterBank shift_bank;
  AdderFilterBank adder_bank;
  switch (tag) {
    case KernelTag::mul:
      dense.resize(g.weight_count());
      for (float& v : dense) v = uni(rng);
      kernel = [&] { return conv2d(x, dense, bias, g); };
      break;
    case KernelTag::shift:
      shift_bank = ShiftFilterBank(g, init_shift_proxies(g, {}, rng), bias);
      kernel = [&] { return shift_conv2d(x, shift_bank); };
      break;
    case KernelTag::add:
      adder_bank = AdderFilterBank::init(g, rng);
      kernel = [&] { return adder_conv2d(x, adder_bank); };
      break;
  }

  BenchRecord rec;
  rec.tag = tag;
  rec.geometry = geometry;
  rec.repeats = options.repeats;
  rec.warmups = options.warmups;
  rec.host = host_descriptor();
  rec.reference_checksum = checksum_of(kernel());

  using clock = std::chrono::steady_clock;
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(options.repeats));
  rec.checksum = rec.reference_checksum;
  for (int i = 0; i < options.warmups + options.repeats; ++i) {
    const auto t0 = clock::now();
    const Tensor4 out = kernel();
    const auto t1 = clock::now();
    // Consuming every output keeps the call alive and checks it.
    const double sum = checksum_of(out);
    if (sum != rec.reference_checksum) rec.checksum = sum;
    if (i >= options.warmups) samples.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
  }

  const SampleStats s = summarize(samples);
  rec.median_ns = s.median;
  rec.mad_ns = s.mad;
  rec.mean_ns = s.mean;
  rec.cv_percent = s.cv_percent;

  const double tick = timer_tick_ns();
  if (rec.median_ns < 100.0 * tick) {
    throw ValidationError("median " + std::to_string(rec.median_ns) + " ns is below 100 timer ticks (" +
                          std::to_string(100.0 * tick) +
                          " ns); use a larger geometry (more channels or spatial extent)");
  }
  return rec;
}

BenchSuite default_bench_suite() {
  BenchSuite s;
  s.geometries = {{3, 64, 56, true}, {1, 64, 56, false}};
  return s;
}

BenchSuite parse_bench_suite_text(std::string_view text) {
  const ConfigDocument doc = parse_config_text(text);
  doc.top().check_keys({"repeats", "warmups", "seed"});
  BenchSuite suite;
  suite.options.repeats = doc.top().get_int("repeats").value_or(suite.options.repeats);
  suite.options.warmups = doc.top().get_int("warmups").value_or(suite.options.warmups);
  if (const auto seed = doc.top().get_int("seed")) {
    if (*seed < 0) throw ConfigError("seed must be >= 0", doc.top().find("seed")->line);
    suite.options.seed = static_cast<std::uint64_t>(*seed);
  }
  for (std::size_t i = 1; i < doc.sections.size(); ++i) {
    const ConfigSection& sec = doc.sections[i];
    if (sec.name != "geometry") throw ConfigError("unknown section [" + sec.name + "]", sec.line, 1);
    sec.check_keys({"kernel", "channels", "spatial", "depthwise"});
    BenchGeometry g;
    g.kernel = sec.get_int("kernel").value_or(g.kernel);
    g.channels = sec.get_int("channels").value_or(g.channels);
    g.spatial = sec.get_int("spatial").value_or(g.spatial);
    g.depthwise = g.kernel > 1;
    if (const ConfigEntry* e = sec.find("depthwise")) {
      if (e->value == "true") {
        g.depthwise = true;
      } else if (e->value == "false") {
        g.depthwise = false;
      } else {
        throw ConfigError("depthwise expects true or false", e->line, e->value_column);
      }
    }
    suite.geometries.push_back(g);
  }
  if (suite.geometries.empty()) throw ConfigError("bench suite needs at least one [geometry]");
  return suite;
}

BenchSuite parse_bench_suite(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return parse_bench_suite_text(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::vector<BenchRecord> bench_suite(const BenchSuite& suite) {
  suite.options.validate();
  std::vector<BenchGeometry> geometries = suite.geometries;
  std::sort(geometries.begin(), geometries.end());
  std::vector<KernelTag> tags = suite.tags;
  std::sort(tags.begin(), tags.end());
  std::vector<BenchRecord> out;
  for (const BenchGeometry& g : geometries) {
    for (KernelTag t : tags) out.push_back(bench_kernel(t, g, suite.options));
  }
  return out;
}

void write_bench_tsv(std::ostream& out, const std::vector<BenchRecord>& records) {
  const auto precision = out.precision();
  out << "tag\tk\tchannels\tspatial\tmedian_ns\tmad_ns\tcv_percent\n";
  out.setf(std::ios::fixed);
  for (const BenchRecord& r : records) {
    out << to_string(r.tag) << '\t' << r.geometry.kernel << '\t' << r.geometry.channels << '\t'
        << r.geometry.spatial << '\t' << std::setprecision(0) << r.median_ns << '\t' << r.mad_ns
        << '\t' << std::setprecision(2) << r.cv_percent << '\n';
  }
  out.unsetf(std::ios::fixed);
  out.precision(precision);
}

void write_bench_report(std::ostream& out, const std::vector<BenchRecord>& records) {
  out << "# host: " << (records.empty() ? host_descriptor() : records.front().host) << '\n';
  if (!records.empty()) {
    out << "# repeats: " << records.front().repeats << ", warmups: " << records.front().warmups
        << '\n';
  }
  write_bench_tsv(out, records);
  std::map<BenchGeometry, std::map<KernelTag, double>> medians;
  for (const BenchRecord& r : records) medians[r.geometry][r.tag] = r.median_ns;
  out << "\nratio\tk\tchannels\tspatial\tshift_over_mul\tadd_over_mul\n";
  const auto precision = out.precision();
  out.setf(std::ios::fixed);
  out << std::setprecision(3);
  for (const auto& [g, m] : medians) {
    const auto mul = m.find(KernelTag::mul);
    if (mul == m.end() || mul->second <= 0.0) continue;
    auto ratio = [&](KernelTag t) {
      const auto it = m.find(t);
      return it == m.end() ? std::nan("") : it->second / mul->second;
    };
    out << "ratio\t" << g.kernel << '\t' << g.channels << '\t' << g.spatial << '\t'
        << ratio(KernelTag::shift) << '\t' << ratio(KernelTag::add) << '\n';
  }
  out.unsetf(std::ios::fixed);
  out.precision(precision);
}

}  // namespace gsan
