#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "gsan/analysis.hpp"
#include "gsan/bench.hpp"
#include "gsan/checkpoint.hpp"
#include "gsan/config.hpp"
#include "gsan/datasets.hpp"
#include "gsan/error.hpp"
#include "gsan/network.hpp"
#include "gsan/training.hpp"

namespace gsan::cli {

namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::string checkpoint;
  std::string data_dir;
  std::string dataset = "mnist";
  std::uint64_t seed = 1;
  std::string out;
};

struct TrainFlags {
  TrainConfig config;
  std::string log = "metrics.tsv";
  std::string schedule = "cosine";
  bool no_adder_scaling = false;
  bool log_wall_time = false;
};

struct AnalyzeFlags {
  std::string backbone;
  std::optional<int> gamma;
  std::string format = "tsv";
};

struct BenchFlags {
  std::string suite;
  std::string report;
  std::optional<int> repeats;
  std::optional<int> warmups;
};

std::string data_dir_or_env(const Common& c) {
  if (!c.data_dir.empty()) return c.data_dir;
  if (const char* env = std::getenv("GSAN_DATA_DIR"); env && *env) return env;
  throw ConfigError("no dataset directory: pass --data-dir or set GSAN_DATA_DIR");
}

// Accepts the dataset directory itself or a parent holding the usual
// sub-directory name.
std::string dataset_root(const std::string& dir, const std::string& dataset) {
  const char* probe = dataset == "mnist" ? "t10k-labels-idx1-ubyte" : "test_batch.bin";
  const char* sub = dataset == "mnist" ? "mnist" : "cifar-10-batches-bin";
  for (const fs::path& p : {fs::path(dir), fs::path(dir) / sub}) {
    if (fs::exists(p / probe) || fs::exists(p / (std::string(probe) + ".gz"))) return p.string();
  }
  return dir;
}

DatasetPair load_dataset(const Common& c) {
  const std::string root = dataset_root(data_dir_or_env(c), c.dataset);
  if (c.dataset == "mnist") return load_mnist(root);
  return load_cifar10(root);
}

std::string format_metrics(const EpochMetrics& m, bool wall_time) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d\t%.6f\t%.2f", m.epoch, m.train_loss, m.test_top1);
  std::string line = buf;
  if (wall_time) {
    std::snprintf(buf, sizeof buf, "\t%.3f", m.wall_time_s);
    line += buf;
  }
  return line;
}

int cmd_train(const Common& c, TrainFlags& f, std::ostream& out, std::ostream& err) {
  NetworkSpec spec = parse_network_config(c.config);
  f.config.seed = c.seed;
  f.config.schedule = f.schedule == "step" ? Schedule::step : Schedule::cosine;
  f.config.adder_lr_scaling = !f.no_adder_scaling;
  f.config.validate();
  const DatasetPair data = load_dataset(c);

  const std::string checkpoint = c.out.empty() ? "model.gsan" : c.out;
  std::ofstream log(f.log, std::ios::trunc);
  if (!log) throw IoError(f.log, "cannot open metrics log for writing");
  log << "epoch\ttrain_loss\ttest_top1" << (f.log_wall_time ? "\twall_time_s" : "") << '\n';
  log.flush();

  GhostSANet model(spec, c.seed);
  train(model, data.train, data.test, f.config, checkpoint, [&](const EpochMetrics& m) {
    log << format_metrics(m, f.log_wall_time) << '\n';
    log.flush();
    out << format_metrics(m, false) << '\n';
    out.flush();
    char buf[64];
    std::snprintf(buf, sizeof buf, "epoch %d wall_time_s %.3f\n", m.epoch, m.wall_time_s);
    err << buf;
  });
  if (!log) throw IoError(f.log, "write failed");
  out << "checkpoint\t" << checkpoint << '\n';
  return exit_ok;
}

int cmd_eval(const Common& c, int test_limit, std::ostream& out) {
  const GhostSANet model = load_checkpoint(c.checkpoint);
  const DatasetPair data = load_dataset(c);
  const Dataset test = data.test.head(test_limit);
  char buf[64];
  std::snprintf(buf, sizeof buf, "top1\t%.2f\n", evaluate(model, test));
  out << buf;
  return exit_ok;
}

int cmd_analyze(const Common& c, const AnalyzeFlags& f, std::ostream& out) {
  const int sources = !c.config.empty() + !c.checkpoint.empty() + !f.backbone.empty();
  if (sources != 1) {
    throw ConfigError("analyze needs exactly one of --config, --checkpoint, --backbone");
  }
  std::vector<LayerSpec> layers;
  if (!f.backbone.empty()) {
    if (f.backbone == "resnet20") {
      layers = resnet20_layers();
    } else {
      layers = ghostsa_resnet20_layers(f.gamma.value_or(2));
    }
  } else {
    NetworkSpec spec =
        c.config.empty() ? read_checkpoint(c.checkpoint).spec : parse_network_config(c.config);
    if (f.gamma) {
      spec.gamma_default = *f.gamma;
      for (StageSpec& s : spec.stages) s.gamma = 0;
    }
    layers = describe_network(spec);
  }
  const CostReport report = analyze_layers(layers);
  write_cost_report(out, report, layers, f.format == "kv" ? ReportFormat::kv : ReportFormat::tsv);
  if (!c.out.empty()) {
    std::ofstream file(c.out, std::ios::trunc);
    if (!file) throw IoError(c.out, "cannot open report for writing");
    write_cost_report(file, report, layers, ReportFormat::kv);
    if (!file) throw IoError(c.out, "write failed");
  }
  return exit_ok;
}

int cmd_bench(const BenchFlags& f, std::ostream& out) {
  BenchSuite suite = f.suite.empty() ? default_bench_suite() : parse_bench_suite(f.suite);
  if (f.repeats) suite.options.repeats = *f.repeats;
  if (f.warmups) suite.options.warmups = *f.warmups;
  suite.options.validate();
  const std::vector<BenchRecord> records = bench_suite(suite);
  write_bench_tsv(out, records);
  for (const BenchRecord& r : records) {
    if (!r.checksum_matches()) {
      throw Error(std::string("timed ") + to_string(r.tag) +
                  " kernel output differs from the library kernel output");
    }
  }
  if (!f.report.empty()) {
    std::ofstream file(f.report, std::ios::trunc);
    if (!file) throw IoError(f.report, "cannot open report for writing");
    write_bench_report(file, records);
    if (!file) throw IoError(f.report, "write failed");
  }
  return exit_ok;
}

int cmd_inspect(const Common& c, std::ostream& out) {
  if (c.checkpoint.empty() == c.config.empty()) {
    throw ConfigError("inspect needs exactly one of --checkpoint, --config");
  }
  std::optional<GhostSANet> model;
  TensorTable tensors;
  if (!c.checkpoint.empty()) {
    model.emplace(load_checkpoint(c.checkpoint));
    tensors = read_checkpoint(c.checkpoint).tensors;
  } else {
    model.emplace(parse_network_config(c.config), c.seed);
    tensors = model->state();
  }

  out << "# network spec\n" << emit_network_config(model->spec()) << '\n';
  out << "# tensors\nname\tdtype\tshape\telements\n";
  for (const NamedTensor& t : tensors) {
    out << t.name << '\t' << (std::holds_alternative<std::vector<float>>(t.values) ? "f32" : "i8")
        << '\t';
    for (std::size_t i = 0; i < t.shape.size(); ++i) out << (i ? "x" : "") << t.shape[i];
    out << '\t' << t.element_count() << '\n';
  }

  const Census k = model->census();
  out << "\n# census\n"
      << "shift conv filter banks: " << k.shift_conv_banks << " (" << k.shift_weights
      << " weights)\n"
      << "adder conv filter banks: " << k.adder_conv_banks << " (" << k.adder_weights
      << " weights)\n"
      << "dense multiplying conv filters: " << k.dense_conv_banks << '\n'
      << "classifier (multiplying, exempt): " << k.linear_layers << " layer, " << k.linear_weights
      << " weights\n"
      << "batch norm layers: " << k.batch_norm_layers << '\n'
      << "trainable parameters: " << k.parameters << '\n';
  return exit_ok;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multiplication-free GhostSA network toolkit", "gsan"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  Common common;
  TrainFlags train_flags;
  AnalyzeFlags analyze_flags;
  BenchFlags bench_flags;
  int eval_test_limit = 0;

  auto data_flags = [&](CLI::App* sub) {
    sub->add_option("--data-dir", common.data_dir, "Dataset directory (fallback: $GSAN_DATA_DIR)");
    sub->add_option("--dataset", common.dataset, "Dataset")
        ->check(CLI::IsMember({"mnist", "cifar10"}))
        ->capture_default_str();
  };

  CLI::App* train_cmd = app.add_subcommand("train", "Train a network and write a checkpoint");
  train_cmd->add_option("--config", common.config, "Network config file")->required();
  data_flags(train_cmd);
  train_cmd->add_option("--seed", common.seed, "Seed for init and shuffling")->capture_default_str();
  train_cmd->add_option("--out", common.out, "Checkpoint path (default model.gsan)");
  train_cmd->add_option("--log", train_flags.log, "Metrics log path")->capture_default_str();
  TrainConfig& tc = train_flags.config;
  train_cmd->add_option("--epochs", tc.epochs)->capture_default_str();
  train_cmd->add_option("--batch-size", tc.batch_size)->capture_default_str();
  train_cmd->add_option("--lr", tc.base_lr)->capture_default_str();
  train_cmd->add_option("--momentum", tc.momentum)->capture_default_str();
  train_cmd->add_option("--weight-decay", tc.weight_decay)->capture_default_str();
  train_cmd->add_option("--schedule", train_flags.schedule)
      ->check(CLI::IsMember({"cosine", "step"}))
      ->capture_default_str();
  train_cmd->add_option("--milestones", tc.milestones, "Step schedule epochs")->delimiter(',');
  train_cmd->add_option("--adder-eta", tc.adder_eta)->capture_default_str();
  train_cmd->add_flag("--no-adder-scaling", train_flags.no_adder_scaling);
  train_cmd->add_flag("--augment", tc.augment, "Random crop + flip (CIFAR-10)");
  train_cmd->add_option("--train-limit", tc.train_limit, "Use the first N training samples");
  train_cmd->add_option("--test-limit", tc.test_limit, "Use the first N test samples");
  train_cmd->add_flag("--log-wall-time", train_flags.log_wall_time,
                      "Append wall_time_s to the metrics log (makes it nondeterministic)");

  CLI::App* eval_cmd = app.add_subcommand("eval", "Top-1 accuracy of a checkpoint");
  eval_cmd->add_option("--checkpoint", common.checkpoint)->required();
  data_flags(eval_cmd);
  eval_cmd->add_option("--test-limit", eval_test_limit, "Use the first N test samples");

  CLI::App* analyze_cmd = app.add_subcommand("analyze", "Static FLOP/parameter/memory costs");
  analyze_cmd->add_option("--config", common.config, "Network config file");
  analyze_cmd->add_option("--checkpoint", common.checkpoint, "Analyze a checkpoint's network");
  analyze_cmd->add_option("--backbone", analyze_flags.backbone, "Built-in backbone")
      ->check(CLI::IsMember({"resnet20", "ghostsa-resnet20"}));
  analyze_cmd->add_option("--gamma", analyze_flags.gamma, "Override gamma")
      ->check(CLI::Range(2, 1 << 20));
  analyze_cmd->add_option("--format", analyze_flags.format)
      ->check(CLI::IsMember({"tsv", "kv"}))
      ->capture_default_str();
  analyze_cmd->add_option("--out", common.out, "Also write a key=value report file");

  CLI::App* bench_cmd = app.add_subcommand("bench", "Kernel latency microbenchmarks");
  bench_cmd->add_option("--suite", bench_flags.suite, "Suite config file");
  bench_cmd->add_option("--report", bench_flags.report, "Write a report with host and ratios");
  bench_cmd->add_option("--repeats", bench_flags.repeats, "Timed repeats (>= 30)");
  bench_cmd->add_option("--warmups", bench_flags.warmups, "Untimed warmups (>= 5)");

  CLI::App* inspect_cmd = app.add_subcommand("inspect", "Dump a checkpoint's spec and census");
  inspect_cmd->add_option("--checkpoint", common.checkpoint);
  inspect_cmd->add_option("--config", common.config, "Inspect a freshly built network");
  inspect_cmd->add_option("--seed", common.seed)->capture_default_str();

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* failed = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << failed->help();
    return exit_config;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(common, train_flags, out, err);
    if (eval_cmd->parsed()) return cmd_eval(common, eval_test_limit, out);
    if (analyze_cmd->parsed()) return cmd_analyze(common, analyze_flags, out);
    if (bench_cmd->parsed()) return cmd_bench(bench_flags, out);
    if (inspect_cmd->parsed()) return cmd_inspect(common, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_config;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << '\n';
    return exit_config;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return exit_io;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_runtime;
  }
  return exit_runtime;
}

}  // namespace gsan::cli
