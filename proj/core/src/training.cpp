#include "gsan/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "gsan/adder.hpp"
#include "gsan/checkpoint.hpp"
#include "gsan/error.hpp"
#include "gsan/ops.hpp"

namespace gsan {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(base_lr >= 0.0f) || !std::isfinite(base_lr)) throw ConfigError("lr must be >= 0");
  if (!(momentum >= 0.0f && momentum < 1.0f)) throw ConfigError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0f)) throw ConfigError("weight_decay must be >= 0");
  if (!(adder_eta > 0.0f)) throw ConfigError("adder_eta must be > 0");
  if (!(step_factor > 0.0f)) throw ConfigError("step_factor must be > 0");
  if (train_limit < 0 || test_limit < 0) throw ConfigError("sample limits must be >= 0");
}

float scheduled_lr(const TrainConfig& config, int epoch, long long step, long long total_steps) {
  if (config.schedule == Schedule::cosine) {
    if (total_steps <= 0) return config.base_lr;
    const double t = static_cast<double>(step) / static_cast<double>(total_steps);
    return static_cast<float>(config.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t)));
  }
  float lr = config.base_lr;
  for (int m : config.milestones) {
    if (epoch >= m) lr *= config.step_factor;
  }
  return lr;
}

void sgd_step(std::vector<ParamRef>& params, SgdState& state, const SgdOptions& options) {
  if (state.velocity.size() != params.size()) {
    state.velocity.assign(params.size(), {});
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    ParamRef& p = params[i];
    if (p.grad.size() != p.value.size()) {
      throw ValidationError(p.name + ": gradient has " + std::to_string(p.grad.size()) +
                            " elements, parameter has " + std::to_string(p.value.size()));
    }
    std::vector<float>& v = state.velocity[i];
    if (v.size() != p.value.size()) v.assign(p.value.size(), 0.0f);

    std::vector<float> scaled;
    std::span<const float> g = p.grad;
    if (options.adder_lr_scaling && p.role == ParamRole::adder_weight) {
      scaled = adder_lr_scale(p.grad, options.adder_eta);
      g = scaled;
    }
    const float decay = decays(p.role) ? options.weight_decay : 0.0f;
    for (std::size_t j = 0; j < v.size(); ++j) {
      v[j] = options.momentum * v[j] + g[j] + decay * p.value[j];
      p.value[j] -= options.lr * v[j];
    }
  }
}

double evaluate(const Predictor& predict, const Dataset& data, int batch_size) {
  if (data.size() == 0) return 0.0;
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  long long correct = 0;
  std::vector<int> idx;
  for (int start = 0; start < data.size(); start += batch_size) {
    const int end = std::min(data.size(), start + batch_size);
    idx.resize(static_cast<std::size_t>(end - start));
    std::iota(idx.begin(), idx.end(), start);
    const std::vector<int> pred = argmax_classes(predict(data.gather_images(idx)));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (pred[i] == data.labels[static_cast<std::size_t>(idx[i])]) ++correct;
    }
  }
  return 100.0 * static_cast<double>(correct) / data.size();
}

double evaluate(const GhostSANet& model, const Dataset& data, int batch_size) {
  return evaluate([&model](const Tensor4& x) { return model.infer(x); }, data, batch_size);
}

double train_batch(GhostSANet& model, const Tensor4& images, const std::vector<int>& labels) {
  const Tensor4 logits = model.forward(images);
  LossAndGrad lg = softmax_cross_entropy(logits, labels);
  model.backward(lg.grad);
  return lg.loss;
}

namespace {

// Random 4-pixel-padded crop and horizontal flip, per sample.
void augment_batch(Tensor4& x, std::mt19937_64& rng) {
  const int h = x.h();
  const int w = x.w();
  std::vector<float> src(static_cast<std::size_t>(h) * w);
  for (int n = 0; n < x.n(); ++n) {
    const int dy = static_cast<int>(rng() % 9) - 4;
    const int dx = static_cast<int>(rng() % 9) - 4;
    const bool flip = (rng() & 1u) != 0;
    for (int c = 0; c < x.c(); ++c) {
      float* plane = x.plane(n, c);
      std::copy(plane, plane + src.size(), src.begin());
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          const int si = i + dy;
          const int sj0 = j + dx;
          const int sj = flip ? w - 1 - sj0 : sj0;
          const bool inside = si >= 0 && si < h && sj0 >= 0 && sj0 < w;
          plane[i * w + j] = inside ? src[static_cast<std::size_t>(si) * w + sj] : 0.0f;
        }
      }
    }
  }
}

}  // namespace

TrainResult train(GhostSANet& model, const Dataset& train_full, const Dataset& test_full,
                  const TrainConfig& config, const std::string& checkpoint_path,
                  const std::function<void(const EpochMetrics&)>& on_epoch) {
  config.validate();
  Dataset train_cut;
  Dataset test_cut;
  const bool cut_train = config.train_limit > 0 && config.train_limit < train_full.size();
  const bool cut_test = config.test_limit > 0 && config.test_limit < test_full.size();
  if (cut_train) train_cut = train_full.head(config.train_limit);
  if (cut_test) test_cut = test_full.head(config.test_limit);
  const Dataset& train_set = cut_train ? train_cut : train_full;
  const Dataset& test_set = cut_test ? test_cut : test_full;
  train_set.validate();
  test_set.validate();
  const NetworkSpec& spec = model.spec();
  for (const Dataset* d : {&train_set, &test_set}) {
    if (d->classes != spec.classes) {
      throw ValidationError(d->split + " set has " + std::to_string(d->classes) +
                            " classes, model has " + std::to_string(spec.classes));
    }
    if (d->images.c() != spec.input_channels) {
      throw ValidationError(d->split + " images have " + std::to_string(d->images.c()) +
                            " channels, model expects " + std::to_string(spec.input_channels));
    }
  }

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<ParamRef> params = model.parameters();
  SgdState state;
  SgdOptions opt;
  opt.momentum = config.momentum;
  opt.weight_decay = config.weight_decay;
  opt.adder_lr_scaling = config.adder_lr_scaling;
  opt.adder_eta = config.adder_eta;

  const int n = train_set.size();
  const long long steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const long long total_steps = steps_per_epoch * config.epochs;
  long long step = 0;

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> batch;

  TrainResult result;
  const auto t0 = std::chrono::steady_clock::now();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (int start = 0; start < n; start += config.batch_size) {
      const int end = std::min(n, start + config.batch_size);
      batch.assign(order.begin() + start, order.begin() + end);
      Tensor4 images = train_set.gather_images(batch);
      if (config.augment) augment_batch(images, rng);
      const double loss = train_batch(model, images, train_set.gather_labels(batch));
      if (!std::isfinite(loss)) {
        throw Error("training diverged (non-finite loss) at epoch " + std::to_string(epoch + 1));
      }
      loss_sum += loss * (end - start);
      opt.lr = scheduled_lr(config, epoch, step, total_steps);
      sgd_step(params, state, opt);
      model.requantize();
      ++step;
    }

    EpochMetrics m;
    m.epoch = epoch + 1;
    m.train_loss = loss_sum / n;
    m.test_top1 = evaluate(model, test_set);
    m.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(m);
    if (m.test_top1 > result.best_top1) {
      result.best_top1 = m.test_top1;
      result.best_epoch = m.epoch;
      if (!checkpoint_path.empty()) save_checkpoint(model, checkpoint_path);
    }
    if (on_epoch) on_epoch(m);
  }
  return result;
}

NetworkSpec mnist_toy_spec() {
  NetworkSpec s;
  s.input_channels = 1;
  s.input_size = 28;
  s.stem_channels = 16;
  s.stem_stride = 2;
  s.stages = {
      {16, 32, 24, 2, 0},
      {24, 48, 32, 1, 0},
      {32, 64, 48, 2, 0},
  };
  s.head_channels = 96;
  s.classes = 10;
  s.gamma_default = 2;
  return s;
}

}  // namespace gsan
