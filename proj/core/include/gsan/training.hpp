#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gsan/datasets.hpp"
#include "gsan/layers.hpp"
#include "gsan/network.hpp"

namespace gsan {

enum class Schedule { cosine, step };

struct TrainConfig {
  int epochs = 3;
  int batch_size = 64;
  float base_lr = 0.05f;
  float momentum = 0.9f;
  float weight_decay = 1e-4f;
  Schedule schedule = Schedule::cosine;
  std::vector<int> milestones;  // step schedule: epochs (0-based) where lr drops
  float step_factor = 0.1f;
  std::uint64_t seed = 1;
  bool adder_lr_scaling = true;
  float adder_eta = 0.1f;
  bool augment = false;  // random crop (pad 4) + horizontal flip
  int train_limit = 0;   // use only the first N samples (0: all)
  int test_limit = 0;

  // Throws ConfigError.
  void validate() const;
};

// Learning rate at `step` of `total_steps` (cosine: per step; step schedule:
// per epoch).
float scheduled_lr(const TrainConfig& config, int epoch, long long step, long long total_steps);

struct SgdOptions {
  float lr = 0.1f;
  float momentum = 0.0f;
  float weight_decay = 0.0f;
  bool adder_lr_scaling = false;
  float adder_eta = 0.1f;
};

// Momentum buffers, one per parameter in collection order.
struct SgdState {
  std::vector<std::vector<float>> velocity;
};

// v = momentum * v + g' + decay * w ; w -= lr * v, where g' is the gradient,
// normalized with adder_lr_scale for adder weights when enabled. Decay only
// touches roles for which decays() holds. Throws ValidationError when a
// gradient's size differs from its parameter's.
void sgd_step(std::vector<ParamRef>& params, SgdState& state, const SgdOptions& options);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double test_top1 = 0.0;
  double wall_time_s = 0.0;
};

using Predictor = std::function<Tensor4(const Tensor4&)>;

// Top-1 accuracy in percent, batched.
double evaluate(const Predictor& predict, const Dataset& data, int batch_size = 256);
double evaluate(const GhostSANet& model, const Dataset& data, int batch_size = 256);

// One forward/backward pass; returns the mean loss. Leaves gradients in the
// model.
double train_batch(GhostSANet& model, const Tensor4& images, const std::vector<int>& labels);

struct TrainResult {
  std::vector<EpochMetrics> history;
  double best_top1 = -1.0;
  int best_epoch = 0;
};

// Trains with the given config, calling `on_epoch` after every epoch. When
// `checkpoint_path` is non-empty the best-test-accuracy model is saved there.
TrainResult train(GhostSANet& model, const Dataset& train_set, const Dataset& test_set,
                  const TrainConfig& config, const std::string& checkpoint_path = {},
                  const std::function<void(const EpochMetrics&)>& on_epoch = {});

// Toy network used for desk-scale MNIST runs.
NetworkSpec mnist_toy_spec();

}  // namespace gsan
