#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "amq/model.hpp"

namespace amq::nn {

struct LabeledSet {
  std::vector<Tensor> inputs;  // each C x H x W
  std::vector<std::size_t> labels;

  std::size_t size() const noexcept { return inputs.size(); }
};

struct Dataset {
  LabeledSet train;
  LabeledSet test;
  std::size_t n_classes = 0;
};

struct Hyperparams {
  std::size_t epochs = 50;
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  // Worker threads for per-item forward/backward inside a batch. Results
  // are bit-identical for any value.
  std::size_t threads = 1;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double mean_loss = 0.0;
  double wall_seconds = 0.0;  // cumulative since training started
};

struct TrainingTrace {
  std::vector<EpochRecord> epochs;
  // Set when a batch produced a non-finite loss or gradient. That epoch is
  // abandoned (the offending update is not applied), recorded, and training
  // stops.
  bool diverged = false;
  std::size_t optimizer_steps = 0;
};

struct TrainResult {
  Parameters params;
  TrainingTrace trace;
};

// Called after every completed epoch; useful for progress output.
using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch SGD from init_weights(config, derive_seed(seed, "init")).
// Each epoch: seeded Fisher-Yates shuffle of the train split, batches of
// batch_size (last one short), forward/backward/sgd_step per batch,
// parameters rounded to storage precision, then eval-mode accuracy on both
// splits. Throws ConfigError on empty splits or label/class mismatches.
TrainResult train(const ModelConfig& config, const Dataset& data, const Hyperparams& hp,
                  const EpochCallback& on_epoch = {});

// Same, starting from the given parameters instead of a fresh init.
TrainResult train_from(const ModelConfig& config, Parameters initial, const Dataset& data, const Hyperparams& hp,
                       const EpochCallback& on_epoch = {});

// Seed used by train() for the initial weights.
std::uint64_t init_seed_for(std::uint64_t training_seed);

// Eval-mode class distribution for one C x H x W input.
Tensor predict(const ModelConfig& config, const Parameters& params, const Tensor& input);

std::vector<std::size_t> predict_classes(const ModelConfig& config, const Parameters& params, const LabeledSet& set,
                                         std::size_t threads = 1);

// Fraction of correctly classified items; 0 for an empty set.
double accuracy(const ModelConfig& config, const Parameters& params, const LabeledSet& set, std::size_t threads = 1);

// CSV with header `epoch,train_acc,test_acc,mean_loss,wall_seconds`.
void write_trace_csv(const std::filesystem::path& path, const TrainingTrace& trace);

}  // namespace amq::nn
