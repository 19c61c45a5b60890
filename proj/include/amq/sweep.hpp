#pragma once

// Hyperparameter sweeps over epochs, learning rate, or batch size.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "amq/model.hpp"
#include "amq/train.hpp"

namespace amq::sweep {

enum class Axis { Epoch, LearningRate, BatchSize };

// "epoch", "learning_rate", "batch_size".
std::string axis_name(Axis axis);
Axis parse_axis(const std::string& text);

struct SweepSpec {
  Axis axis = Axis::LearningRate;
  std::vector<double> values;
  nn::Hyperparams base;  // fixed settings for the other axes; base.seed is the master seed
  std::size_t repetitions = 3;
  // Points trained concurrently. Each run is single-threaded.
  std::size_t parallel_runs = 1;
};

struct SweepRecord {
  double value = 0.0;
  std::size_t repetition = 0;
  double test_accuracy = 0.0;
  double train_accuracy = 0.0;
  double wall_seconds = 0.0;
  bool diverged = false;
  friend bool operator==(const SweepRecord&, const SweepRecord&) = default;
};

struct SweepResult {
  Axis axis = Axis::LearningRate;
  std::vector<SweepRecord> records;  // (value, repetition) order
};

// Throws ConfigError unless values are nonempty, finite, strictly
// increasing and legal for the axis: learning rates >= 0, epoch counts and
// batch sizes positive integers, batch sizes no larger than the train split.
void validate(const SweepSpec& spec, const nn::Dataset& data);

// Training seed of one run. Depends on the value itself rather than its
// position, so adding or reordering points leaves other runs unchanged.
std::uint64_t run_seed(std::uint64_t master, double value, std::size_t repetition);

// One training run of max(values) epochs with the master seed.
nn::TrainingTrace epoch_sweep(const nn::ModelConfig& config, const nn::Dataset& data, const SweepSpec& spec);

// Reads the trace at each requested epoch. A point past the end of a
// diverged trace takes the last record and is flagged diverged.
SweepResult epoch_points(const SweepSpec& spec, const nn::TrainingTrace& trace);

// One independent run per (value, repetition). Numeric failures mark the
// record diverged instead of aborting the sweep.
SweepResult lr_sweep(const nn::ModelConfig& config, const nn::Dataset& data, const SweepSpec& spec);
SweepResult batch_sweep(const nn::ModelConfig& config, const nn::Dataset& data, const SweepSpec& spec);

// Dispatches on spec.axis.
SweepResult run_sweep(const nn::ModelConfig& config, const nn::Dataset& data, const SweepSpec& spec);

// Mean test accuracy per swept value, in value order.
std::vector<std::pair<double, double>> mean_test_accuracy(const SweepResult& result);

inline constexpr const char* kSweepCsvHeader = "axis,value,repetition,test_acc,train_acc,wall_seconds,diverged";

void emit_csv(const SweepResult& result, const std::filesystem::path& path);
SweepResult read_csv(const std::filesystem::path& path);

}  // namespace amq::sweep
