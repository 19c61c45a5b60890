#include "amq/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "amq/errors.hpp"
#include "amq/io.hpp"
#include "amq/rng.hpp"

namespace amq::sweep {

std::string axis_name(Axis axis) {
  switch (axis) {
    case Axis::Epoch: return "epoch";
    case Axis::LearningRate: return "learning_rate";
    case Axis::BatchSize: return "batch_size";
  }
  return "?";
}

Axis parse_axis(const std::string& text) {
  if (text == "epoch") return Axis::Epoch;
  if (text == "learning_rate") return Axis::LearningRate;
  if (text == "batch_size") return Axis::BatchSize;
  throw ConfigError("unknown sweep axis '" + text + "' (expected epoch, learning_rate or batch_size)");
}

namespace {

bool is_positive_integer(double v) { return v >= 1.0 && v == std::floor(v) && v < 1e15; }

}  // namespace

void validate(const SweepSpec& spec, const nn::Dataset& data) {
  const std::string axis = axis_name(spec.axis);
  if (spec.values.empty()) throw ConfigError(axis + " sweep has no values");
  if (spec.repetitions == 0) throw ConfigError("sweep repetitions must be positive");
  for (std::size_t i = 0; i < spec.values.size(); ++i) {
    const double v = spec.values[i];
    if (!std::isfinite(v)) throw ConfigError(axis + " sweep value " + std::to_string(i) + " is not finite");
    if (i > 0 && !(v > spec.values[i - 1])) throw ConfigError(axis + " sweep values must be strictly increasing");
    switch (spec.axis) {
      case Axis::LearningRate:
        if (v < 0.0) throw ConfigError("learning rate " + io::format_real(v) + " is negative");
        break;
      case Axis::Epoch:
        if (!is_positive_integer(v)) throw ConfigError("epoch count " + io::format_real(v) + " is not a positive integer");
        break;
      case Axis::BatchSize:
        if (!is_positive_integer(v)) throw ConfigError("batch size " + io::format_real(v) + " is not a positive integer");
        if (v > static_cast<double>(data.train.size())) {
          throw ConfigError("batch size " + io::format_real(v) + " exceeds the train split (" +
                            std::to_string(data.train.size()) + " items)");
        }
        break;
    }
  }
}

std::uint64_t run_seed(std::uint64_t master, double value, std::size_t repetition) {
  // +0.0 so that -0.0 and 0.0 name the same point.
  return derive_seed(master, {std::bit_cast<std::uint64_t>(value + 0.0), repetition});
}

nn::TrainingTrace epoch_sweep(const nn::ModelConfig& config, const nn::Dataset& data, const SweepSpec& spec) {
  if (spec.axis != Axis::Epoch) throw ConfigError("epoch_sweep needs the epoch axis");
  validate(spec, data);
  nn::Hyperparams hp = spec.base;
  hp.epochs = static_cast<std::size_t>(spec.values.back());
  return nn::train(config, data, hp).trace;
}

SweepResult epoch_points(const SweepSpec& spec, const nn::TrainingTrace& trace) {
  if (trace.epochs.empty()) throw DomainError("epoch_points: empty trace");
  SweepResult result;
  result.axis = Axis::Epoch;
  for (double v : spec.values) {
    const auto wanted = static_cast<std::size_t>(v);
    const bool past_end = wanted > trace.epochs.size();
    const auto& rec = trace.epochs[std::min(wanted, trace.epochs.size()) - 1];
    SweepRecord r;
    r.value = v;
    r.test_accuracy = rec.test_accuracy;
    r.train_accuracy = rec.train_accuracy;
    r.wall_seconds = rec.wall_seconds;
    r.diverged = trace.diverged && (past_end || wanted == trace.epochs.size());
    result.records.push_back(r);
  }
  return result;
}

namespace {

SweepRecord run_point(const nn::ModelConfig& config, const nn::Dataset& data, const SweepSpec& spec, double value,
                      std::size_t repetition) {
  nn::Hyperparams hp = spec.base;
  hp.seed = run_seed(spec.base.seed, value, repetition);
  hp.threads = 1;
  if (spec.axis == Axis::LearningRate) {
    hp.learning_rate = value;
  } else {
    hp.batch_size = static_cast<std::size_t>(value);
  }
  SweepRecord r;
  r.value = value;
  r.repetition = repetition;
  try {
    const auto result = nn::train(config, data, hp);
    const auto& last = result.trace.epochs.back();
    r.test_accuracy = last.test_accuracy;
    r.train_accuracy = last.train_accuracy;
    r.wall_seconds = last.wall_seconds;
    r.diverged = result.trace.diverged;
  } catch (const DomainError&) {
    r.diverged = true;
  } catch (const std::range_error&) {
    r.diverged = true;
  } catch (const std::overflow_error&) {
    r.diverged = true;
  }
  return r;
}

SweepResult run_points(const nn::ModelConfig& config, const nn::Dataset& data, const SweepSpec& spec) {
  validate(spec, data);
  SweepResult result;
  result.axis = spec.axis;
  const std::size_t total = spec.values.size() * spec.repetitions;
  result.records.resize(total);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      try {
        result.records[i] = run_point(config, data, spec, spec.values[i / spec.repetitions], i % spec.repetitions);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = total;
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(spec.parallel_runs, 1, total);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return result;
}

}  // namespace

SweepResult lr_sweep(const nn::ModelConfig& config, const nn::Dataset& data, const SweepSpec& spec) {
  if (spec.axis != Axis::LearningRate) throw ConfigError("lr_sweep needs the learning_rate axis");
  return run_points(config, data, spec);
}

SweepResult batch_sweep(const nn::ModelConfig& config, const nn::Dataset& data, const SweepSpec& spec) {
  if (spec.axis != Axis::BatchSize) throw ConfigError("batch_sweep needs the batch_size axis");
  return run_points(config, data, spec);
}

SweepResult run_sweep(const nn::ModelConfig& config, const nn::Dataset& data, const SweepSpec& spec) {
  switch (spec.axis) {
    case Axis::Epoch: return epoch_points(spec, epoch_sweep(config, data, spec));
    case Axis::LearningRate: return lr_sweep(config, data, spec);
    case Axis::BatchSize: return batch_sweep(config, data, spec);
  }
  throw ConfigError("unknown sweep axis");
}

std::vector<std::pair<double, double>> mean_test_accuracy(const SweepResult& result) {
  std::map<double, std::pair<double, std::size_t>> sums;
  for (const auto& r : result.records) {
    auto& s = sums[r.value];
    s.first += r.test_accuracy;
    ++s.second;
  }
  std::vector<std::pair<double, double>> out;
  for (const auto& [value, s] : sums) out.emplace_back(value, s.first / static_cast<double>(s.second));
  return out;
}

void emit_csv(const SweepResult& result, const std::filesystem::path& path) {
  const std::string axis = axis_name(result.axis);
  io::write_atomically(path, false, [&](std::ostream& out) {
    out << kSweepCsvHeader << '\n';
    for (const auto& r : result.records) {
      out << axis << ',' << io::format_real(r.value) << ',' << r.repetition << ',' << io::format_real(r.test_accuracy)
          << ',' << io::format_real(r.train_accuracy) << ',' << io::format_real(r.wall_seconds) << ','
          << (r.diverged ? 1 : 0) << '\n';
    }
  });
}

SweepResult read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open sweep CSV " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kSweepCsvHeader) {
    throw FormatError(path.string() + ": line 1: expected header '" + std::string(kSweepCsvHeader) + "'");
  }
  SweepResult result;
  std::size_t line_no = 1;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = io::split_csv_line(line);
    const std::string where = path.string() + ": line " + std::to_string(line_no);
    if (f.size() != 7) throw FormatError(where + ": expected 7 fields, found " + std::to_string(f.size()));
    try {
      const Axis axis = parse_axis(f[0]);
      if (first) {
        result.axis = axis;
        first = false;
      } else if (axis != result.axis) {
        throw FormatError("mixed axes");
      }
      SweepRecord r;
      r.value = io::parse_real(f[1]);
      r.repetition = io::parse_uint(f[2]);
      r.test_accuracy = io::parse_real(f[3]);
      r.train_accuracy = io::parse_real(f[4]);
      r.wall_seconds = io::parse_real(f[5]);
      if (f[6] != "0" && f[6] != "1") throw FormatError("diverged must be 0 or 1");
      r.diverged = f[6] == "1";
      result.records.push_back(r);
    } catch (const std::exception& e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  return result;
}

}  // namespace amq::sweep
