#include "amq/train.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "amq/errors.hpp"
#include "amq/io.hpp"

namespace amq::nn {

namespace {

void check_split(const LabeledSet& set, std::size_t n_classes, const ModelConfig& config, const char* name) {
  if (set.inputs.empty()) throw ConfigError(std::string(name) + " split is empty");
  if (set.inputs.size() != set.labels.size()) {
    throw ConfigError(std::string(name) + " split has mismatched inputs and labels");
  }
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.labels[i] >= n_classes) throw ConfigError(std::string(name) + " label out of range");
    if (set.inputs[i].shape() != config.input_shape()) {
      throw ConfigError(std::string(name) + " item " + std::to_string(i) + " has shape " +
                        shape_string(set.inputs[i].shape()) + ", model expects " +
                        shape_string(config.input_shape()));
    }
  }
}

bool finite_gradients(const Gradients& g) { return g.all_finite(); }

// Finite and still finite once rounded to storage precision.
bool storable(const Parameters& p) {
  constexpr double limit = std::numeric_limits<float>::max();
  for (const auto& l : p.layers) {
    for (const Tensor* t : {&l.weights, &l.bias}) {
      for (double v : t->data()) {
        if (!(std::abs(v) <= limit)) return false;
      }
    }
  }
  return true;
}

}  // namespace

std::uint64_t init_seed_for(std::uint64_t training_seed) { return derive_seed(training_seed, {0x696e6974}); }

TrainResult train(const ModelConfig& config, const Dataset& data, const Hyperparams& hp,
                  const EpochCallback& on_epoch) {
  config.validate();
  return train_from(config, init_weights(config, init_seed_for(hp.seed)), data, hp, on_epoch);
}

TrainResult train_from(const ModelConfig& config, Parameters initial, const Dataset& data, const Hyperparams& hp,
                       const EpochCallback& on_epoch) {
  config.validate();
  if (data.n_classes != config.n_classes) {
    throw ConfigError("dataset has " + std::to_string(data.n_classes) + " classes, model expects " +
                      std::to_string(config.n_classes));
  }
  check_split(data.train, data.n_classes, config, "train");
  check_split(data.test, data.n_classes, config, "test");
  if (hp.epochs == 0) throw ConfigError("epochs must be positive");
  if (hp.batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(hp.learning_rate >= 0.0) || !std::isfinite(hp.learning_rate)) {
    throw ConfigError("learning rate must be finite and non-negative");
  }

  TrainResult result{std::move(initial), {}};
  Parameters& params = result.params;
  const std::size_t n = data.train.size();
  std::vector<std::size_t> order(n);
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(derive_seed(hp.seed, {0x73687566, epoch}));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double loss_sum = 0.0;
    std::size_t seen = 0;
    bool diverged = false;
    for (std::size_t first = 0, batch_index = 0; first < n; first += hp.batch_size, ++batch_index) {
      const std::size_t count = std::min(hp.batch_size, n - first);
      std::vector<Tensor> items;
      std::vector<std::size_t> labels;
      items.reserve(count);
      for (std::size_t k = 0; k < count; ++k) {
        items.push_back(data.train.inputs[order[first + k]]);
        labels.push_back(data.train.labels[order[first + k]]);
      }
      const Tensor batch = stack(items);
      const auto fwd =
          model_forward(config, params, batch, Mode::Train, derive_seed(hp.seed, {0x64726f70, epoch, batch_index}),
                        hp.threads);
      const double loss = mean_loss(fwd.probs, labels);
      if (!std::isfinite(loss) || !fwd.probs.all_finite()) {
        diverged = true;
        break;
      }
      const Gradients grads = model_backward(config, params, fwd.cache, labels, hp.threads);
      if (!finite_gradients(grads)) {
        diverged = true;
        break;
      }
      Parameters next = params;
      sgd_step(next, grads, hp.learning_rate);
      if (!storable(next)) {
        diverged = true;
        break;
      }
      params = std::move(next);
      ++result.trace.optimizer_steps;
      loss_sum += loss * static_cast<double>(count);
      seen += count;
    }

    params.round_to_storage();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = diverged ? std::nan("") : (seen ? loss_sum / static_cast<double>(seen) : 0.0);
    rec.train_accuracy = accuracy(config, params, data.train, hp.threads);
    rec.test_accuracy = accuracy(config, params, data.test, hp.threads);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.trace.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (diverged) {
      result.trace.diverged = true;
      break;
    }
  }
  return result;
}

Tensor predict(const ModelConfig& config, const Parameters& params, const Tensor& input) {
  Rng unused(0);
  return forward_item(config, params, input, Mode::Eval, unused, nullptr);
}

std::vector<std::size_t> predict_classes(const ModelConfig& config, const Parameters& params, const LabeledSet& set,
                                         std::size_t threads) {
  std::vector<std::size_t> out(set.size());
  auto work = [&](std::size_t t, std::size_t stride) {
    for (std::size_t i = t; i < set.size(); i += stride) {
      const Tensor p = predict(config, params, set.inputs[i]);
      out[i] = argmax(p.data());
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, set.size()));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& th : pool) th.join();
  }
  return out;
}

double accuracy(const ModelConfig& config, const Parameters& params, const LabeledSet& set, std::size_t threads) {
  if (set.size() == 0) return 0.0;
  const auto pred = predict_classes(config, params, set, threads);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == set.labels[i];
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

void write_trace_csv(const std::filesystem::path& path, const TrainingTrace& trace) {
  io::write_atomically(path, false, [&](std::ostream& out) {
    out << "epoch,train_acc,test_acc,mean_loss,wall_seconds\n";
    for (const auto& r : trace.epochs) {
      out << r.epoch << ',' << io::format_real(r.train_accuracy) << ',' << io::format_real(r.test_accuracy) << ','
          << io::format_real(r.mean_loss) << ',' << io::format_fixed(r.wall_seconds, 3) << '\n';
    }
  });
}

}  // namespace amq::nn
