#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "wrin/checkpoint.hpp"
#include "wrin/cifar.hpp"
#include "wrin/network.hpp"
#include "wrin/optimizer.hpp"

namespace wrin {

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // optimizer steps taken so far
  double lr = 0;
  double loss = 0;        // mean over samples
  double accuracy = 0;    // running train-mode accuracy over the epoch
};

struct TrainLog {
  std::vector<EpochRecord> epochs;

  static constexpr const char* kCsvHeader = "epoch,step,lr,loss,acc";

  static std::string csv_line(const EpochRecord& r) {
    std::ostringstream os;
    os.precision(9);
    os << r.epoch << ',' << r.step << ',' << r.lr << ',' << r.loss << ',' << r.accuracy;
    return os.str();
  }

  std::string csv() const {
    std::string out = std::string(kCsvHeader) + "\n";
    for (const auto& r : epochs) out += csv_line(r) + "\n";
    return out;
  }
};

template <typename T>
struct TrainHooks {
  /// Called after every epoch; return false to stop early.
  std::function<bool(const EpochRecord&, Network<T>&)> on_epoch;
};

/// Stacks images (augmented when `seeds` is non-empty) into one batch tensor.
template <typename T>
Tensor<T> make_batch(const std::vector<LabeledImage>& data, std::span<const std::size_t> indices,
                     std::span<const std::uint64_t> seeds, std::vector<int>& labels) {
  const Shape s = data.at(indices[0]).image.shape();
  Tensor<T> batch(Shape{indices.size(), s.c, s.h, s.w});
  labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const LabeledImage& src = data[indices[i]];
    labels[i] = src.label;
    if (!seeds.empty()) {
      const LabeledImage aug = augment(src, seeds[i]);
      std::ranges::transform(aug.image.vec(), batch.sample(i), [](float v) { return static_cast<T>(v); });
    } else {
      std::ranges::transform(src.image.vec(), batch.sample(i), [](float v) { return static_cast<T>(v); });
    }
  }
  return batch;
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Mini-batch SGD with Nesterov momentum. Shuffling and augmentation are seeded
/// from (config.seed, epoch, position) so runs are reproducible. `state` carries
/// velocities across calls (for resumed runs); `first_epoch` is 0-based.
template <typename T>
TrainLog train_epochs(Network<T>& net, const std::vector<LabeledImage>& data, const TrainConfig& config,
                      const TrainHooks<T>& hooks = {}, OptimizerState<T>* state = nullptr,
                      std::size_t first_epoch = 0) {
  if (data.empty()) throw std::invalid_argument("train_epochs: empty dataset");
  config.validate();
  OptimizerState<T> local(net.params());
  OptimizerState<T>& opt = state ? *state : local;
  if (opt.velocity.size() != net.params().size()) opt = OptimizerState<T>(net.params());

  TrainLog log;
  std::vector<std::size_t> order(data.size());
  std::vector<int> labels;
  for (std::size_t epoch = first_epoch; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(mix_seed(config.seed, epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0;
    std::size_t correct = 0;
    double lr = lr_at(config.schedule, config.schedule.kind == LRSchedule::Kind::epochs ? epoch : opt.step_count,
                      config.lr_initial);
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, order.size() - begin);
      std::span<const std::size_t> idx(order.data() + begin, count);
      std::vector<std::uint64_t> seeds;
      if (config.augment) {
        for (std::size_t i = 0; i < count; ++i) seeds.push_back(mix_seed(mix_seed(config.seed, epoch), begin + i));
      }
      Tensor<T> batch = make_batch<T>(data, idx, seeds, labels);
      if (config.schedule.kind == LRSchedule::Kind::iterations) lr = lr_at(config.schedule, opt.step_count, config.lr_initial);
      auto r = execute(net, batch, Mode::train, std::span<const int>(labels));
      loss_sum += static_cast<double>(*r.loss) * static_cast<double>(count);
      correct += r.correct;
      sgd_nesterov_step<T>(net.params(), opt, static_cast<T>(lr), static_cast<T>(config.momentum),
                           static_cast<T>(config.weight_decay), config.freeze);
    }
    EpochRecord rec{epoch + 1, opt.step_count, lr, loss_sum / static_cast<double>(data.size()),
                    static_cast<double>(correct) / static_cast<double>(data.size())};
    log.epochs.push_back(rec);
    if (!config.checkpoint_path.empty() && config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0) {
      save_checkpoint(net, config.checkpoint_path);
    }
    if (hooks.on_epoch && !hooks.on_epoch(rec, net)) break;
  }
  if (!config.checkpoint_path.empty()) save_checkpoint(net, config.checkpoint_path);
  return log;
}

struct EvalSummary {
  double loss = 0;
  double accuracy = 0;
  double error() const { return 1.0 - accuracy; }
  std::size_t samples = 0;
};

/// Inference-mode loss and top-1 accuracy.
template <typename T>
EvalSummary evaluate_classifier(const Network<T>& net, const std::vector<LabeledImage>& data,
                                std::size_t batch_size = 100) {
  EvalSummary s;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<int> labels;
  double loss_sum = 0;
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t count = std::min(batch_size, order.size() - begin);
    Tensor<T> batch = make_batch<T>(data, std::span<const std::size_t>(order.data() + begin, count), {}, labels);
    auto ce = softmax_cross_entropy<T>(net.infer(batch), std::span<const int>(labels));
    loss_sum += static_cast<double>(ce.loss) * static_cast<double>(count);
    correct += ce.correct;
  }
  s.samples = data.size();
  if (!data.empty()) {
    s.loss = loss_sum / static_cast<double>(data.size());
    s.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  }
  return s;
}

}  // namespace wrin
