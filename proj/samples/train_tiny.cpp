// Trains the small reference network on synthetic CIFAR-shaped data.
#include <cstdio>

#include "wrin/wrin.hpp"

int main() {
  auto train = wrin::synthetic_cifar(640, 10, 1);
  std::vector<wrin::LabeledImage> test(train.begin() + 512, train.end());
  train.resize(512);
  const auto stats = wrin::compute_channel_stats(train);
  wrin::normalize(train, stats);
  wrin::normalize(test, stats);

  auto built = wrin::build_network(wrin::builtin_config("mini"), 7);
  auto cfg = wrin::TrainConfig::classification();
  cfg.epochs = 5;
  cfg.batch_size = 64;
  wrin::TrainHooks<float> hooks;
  hooks.on_epoch = [](const wrin::EpochRecord& r, wrin::Network<float>&) {
    std::printf("epoch %zu  lr %.4f  loss %.4f  acc %.3f\n", r.epoch, r.lr, r.loss, r.accuracy);
    return true;
  };
  wrin::train_epochs(built.graph, train, cfg, hooks);
  std::printf("held-out error %.3f\n", wrin::evaluate_classifier(built.graph, test).error());
}
