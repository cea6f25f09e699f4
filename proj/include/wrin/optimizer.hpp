#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "wrin/graph.hpp"

namespace wrin {

/// Step learning-rate schedule: lr = lr_initial * factor^(boundaries passed).
/// `every` adds a periodic boundary at each positive multiple (0 disables).
struct LRSchedule {
  enum class Kind { epochs, iterations };
  Kind kind = Kind::epochs;
  std::vector<std::size_t> boundaries;
  double factor = 0.2;
  std::size_t every = 0;

  /// x0.2 at epochs 60, 120 and 160.
  static LRSchedule classification() { return {Kind::epochs, {60, 120, 160}, 0.2, 0}; }
  /// x0.1 every 40,000 iterations.
  static LRSchedule detection() { return {Kind::iterations, {}, 0.1, 40000}; }

  void validate() const {
    if (!(factor > 0.0 && factor < 1.0)) throw std::invalid_argument("schedule factor must lie in (0, 1)");
    for (std::size_t i = 1; i < boundaries.size(); ++i) {
      if (boundaries[i] <= boundaries[i - 1]) throw std::invalid_argument("schedule boundaries must strictly increase");
    }
  }
};

inline double lr_at(const LRSchedule& s, std::size_t index, double lr_initial) {
  std::size_t passed = static_cast<std::size_t>(std::ranges::count_if(s.boundaries, [&](std::size_t b) { return index >= b; }));
  if (s.every > 0) passed += index / s.every;
  return lr_initial * std::pow(s.factor, static_cast<double>(passed));
}

struct TrainConfig {
  double lr_initial = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.005;
  std::size_t batch_size = 128;
  LRSchedule schedule = LRSchedule::classification();
  std::size_t epochs = 200;
  std::uint64_t seed = 1;
  std::vector<std::string> freeze;  // parameter-name prefixes excluded from updates
  bool augment = true;
  std::size_t checkpoint_every = 0;  // epochs; 0 writes only at the end
  std::string checkpoint_path;

  static TrainConfig classification() { return {}; }
  static TrainConfig detection() {
    TrainConfig c;
    c.lr_initial = 0.001;
    c.weight_decay = 0.0005;
    c.batch_size = 32;
    c.schedule = LRSchedule::detection();
    return c;
  }

  void validate() const {
    if (!(lr_initial >= 0.0) || !(momentum >= 0.0 && momentum < 1.0) || !(weight_decay >= 0.0)) {
      throw std::invalid_argument("learning rate, momentum and weight decay must be nonnegative (momentum < 1)");
    }
    if (batch_size == 0) throw std::invalid_argument("batch_size must be at least 1");
    schedule.validate();
  }
};

inline void to_json(nlohmann::json& j, const LRSchedule& s) {
  j = {{"kind", s.kind == LRSchedule::Kind::epochs ? "epochs" : "iterations"},
       {"boundaries", s.boundaries},
       {"factor", s.factor},
       {"every", s.every}};
}

inline void from_json(const nlohmann::json& j, LRSchedule& s) {
  const std::string kind = j.value("kind", std::string("epochs"));
  if (kind != "epochs" && kind != "iterations") throw std::invalid_argument("schedule kind must be epochs or iterations");
  s.kind = kind == "epochs" ? LRSchedule::Kind::epochs : LRSchedule::Kind::iterations;
  s.boundaries = j.value("boundaries", std::vector<std::size_t>{});
  s.factor = j.value("factor", 0.2);
  s.every = j.value("every", std::size_t{0});
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"lr_initial", c.lr_initial}, {"momentum", c.momentum},   {"weight_decay", c.weight_decay},
       {"batch_size", c.batch_size}, {"schedule", c.schedule},   {"epochs", c.epochs},
       {"seed", c.seed},             {"freeze", c.freeze},       {"augment", c.augment},
       {"checkpoint_every", c.checkpoint_every}};
}

/// Overlays the keys present in `j` onto `c`.
inline void merge_train_config(const nlohmann::json& j, TrainConfig& c) {
  c.lr_initial = j.value("lr_initial", c.lr_initial);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("schedule")) c.schedule = j.at("schedule").get<LRSchedule>();
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.freeze = j.value("freeze", c.freeze);
  c.augment = j.value("augment", c.augment);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
}

inline bool is_frozen(const std::string& name, const std::vector<std::string>& freeze) {
  return std::ranges::any_of(freeze, [&](const std::string& p) { return name.starts_with(p); });
}

template <typename T>
struct OptimizerState {
  std::vector<std::vector<T>> velocity;  // mirrors the parameter registry
  std::size_t step_count = 0;

  explicit OptimizerState(const std::vector<Parameter<T>>& params = {}) {
    for (const auto& p : params) velocity.emplace_back(p.learnable ? p.size() : 0, T(0));
  }
};

/// One Nesterov update of a single tensor:
///   g <- grad + wd * w;  v <- mu * v + g;  w <- w - lr * (g + mu * v)
template <typename T>
void nesterov_update(std::span<T> w, std::span<const T> grad, std::span<T> v, T lr, T momentum, T weight_decay) {
  if (w.size() != grad.size() || w.size() != v.size()) throw ShapeError("nesterov_update: size mismatch");
  for (std::size_t i = 0; i < w.size(); ++i) {
    const T g = grad[i] + weight_decay * w[i];
    v[i] = momentum * v[i] + g;
    w[i] -= lr * (g + momentum * v[i]);
  }
}

/// Updates every learnable, non-frozen parameter from its accumulated gradient.
template <typename T>
void sgd_nesterov_step(std::vector<Parameter<T>>& params, OptimizerState<T>& state, T lr, T momentum, T weight_decay,
                       const std::vector<std::string>& freeze = {}) {
  if (state.velocity.size() != params.size()) throw ShapeError("optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = params[i];
    if (!p.learnable || is_frozen(p.name, freeze)) continue;
    if (p.grad.size() != p.value.size() || state.velocity[i].size() != p.value.size()) {
      throw ShapeError("sgd_nesterov_step: shape mismatch for '" + p.name + "'");
    }
    nesterov_update<T>(p.value, p.grad, state.velocity[i], lr, momentum, weight_decay);
  }
  ++state.step_count;
}

}  // namespace wrin
