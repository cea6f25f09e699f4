#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "wrin/blocks.hpp"
#include "wrin/network.hpp"

namespace wrin {

struct GradcheckOptions {
  std::uint64_t seed = 1;
  double tolerance = 1e-4;
  double step = 1e-5;             // central-difference half width
  double floor = 1e-6;            // denominator floor of the relative error
  std::size_t coords_per_tensor = 24;
  bool inject_fault = false;      // corrupts every analytic gradient (negative control)
};

struct GradcheckItem {
  std::string suite;  // layer | unit | network
  std::string name;
  double max_rel_error = 0;
  std::string worst;  // "<tensor>[index]"
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose perturbation crosses a ReLU kink at every step tried
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckItem> items;
  bool passed() const {
    return !items.empty() && std::ranges::all_of(items, [](const GradcheckItem& i) { return i.passed; });
  }
  double max_rel_error() const {
    double m = 0;
    for (const auto& i : items) m = std::max(m, i.max_rel_error);
    return m;
  }
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

namespace detail {

/// Moves batch-norm affine terms and biases away from their initial values so
/// the checked function has no special structure.
inline void randomize_affine(Network<double>& net, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> gamma(0.5, 1.5);
  std::uniform_real_distribution<double> shift(-0.5, 0.5);
  for (auto& p : net.params()) {
    if (p.name.ends_with("/gamma")) {
      for (auto& v : p.value) v = gamma(rng);
    } else if (p.name.ends_with("/beta") || p.name.ends_with("/bias")) {
      for (auto& v : p.value) v = shift(rng);
    }
  }
}

inline Tensor<double> random_tensor(Shape s, std::mt19937_64& rng) {
  Tensor<double> t(s);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : t.vec()) v = dist(rng);
  return t;
}

}  // namespace detail

/// Central finite differences against the graph's backward pass. The scalar is
/// softmax cross-entropy when labels are given, else <R, output> for a fixed
/// random R. Batch norm runs in train mode. Coordinates whose perturbation flips
/// any ReLU input sign are retried with a 10x smaller step (up to three times).
inline GradcheckItem check_network_gradients(const std::string& suite, const std::string& name, Network<double>& net,
                                             const Tensor<double>& input, std::optional<std::vector<int>> labels,
                                             const GradcheckOptions& opt, std::mt19937_64& rng) {
  Tensor<double> x = input;
  const std::size_t out = net.output();
  Tensor<double> probe;
  if (!labels) probe = detail::random_tensor(net.run(x, Mode::train).outputs[out].shape(), rng);

  auto loss_of = [&](const Trace<double>& t) {
    if (labels) return softmax_cross_entropy<double>(t.outputs[out], std::span<const int>(*labels)).loss;
    double s = 0;
    for (std::size_t i = 0; i < probe.size(); ++i) s += probe[i] * t.outputs[out][i];
    return s;
  };
  std::vector<std::size_t> relus;
  for (std::size_t i = 0; i < net.nodes().size(); ++i) {
    if (net.node(i).kind == LayerKind::relu) relus.push_back(i);
  }
  auto signature = [&](const Trace<double>& t) {
    std::vector<bool> s;
    for (std::size_t r : relus) {
      for (double v : t.outputs[net.node(r).inputs[0]].vec()) s.push_back(v > 0);
    }
    return s;
  };

  // Analytic gradients.
  Trace<double> base = net.run(x, Mode::train);
  const std::vector<bool> base_sig = signature(base);
  Tensor<double> seed_grad;
  if (labels) {
    seed_grad = softmax_cross_entropy<double>(base.outputs[out], std::span<const int>(*labels)).grad;
  } else {
    seed_grad = probe;
  }
  net.zero_grad();
  std::vector<std::pair<std::size_t, Tensor<double>>> seeds;
  seeds.emplace_back(out, std::move(seed_grad));
  const Tensor<double> dx = net.backward(base, std::move(seeds), true);

  struct Variable {
    std::string name;
    std::vector<double>* value;
    std::vector<double> grad;
  };
  std::vector<Variable> vars;
  vars.push_back({"input", &x.vec(), dx.vec()});
  for (auto& p : net.params()) {
    if (p.learnable) vars.push_back({p.name, &p.value, p.grad});
  }
  if (opt.inject_fault) {
    for (auto& v : vars) {
      for (auto& g : v.grad) g += 1e-2 * std::abs(g) + 1e-3;
    }
  }

  GradcheckItem item{suite, name, 0.0, "", 0, 0, false};
  for (auto& v : vars) {
    std::vector<std::size_t> coords(v.value->size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > opt.coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opt.coords_per_tensor);
      std::ranges::sort(coords);
    }
    for (std::size_t c : coords) {
      double& theta = (*v.value)[c];
      const double saved = theta;
      std::optional<double> numeric;
      double h = opt.step;
      for (int attempt = 0; attempt < 4 && !numeric; ++attempt, h *= 0.1) {
        theta = saved + h;
        const Trace<double> plus = net.run(x, Mode::train);
        theta = saved - h;
        const Trace<double> minus = net.run(x, Mode::train);
        theta = saved;
        if (signature(plus) != base_sig || signature(minus) != base_sig) continue;
        numeric = (loss_of(plus) - loss_of(minus)) / (2 * h);
      }
      if (!numeric) {
        ++item.skipped;
        continue;
      }
      ++item.checked;
      const double err = relative_error(v.grad[c], *numeric, opt.floor);
      if (err > item.max_rel_error || item.worst.empty()) {
        item.max_rel_error = err;
        item.worst = v.name + "[" + std::to_string(c) + "]";
      }
    }
  }
  item.passed = item.checked > 0 && item.max_rel_error < opt.tolerance;
  return item;
}

namespace detail {

struct GraphCase {
  std::string suite;
  std::string name;
  std::function<Network<double>()> build;
  std::size_t batch = 2;
  bool classify = false;
};

inline Network<double> single_layer(Shape3 in, const std::function<std::size_t(Network<double>&)>& add) {
  Network<double> net(in);
  net.set_output(add(net));
  return net;
}

inline std::vector<GraphCase> gradcheck_cases() {
  std::vector<GraphCase> cases;
  auto layer = [&](std::string name, Shape3 in, std::function<std::size_t(Network<double>&)> add, std::size_t batch = 2,
                   bool classify = false) {
    cases.push_back({"layer", std::move(name), [in, add] { return single_layer(in, add); }, batch, classify});
  };
  layer("conv3x3", {3, 8, 8}, [](Network<double>& n) { return n.add_conv("conv", 0, 4, 3, 1, 1, true); });
  layer("conv3x3_stride2", {3, 6, 6}, [](Network<double>& n) { return n.add_conv("conv", 0, 4, 3, 2, 1); });
  layer("conv1x1", {4, 4, 4}, [](Network<double>& n) { return n.add_conv("conv", 0, 3, 1, 1, 0, true); });
  layer("conv1x1_stride2", {4, 5, 5}, [](Network<double>& n) { return n.add_conv("conv", 0, 3, 1, 2, 0); });
  layer("batch_norm", {4, 3, 3}, [](Network<double>& n) { return n.add_batch_norm("bn", 0); }, 3);
  layer("relu", {3, 4, 4}, [](Network<double>& n) { return n.add_relu("relu", 0); });
  layer("add", {3, 4, 4}, [](Network<double>& n) {
    const std::size_t c = n.add_conv("conv", 0, 3, 3, 1, 1);
    return n.add_add("add", 0, c);
  });
  layer("concat", {3, 4, 4}, [](Network<double>& n) {
    const std::size_t a = n.add_conv("a", 0, 2, 1, 1, 0);
    const std::size_t b = n.add_conv("b", 0, 3, 3, 1, 1);
    return n.add_concat("concat", {a, 0, b});
  });
  layer("global_avg_pool", {4, 3, 3}, [](Network<double>& n) { return n.add_global_avg_pool("pool", 0); });
  layer("fully_connected", {3, 2, 2}, [](Network<double>& n) { return n.add_fully_connected("fc", 0, 5); });
  layer("softmax_cross_entropy", {6, 1, 1}, [](Network<double>& n) { return n.add_fully_connected("fc", 0, 4); }, 4, true);

  auto unit = [&](std::string name, UnitSpec spec, std::size_t spatial) {
    cases.push_back({"unit", std::move(name), [spec, spatial] { return standalone_unit<double>(spec, spatial).first; }, 2,
                     false});
  };
  unit("basic", UnitSpec::basic(4, 4), 4);
  unit("basic_projection", UnitSpec::basic(3, 5), 4);
  unit("basic_stride2", UnitSpec::basic(4, 6, 2), 5);
  unit("bottleneck", UnitSpec::bottleneck(8, 8), 4);
  unit("bottleneck_stride2", UnitSpec::bottleneck(4, 8, 2), 5);
  unit("inception", UnitSpec::inception(6, {4, 3, 2, 3}, 6), 4);
  unit("inception_stride2", UnitSpec::inception(4, {3, 2, 2, 2}, 6, 2), 5);

  cases.push_back({"network", "mini",
                   [] {
                     auto cfg = builtin_config("mini", 4, Shape3{3, 8, 8});
                     auto b = build_network<double>(cfg, 0);
                     return std::move(b.graph);
                   },
                   4, true});
  return cases;
}

}  // namespace detail

/// Every layer kind, every unit variant (with and without projection shortcuts)
/// and the miniature end-to-end classifier, all in double precision.
inline GradcheckReport run_gradcheck(const GradcheckOptions& opt) {
  GradcheckReport report;
  std::uint64_t case_index = 0;
  for (const auto& c : detail::gradcheck_cases()) {
    std::mt19937_64 rng(opt.seed * 1000003ULL + case_index++);
    Network<double> net = c.build();
    net.initialize(rng());
    detail::randomize_affine(net, rng);
    const Shape3 in = net.input_shape();
    Tensor<double> x = detail::random_tensor(in.batch(c.batch), rng);
    std::optional<std::vector<int>> labels;
    if (c.classify) {
      const std::size_t classes = net.node(net.output()).out_shape.c;
      std::uniform_int_distribution<int> pick(0, static_cast<int>(classes) - 1);
      labels.emplace();
      for (std::size_t i = 0; i < c.batch; ++i) labels->push_back(pick(rng));
    }
    report.items.push_back(check_network_gradients(c.suite, c.name, net, x, labels, opt, rng));
  }
  return report;
}

inline nlohmann::json to_json(const GradcheckReport& r, const GradcheckOptions& opt) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& i : r.items) {
    items.push_back({{"suite", i.suite},
                     {"name", i.name},
                     {"max_rel_error", i.max_rel_error},
                     {"worst", i.worst},
                     {"checked", i.checked},
                     {"skipped", i.skipped},
                     {"passed", i.passed}});
  }
  return {{"seed", opt.seed}, {"tolerance", opt.tolerance}, {"items", items}, {"passed", r.passed()}};
}

inline std::string to_text(const GradcheckReport& r, const GradcheckOptions& opt) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-8s %-24s %14s %8s %8s  %s\n", "suite", "item", "max_rel_err", "checked", "skipped",
                "result");
  out += buf;
  for (const auto& i : r.items) {
    std::snprintf(buf, sizeof buf, "%-8s %-24s %14.6e %8zu %8zu  %s\n", i.suite.c_str(), i.name.c_str(), i.max_rel_error,
                  i.checked, i.skipped, i.passed ? "PASS" : "FAIL");
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "bound %.1e  overall %s\n", opt.tolerance, r.passed() ? "PASS" : "FAIL");
  out += buf;
  return out;
}

}  // namespace wrin
