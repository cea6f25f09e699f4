// Acceptance run: one PASS/FAIL line per criterion.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>

#include "oracles.hpp"
#include "wrin/wrin.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome parameter_counts() {
  struct Budget {
    const char* name;
    double target;
    double tolerance;
  };
  const Budget budgets[] = {{"wrn-16-4", 2.8e6, 0.02},
                            {"wr-inception", 2.7e6, 0.02},
                            {"wr-inception-l2", 4.8e6, 0.02},
                            {"preact-resnet-164", 1.7e6, 0.05}};
  Outcome o{true, ""};
  for (const auto& b : budgets) {
    const auto cfg = wrin::builtin_config(b.name);
    const auto counted = wrin::analyze_config(cfg).total_params;
    const auto hand = oracle::network_params(cfg);
    const double dev = std::abs(static_cast<double>(counted) - b.target) / b.target;
    o.pass = o.pass && counted == hand && dev <= b.tolerance;
    o.detail += fmt("%s=%llu (%+.2f%%) ", b.name, static_cast<unsigned long long>(counted),
                    100.0 * (static_cast<double>(counted) - b.target) / b.target);
  }
  return o;
}

Outcome unit_cost() {
  const auto basic = wrin::UnitSpec::basic(128, 128);
  const auto inc = wrin::UnitSpec::inception(128, {128, 64, 64, 128}, 128);
  const auto b = wrin::unit_cost_per_position(basic);
  const auto i = wrin::unit_cost_per_position(inc);
  const double ratio = wrin::compare_unit_cost(inc, basic);
  // Hand count: two 3x3 128->128; shared 1x1 128->128, then 3x3 128->64, 3x3 128->64 and 3x3 64->128.
  const std::uint64_t hand_basic = 2ull * 9 * 128 * 128;
  const std::uint64_t hand_branch = 128ull * 128 + 9ull * 128 * 64 + 9ull * 128 * 64 + 9ull * 64 * 128;
  const bool pass = b.total() == 294912 && b.total() == hand_basic && i.branch == 237568 && i.branch == hand_branch &&
                    ratio >= 0.90 && ratio <= 1.00;
  return {pass, fmt("basic=%llu inception_branch=%llu projection=%llu ratio=%.4f",
                    static_cast<unsigned long long>(b.total()), static_cast<unsigned long long>(i.branch),
                    static_cast<unsigned long long>(i.projection), ratio)};
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  double worst = 0;
  bool pass = true;
  std::size_t items = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    wrin::GradcheckOptions opt;
    opt.seed = seed;
    const auto r = wrin::run_gradcheck(opt);
    pass = pass && r.passed();
    worst = std::max(worst, r.max_rel_error());
    items += r.items.size();
  }
  wrin::GradcheckOptions faulty;
  faulty.inject_fault = true;
  const bool control = !wrin::run_gradcheck(faulty).passed();
  const double secs = seconds_since(t0);
  return {pass && worst < 1e-4 && control && secs < 300,
          fmt("20 seeds, %zu items, max rel err %.3e, fault control %s, %.1fs", items, worst,
              control ? "caught" : "missed", secs)};
}

Outcome receptive_fields() {
  const auto t0 = Clock::now();
  wrin::Network<float> two(wrin::Shape3{1, 16, 16});
  two.add_conv("b", two.add_conv("a", 0, 1, 3, 1, 1), 1, 3, 1, 1);
  const bool stacked = wrin::receptive_field(two, "b").rf == 5;
  const bool branches =
      wrin::effective_receptive_paths(wrin::UnitSpec::inception(128, {128, 64, 64, 128}, 128)) == std::set<std::size_t>{1, 3, 5};

  const auto built = wrin::build_network<double>(wrin::builtin_config("mini", 4, wrin::Shape3{3, 48, 48}), 1);
  const auto rf = wrin::receptive_fields(built.graph);
  const auto measured = oracle::pixel_influence(built.graph);
  std::size_t checked = 0, mismatched = 0;
  for (std::size_t i = 1; i < rf.size(); ++i) {
    const auto kind = built.graph.node(i).kind;
    if (kind == wrin::LayerKind::global_avg_pool || kind == wrin::LayerKind::fully_connected) continue;
    ++checked;
    mismatched += measured[i].clipped || measured[i].extent != rf[i].rf;
  }
  const double secs = seconds_since(t0);
  return {stacked && branches && mismatched == 0 && secs < 60,
          fmt("stacked 3x3=5 %s, inception paths {1,3,5} %s, mini nodes %zu/%zu exact, %.1fs", stacked ? "ok" : "bad",
              branches ? "ok" : "bad", checked - mismatched, checked, secs)};
}

wrin::TrainConfig overfit_config() {
  auto c = wrin::TrainConfig::classification();
  c.batch_size = 32;
  c.lr_initial = 0.05;
  c.augment = false;
  c.seed = 2024;
  return c;
}

Outcome training_sanity() {
  const auto t0 = Clock::now();
  auto data = wrin::synthetic_cifar(256, 10, 77);
  wrin::normalize(data, wrin::compute_channel_stats(data));
  const auto cfg = overfit_config();

  auto net = wrin::build_network(wrin::builtin_config("wr-inception"), 5).graph;
  double fit = 0;
  wrin::TrainHooks<float> hooks;
  hooks.on_epoch = [&](const wrin::EpochRecord& r, wrin::Network<float>& n) {
    if (r.accuracy < 0.99) return true;
    fit = wrin::evaluate_classifier(n, data, 64).accuracy;
    return fit < 0.99;
  };
  const auto log = wrin::train_epochs(net, data, cfg, hooks);
  const double train_secs = seconds_since(t0);

  // Same seed, fresh network: the first epochs must repeat bit for bit.
  auto again = wrin::build_network(wrin::builtin_config("wr-inception"), 5).graph;
  auto short_cfg = cfg;
  short_cfg.epochs = std::min<std::size_t>(2, log.epochs.size());
  const auto replay = wrin::train_epochs(again, data, short_cfg);
  bool same = true;
  for (std::size_t e = 0; e < replay.epochs.size(); ++e) {
    same = same && replay.epochs[e].loss == log.epochs[e].loss && replay.epochs[e].accuracy == log.epochs[e].accuracy;
  }
  const double secs = seconds_since(t0);
  return {fit >= 0.99 && log.epochs.size() <= 200 && same && secs <= 1800,
          fmt("train-set accuracy %.4f after %zu epochs (%.0fs), replay %s, total %.0fs", fit, log.epochs.size(),
              train_secs, same ? "identical" : "differs", secs)};
}

wrin::Box random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
  if (a > b) std::swap(a, b);
  if (c > d) std::swap(c, d);
  return {a, c, b + 1e-3, d + 1e-3};
}

Outcome detection_mechanics() {
  std::mt19937_64 rng(99);
  std::size_t nms_ok = 0, match_ok = 0;
  for (int t = 0; t < 500; ++t) {
    std::vector<wrin::Detection> d(1 + rng() % 20);
    for (auto& x : d) {
      x.score = static_cast<double>(rng() % 8) / 8.0;
      x.box = random_box(rng);
    }
    nms_ok += wrin::nms_indices(d, 0.45) == oracle::nms(d, 0.45);
  }
  for (int t = 0; t < 500; ++t) {
    std::vector<wrin::Box> priors(1 + rng() % 50), gts(rng() % 11);
    for (auto& p : priors) p = random_box(rng);
    for (std::size_t g = 0; g < gts.size(); ++g) gts[g] = g > 0 && rng() % 5 == 0 ? gts[rng() % g] : random_box(rng);
    match_ok += wrin::match_priors(priors, gts, 0.5) == oracle::match(priors, gts, 0.5);
  }
  double worst = 0;
  for (int t = 0; t < 10000; ++t) {
    const auto gt = random_box(rng), prior = random_box(rng);
    const auto back = wrin::decode_box(wrin::encode_box(gt, prior), prior);
    worst = std::max({worst, std::abs(back.xmin - gt.xmin), std::abs(back.ymin - gt.ymin),
                      std::abs(back.xmax - gt.xmax), std::abs(back.ymax - gt.ymax)});
  }
  const wrin::Box g1{0.1, 0.1, 0.3, 0.3}, g2{0.5, 0.5, 0.7, 0.9};
  const std::vector<wrin::GroundTruth> gts = {{"a", 0, g1, true, false}, {"b", 0, g2, true, false}};
  const double ap = wrin::evaluate_detections({{0, 0.9, g1, "a"}, {0, 0.8, {0.6, 0.1, 0.9, 0.2}, "a"}, {0, 0.7, g2, "b"}},
                                              gts, 1)
                        .map;
  const auto self = wrin::evaluate_detections({{0, 0.5, g1, "a"}, {0, 0.5, g2, "b"}}, gts, 1);
  const bool pass = nms_ok == 500 && match_ok == 500 && worst < 1e-9 && std::abs(ap - 28.0 / 33.0) < 1e-12 &&
                    self.map == 1.0 && self.mar == 1.0;
  return {pass, fmt("nms %zu/500, match %zu/500, decode(encode) err %.2e, AP %.6f (28/33=%.6f), self AP/AR %.1f/%.1f",
                    nms_ok, match_ok, worst, ap, 28.0 / 33.0, self.map, self.mar)};
}

Outcome formats() {
  std::mt19937_64 rng(4);
  bool cifar = true;
  for (auto v : {wrin::CifarVariant::cifar10, wrin::CifarVariant::cifar100}) {
    std::vector<std::uint8_t> bytes(5 * wrin::cifar_record_size(v));
    for (std::size_t r = 0; r < 5; ++r) {
      const std::size_t base = r * wrin::cifar_record_size(v);
      for (std::size_t i = 0; i < wrin::cifar_record_size(v); ++i) bytes[base + i] = static_cast<std::uint8_t>(rng());
      bytes[base] = static_cast<std::uint8_t>(rng() % (v == wrin::CifarVariant::cifar10 ? 10 : 20));
      if (v == wrin::CifarVariant::cifar100) bytes[base + 1] = static_cast<std::uint8_t>(rng() % 100);
    }
    cifar = cifar && wrin::encode_cifar(wrin::decode_cifar(bytes, v), v) == bytes;
  }

  const std::vector<std::string> types = {"Car", "Pedestrian", "Cyclist", "Van", "DontCare"};
  std::normal_distribution<double> d(0, 100);
  std::size_t kitti_ok = 0;
  for (int t = 0; t < 200; ++t) {
    std::vector<wrin::KittiObject> objs(rng() % 6);
    for (auto& o : objs) {
      o.type = types[rng() % types.size()];
      o.truncated = std::round(d(rng)) / 100.0;
      o.occluded = static_cast<int>(rng() % 4) - 1;
      for (double* f : {&o.alpha, &o.left, &o.top, &o.right, &o.bottom, &o.height3d, &o.width3d, &o.length3d, &o.x,
                        &o.y, &o.z, &o.rotation_y}) {
        *f = d(rng);
      }
      if (rng() % 2) o.score = d(rng);
    }
    const auto text = wrin::serialize_kitti(objs);
    kitti_ok += wrin::parse_kitti_labels(text) == objs && wrin::serialize_kitti(wrin::parse_kitti_labels(text)) == text;
  }

  const auto cfg = wrin::builtin_config("wr-inception");
  auto trained = wrin::build_network(cfg, 5);
  auto data = wrin::synthetic_cifar(8, 10, 3);
  std::vector<int> labels;
  std::vector<std::size_t> idx(8);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto x = wrin::make_batch<float>(data, idx, {}, labels);
  wrin::execute(trained.graph, x, wrin::Mode::train, std::span<const int>(labels));
  const auto path = std::filesystem::temp_directory_path() / "wrin_acceptance_checkpoint.bin";
  wrin::save_checkpoint(trained.graph, path.string());
  auto restored = wrin::build_network(cfg, 6);
  wrin::load_checkpoint(restored.graph, path.string());
  std::filesystem::remove(path);
  const bool ckpt = trained.graph.infer(x) == restored.graph.infer(x);

  return {cifar && kitti_ok == 200 && ckpt, fmt("cifar byte-exact %s, kitti %zu/200 identical, checkpoint %s",
                                                cifar ? "yes" : "no", kitti_ok, ckpt ? "bit-identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"parameter-counts", parameter_counts}, {"unit-cost", unit_cost},
      {"gradient-suite", gradient_suite},     {"receptive-fields", receptive_fields},
      {"training-sanity", training_sanity},   {"detection-mechanics", detection_mechanics},
      {"formats", formats}};
  const std::string only = argc > 1 ? argv[1] : "";
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && only != name) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %-20s %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
