// wrin: command-line front end for the wide-residual-inception kit.
//
// Exit codes: 0 success, 1 check failure, 2 usage or input error, 3 numeric failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "wrin/wrin.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

std::optional<wrin::Shape3> parse_shape(const std::string& text) {
  if (text.empty()) return std::nullopt;
  std::vector<std::size_t> dims;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    std::size_t used = 0;
    const unsigned long v = std::stoul(part, &used);
    if (used != part.size() || v == 0) throw std::invalid_argument("bad --input-shape '" + text + "'");
    dims.push_back(v);
  }
  if (dims.size() != 3) throw std::invalid_argument("--input-shape expects C,H,W");
  return wrin::Shape3{dims[0], dims[1], dims[2]};
}

std::string default_data_dir() {
  const char* env = std::getenv("WRIN_DATA_DIR");
  return env ? env : "data";
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return json::parse(in);
}

// -- analyze ---------------------------------------------------------------------

struct AnalyzeArgs {
  std::string net;
  std::string input_shape;
  std::size_t num_classes = 10;
  bool json = false;
};

int run_analyze(const AnalyzeArgs& a) {
  const auto cfg = wrin::resolve_network_config(a.net, a.num_classes, parse_shape(a.input_shape));
  const auto report = wrin::analyze_config(cfg);
  if (a.json) {
    std::cout << wrin::report_json(report).dump(2) << "\n";
  } else {
    std::cout << wrin::report_text(report);
  }
  return kExitOk;
}

// -- gradcheck -------------------------------------------------------------------

struct GradcheckArgs {
  std::uint64_t seed = 1;
  std::size_t seeds = 1;
  int precision = 64;
  bool inject_fault = false;
  bool json = false;
};

int run_gradcheck(const GradcheckArgs& a) {
  if (a.precision != 64) throw std::invalid_argument("gradcheck supports --precision 64 only");
  wrin::GradcheckOptions opt;
  opt.inject_fault = a.inject_fault;
  bool ok = true;
  json runs = json::array();
  for (std::size_t k = 0; k < a.seeds; ++k) {
    opt.seed = a.seed + k;
    const auto report = wrin::run_gradcheck(opt);
    ok = ok && report.passed();
    if (a.json) {
      runs.push_back(wrin::to_json(report, opt));
    } else {
      std::cout << "seed " << opt.seed << "\n" << wrin::to_text(report, opt);
    }
  }
  if (a.json) std::cout << json{{"runs", runs}, {"passed", ok}}.dump(2) << "\n";
  return ok ? kExitOk : kExitCheckFailed;
}

// -- train / eval ------------------------------------------------------------------

struct DataArgs {
  std::string net = "wr-inception";
  std::string dataset = "cifar10";
  std::string data_dir;
  std::size_t subset = 0;
  std::size_t synthetic = 0;  // > 0: generate this many CIFAR-format images instead of reading
  std::uint64_t data_seed = 7;
};

std::vector<wrin::LabeledImage> load_split(const DataArgs& a, bool train) {
  const auto variant = wrin::parse_cifar_variant(a.dataset);
  std::vector<wrin::LabeledImage> data;
  if (a.synthetic > 0) {
    // The test split shares the class templates with the training split.
    data = wrin::synthetic_cifar(a.synthetic * (train ? 1 : 2), wrin::cifar_classes(variant), a.data_seed);
    if (!train) data.erase(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(a.synthetic));
  } else {
    const std::string dir = a.data_dir.empty() ? default_data_dir() : a.data_dir;
    data = wrin::read_cifar(wrin::cifar_split_files(dir, variant, train), variant);
  }
  if (a.subset > 0 && a.subset < data.size()) data.resize(a.subset);
  if (data.empty()) throw std::runtime_error("dataset is empty");
  return data;
}

struct TrainArgs {
  DataArgs data;
  std::string config;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  std::optional<double> target_accuracy;
  bool no_augment = false;
  std::string out = "run";
  std::string resume;
  bool json = false;
};

int run_train(const TrainArgs& a) {
  wrin::TrainConfig cfg = wrin::TrainConfig::classification();
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.lr) cfg.lr_initial = *a.lr;
  if (a.seed) cfg.seed = *a.seed;
  if (a.no_augment) cfg.augment = false;
  if (!a.config.empty()) wrin::merge_train_config(read_json_file(a.config), cfg);
  cfg.validate();

  auto data = load_split(a.data, true);
  const auto stats = wrin::compute_channel_stats(data);
  wrin::normalize(data, stats);

  const auto variant = wrin::parse_cifar_variant(a.data.dataset);
  const auto net_cfg = wrin::resolve_network_config(a.data.net, wrin::cifar_classes(variant));
  auto built = wrin::build_network<float>(net_cfg, cfg.seed);
  if (!a.resume.empty()) wrin::load_checkpoint(built.graph, a.resume);

  fs::create_directories(a.out);
  cfg.checkpoint_path = (fs::path(a.out) / "checkpoint.bin").string();
  {
    std::ofstream meta(fs::path(a.out) / "run.json");
    meta << json{{"net", net_cfg}, {"train", cfg}, {"normalization", stats}, {"dataset", a.data.dataset}}.dump(2) << "\n";
  }
  std::ofstream log(fs::path(a.out) / "log.csv");
  log << wrin::TrainLog::kCsvHeader << "\n";
  wrin::TrainHooks<float> hooks;
  hooks.on_epoch = [&](const wrin::EpochRecord& r, wrin::Network<float>&) {
    log << wrin::TrainLog::csv_line(r) << "\n" << std::flush;
    if (!a.json) std::cout << wrin::TrainLog::csv_line(r) << "\n" << std::flush;
    return !(a.target_accuracy && r.accuracy >= *a.target_accuracy);
  };
  if (!a.json) std::cout << wrin::TrainLog::kCsvHeader << "\n";
  const auto result = wrin::train_epochs(built.graph, data, cfg, hooks);
  if (cfg.epochs == 0) wrin::save_checkpoint(built.graph, cfg.checkpoint_path);
  if (a.json) {
    json epochs = json::array();
    for (const auto& r : result.epochs) {
      epochs.push_back({{"epoch", r.epoch}, {"step", r.step}, {"lr", r.lr}, {"loss", r.loss}, {"acc", r.accuracy}});
    }
    std::cout << json{{"epochs", epochs}, {"checkpoint", cfg.checkpoint_path}}.dump(2) << "\n";
  }
  return kExitOk;
}

struct EvalArgs {
  DataArgs data;
  std::string checkpoint;
  std::string stats;
  std::uint64_t seed = 1;
  bool json = false;
};

int run_eval(const EvalArgs& a) {
  auto data = load_split(a.data, false);
  wrin::ChannelStats stats;
  std::string stats_path = a.stats;
  if (stats_path.empty() && !a.checkpoint.empty()) {
    const fs::path sibling = fs::path(a.checkpoint).parent_path() / "run.json";
    if (fs::exists(sibling)) stats_path = sibling.string();
  }
  if (!stats_path.empty()) {
    const json j = read_json_file(stats_path);
    stats = j.contains("normalization") ? j.at("normalization").get<wrin::ChannelStats>() : j.get<wrin::ChannelStats>();
  } else {
    stats = wrin::compute_channel_stats(data);
  }
  wrin::normalize(data, stats);
  const auto variant = wrin::parse_cifar_variant(a.data.dataset);
  const auto net_cfg = wrin::resolve_network_config(a.data.net, wrin::cifar_classes(variant));
  auto built = wrin::build_network<float>(net_cfg, a.seed);
  if (!a.checkpoint.empty()) wrin::load_checkpoint(built.graph, a.checkpoint);
  const auto s = wrin::evaluate_classifier(built.graph, data);
  if (a.json) {
    std::cout << json{{"samples", s.samples}, {"loss", s.loss}, {"accuracy", s.accuracy}, {"top1_error", s.error()}}.dump(2)
              << "\n";
  } else {
    std::printf("samples %zu\nloss %.6f\naccuracy %.4f\ntop-1 error %.2f %%\n", s.samples, s.loss, s.accuracy,
                100.0 * s.error());
  }
  return kExitOk;
}

// -- detect-eval -------------------------------------------------------------------

struct DetectEvalArgs {
  std::string gt_dir;
  std::string det_dir;
  double iou = 0.5;
  std::string difficulty;
  std::string ap = "11-point";
  bool json = false;
};

int run_detect_eval(const DetectEvalArgs& a) {
  const auto gt = wrin::read_kitti_dir(a.gt_dir);
  const auto det = wrin::read_kitti_dir(a.det_dir);
  const auto orphans = wrin::kitti_orphans(gt, det);
  if (!orphans.empty()) {
    std::cerr << "error: detection files without groundtruth:";
    for (const auto& id : orphans) std::cerr << ' ' << id;
    std::cerr << "\n";
    return kExitUsage;
  }
  std::vector<std::optional<wrin::Difficulty>> levels;
  if (a.difficulty.empty()) {
    levels = {wrin::Difficulty::easy, wrin::Difficulty::moderate, wrin::Difficulty::hard};
  } else if (a.difficulty == "easy") {
    levels = {wrin::Difficulty::easy};
  } else if (a.difficulty == "moderate") {
    levels = {wrin::Difficulty::moderate};
  } else if (a.difficulty == "hard") {
    levels = {wrin::Difficulty::hard};
  } else {
    levels = {std::nullopt};
  }
  const auto method = a.ap == "all-point" ? wrin::ApMethod::all_point : wrin::ApMethod::eleven_point;
  const auto report = wrin::kitti_report(gt, det, levels, a.iou, method);
  if (a.json) {
    std::cout << wrin::report_json(report).dump(2) << "\n";
  } else {
    std::cout << wrin::report_text(report);
  }
  return kExitOk;
}

template <typename F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const wrin::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

void add_data_options(CLI::App* cmd, DataArgs& d) {
  cmd->add_option("--net", d.net, "built-in network name or JSON config file");
  cmd->add_option("--dataset", d.dataset, "cifar10 or cifar100")->check(CLI::IsMember({"cifar10", "cifar100"}));
  cmd->add_option("--data-dir", d.data_dir, "directory holding the binary batches (default: $WRIN_DATA_DIR)");
  cmd->add_option("--subset", d.subset, "use only the first N images");
  cmd->add_option("--synthetic", d.synthetic, "generate N synthetic CIFAR-format images instead of reading files");
  cmd->add_option("--data-seed", d.data_seed, "seed for synthetic data");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wrin: wide residual inception networks"};
  app.require_subcommand(1);

  AnalyzeArgs analyze;
  auto* c_analyze = app.add_subcommand("analyze", "parameter, MAC and receptive-field report");
  c_analyze->add_option("--net", analyze.net, "built-in network name or JSON config file")->required();
  c_analyze->add_option("--input-shape", analyze.input_shape, "C,H,W (default 3,32,32)");
  c_analyze->add_option("--num-classes", analyze.num_classes, "classifier outputs");
  c_analyze->add_flag("--json", analyze.json, "machine-readable output");

  GradcheckArgs grad;
  auto* c_grad = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  c_grad->add_option("--seed", grad.seed, "first seed");
  c_grad->add_option("--seeds", grad.seeds, "number of consecutive seeds")->check(CLI::PositiveNumber);
  c_grad->add_option("--precision", grad.precision, "floating-point bits (64)");
  c_grad->add_flag("--inject-fault", grad.inject_fault, "corrupt analytic gradients (negative control)");
  c_grad->add_flag("--json", grad.json, "machine-readable output");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "train a classifier");
  add_data_options(c_train, train.data);
  c_train->add_option("--config", train.config, "JSON training config (overrides flags)");
  c_train->add_option("--epochs", train.epochs, "epochs");
  c_train->add_option("--batch-size", train.batch_size, "mini-batch size");
  c_train->add_option("--lr", train.lr, "initial learning rate");
  c_train->add_option("--seed", train.seed, "initialization and shuffling seed");
  c_train->add_option("--target-accuracy", train.target_accuracy, "stop once train accuracy reaches this fraction");
  c_train->add_flag("--no-augment", train.no_augment, "disable crop and flip augmentation");
  c_train->add_option("--out", train.out, "output directory for log.csv, run.json and checkpoint.bin");
  c_train->add_option("--resume", train.resume, "checkpoint to start from");
  c_train->add_flag("--json", train.json, "machine-readable output");

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "top-1 error on the test split");
  add_data_options(c_eval, eval.data);
  c_eval->add_option("--checkpoint", eval.checkpoint, "weights to evaluate (default: fresh initialization)");
  c_eval->add_option("--stats", eval.stats, "normalization statistics (default: run.json beside the checkpoint)");
  c_eval->add_option("--seed", eval.seed, "initialization seed when no checkpoint is given");
  c_eval->add_flag("--json", eval.json, "machine-readable output");

  DetectEvalArgs det;
  auto* c_det = app.add_subcommand("detect-eval", "KITTI-format AP/AR evaluation");
  c_det->add_option("--gt-dir", det.gt_dir, "groundtruth label directory")->required();
  c_det->add_option("--det-dir", det.det_dir, "detection directory")->required();
  c_det->add_option("--iou", det.iou, "IoU threshold")->check(CLI::Range(0.0, 1.0));
  c_det->add_option("--difficulty", det.difficulty, "easy, moderate, hard or all (default: one row per level)")
      ->check(CLI::IsMember({"easy", "moderate", "hard", "all"}));
  c_det->add_option("--ap", det.ap, "11-point or all-point")->check(CLI::IsMember({"11-point", "all-point"}));
  c_det->add_flag("--json", det.json, "machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (*c_analyze) return guarded([&] { return run_analyze(analyze); });
  if (*c_grad) return guarded([&] { return run_gradcheck(grad); });
  if (*c_train) return guarded([&] { return run_train(train); });
  if (*c_eval) return guarded([&] { return run_eval(eval); });
  if (*c_det) return guarded([&] { return run_detect_eval(det); });
  return kExitUsage;
}
