// freqshield: end-to-end reproduction driver.
//
//   freqshield prepare  --config cfg.json
//   freqshield train    --config cfg.json [targets|detectors|reformer|all]
//   freqshield attack   --config cfg.json
//   freqshield evaluate --config cfg.json
//   freqshield all      --config cfg.json [--seed N] [--out DIR] [--t-fp X]
//
// Exit codes: 0 success, 1 configuration error, 2 stage failure.

#include <iostream>

#include <CLI11.hpp>

#include "freqshield/error.hpp"
#include "freqshield/experiment.hpp"

namespace {

constexpr int kConfigError = 1;
constexpr int kStageError = 2;

void print_auc(const freqshield::EvaluationSummary& s) {
  if (s.auc.empty()) return;
  std::cout << "detector ROC-AUC (clean vs adversarial, " << s.auc.size() << " rows)\n";
  for (const auto& r : s.auc) {
    if (r.target == "all") std::cout << "  " << r.detector << "  " << r.attack << "  " << r.auc << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frequency-domain adversarial detection and reformation for image segmentation"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<double> t_fp;
  bool quiet = false;
  app.add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "master seed; overrides the config");
  app.add_option("--out", out_dir, "output directory; overrides the config");
  app.add_option("--t-fp", t_fp, "detector false-positive budget on validation data");
  app.add_flag("-q,--quiet", quiet, "only print errors and final summaries");

  auto* prepare = app.add_subcommand("prepare", "generate or load the dataset and write train/val/test manifests");
  auto* train = app.add_subcommand("train", "train target segmenters, detectors and/or reformers");
  std::string which = "all";
  train->add_option("which", which, "targets | detectors | reformers | all");
  auto* attack = app.add_subcommand("attack", "craft adversarial sets against every target");
  auto* evaluate = app.add_subcommand("evaluate", "detector ROC-AUC table and the combination grid");
  auto* all = app.add_subcommand("all", "run every stage in order");
  for (auto* sub : {prepare, train, attack, evaluate, all}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  freqshield::ExperimentConfig cfg;
  try {
    cfg = freqshield::load_config(config_path);
    if (seed) freqshield::apply_seed(cfg, *seed);
    if (out_dir) cfg.output_dir = *out_dir;
    if (t_fp) cfg.t_fp = *t_fp;
    freqshield::validate_config(cfg);
  } catch (const freqshield::Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }

  freqshield::configure_threads();
  if (!quiet) freqshield::set_log_stream(&std::clog);

  try {
    if (prepare->parsed()) {
      freqshield::cmd_prepare(cfg);
    } else if (train->parsed()) {
      freqshield::cmd_train(cfg, freqshield::train_which_from_string(which));
    } else if (attack->parsed()) {
      freqshield::cmd_attack(cfg);
    } else if (evaluate->parsed()) {
      print_auc(freqshield::cmd_evaluate(cfg));
    } else if (all->parsed()) {
      print_auc(freqshield::cmd_all(cfg));
    }
  } catch (const freqshield::ConfigurationError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const freqshield::TrainingError& e) {
    std::cerr << "stage failed: " << e.what() << " (epoch " << e.epoch() << ")\n";
    return kStageError;
  } catch (const std::exception& e) {
    std::cerr << "stage failed: " << e.what() << '\n';
    return kStageError;
  }
  return 0;
}
