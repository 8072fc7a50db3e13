// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fail.
//
//   freqshield_acceptance --config configs/acceptance.json --work <dir> [--reuse]
//
// Criteria 1-6 are self-contained oracle checks. 7-11 run the whole pipeline
// into <dir>/run1 and again into <dir>/run2; both are wiped first unless
// --reuse is given.

#include <chrono>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "freqshield/error.hpp"
#include "freqshield/experiment.hpp"
#include "freqshield/metrics.hpp"
#include "oracles.hpp"
#include "stubs.hpp"

using namespace freqshield;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& check, double time_limit_s = 0.0) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (time_limit_s > 0.0 && secs > time_limit_s) {
    o.pass = false;
    o.detail += "; over the " + std::to_string(time_limit_s) + " s limit";
  }
  if (!o.pass) ++g_failures;
  std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << id << ". " << title << ": " << o.detail << " (" << std::fixed
            << std::setprecision(1) << secs << " s)" << std::defaultfloat << std::endl;
}

std::string num(double v) {
  std::ostringstream o;
  o << std::setprecision(4) << v;
  return o.str();
}

Image random_image(int h, int w, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(h, w);
  for (double& v : img.values()) v = u(rng);
  return img;
}

// ---------------------------------------------------------------- 1-6

Outcome dft_correctness() {
  std::mt19937 rng(1);
  double coeff_err = 0.0;
  for (int t = 0; t < 10; ++t) {
    const Image img = random_image(8, 8, rng);
    const Spectrum s = dft2(img);
    for (int v = 0; v < 8; ++v)
      for (int u = 0; u < 8; ++u) coeff_err = std::max(coeff_err, std::abs(s.coefficients(v, u) - oracle::dft_coefficient(img, u, v)));
  }
  double round_err = 0.0, parseval_err = 0.0;
  for (int t = 0; t < 3; ++t) {
    const Image img = random_image(64, 64, rng);
    const Spectrum s = dft2(img);
    const Image back = idft2(s);
    double energy = 0.0, spectral = 0.0;
    for (std::size_t i = 0; i < img.size(); ++i) {
      round_err = std::max(round_err, std::abs(back.values()[i] - img.values()[i]));
      energy += img.values()[i] * img.values()[i];
      spectral += std::norm(s.coefficients.values()[i]);
    }
    // With the 1/(WH) forward prefactor: sum |f|^2 = WH * sum |F|^2.
    parseval_err = std::max(parseval_err, std::abs(energy - 64.0 * 64.0 * spectral) / energy);
  }
  return {coeff_err <= 1e-9 && round_err <= 1e-6 && parseval_err <= 1e-6,
          "max coefficient error " + num(coeff_err) + ", round trip " + num(round_err) + ", Parseval " + num(parseval_err)};
}

Outcome shift_correctness() {
  std::mt19937 rng(2);
  bool inverse = true;
  for (auto [h, w] : {std::pair{8, 8}, {7, 9}, {6, 5}, {1, 4}, {9, 9}}) {
    const Spectrum s = dft2(random_image(h, w, rng));
    inverse = inverse && unshift(shift(s)).coefficients == s.coefficients;
  }
  bool centered = true;
  for (auto [h, w] : {std::pair{8, 8}, {7, 9}, {5, 6}}) {
    const Spectrum s = shift(dft2(Image(h, w, 0.5)));
    for (int v = 0; v < h; ++v)
      for (int u = 0; u < w; ++u) {
        const double mag = std::abs(s.coefficients(v, u));
        centered = centered && ((v == h / 2 && u == w / 2) ? std::abs(mag - 0.5) < 1e-12 : mag < 1e-12);
      }
  }
  return {inverse && centered, std::string("exact inverse ") + (inverse ? "yes" : "no") + ", DC centered " +
                                   (centered ? "yes" : "no")};
}

Outcome loss_and_gradient() {
  auto labels = torch::zeros({4, 4}, torch::kLong);
  labels.index_put_({torch::indexing::Slice(), torch::indexing::Slice(2)}, 1);
  const double L = segmentation_loss(torch::full({2, 4, 4}, 0.5, torch::kDouble), labels,
                                     torch::ones({2}, torch::kDouble)).item<double>();
  const double closed = std::log(2.0) - 4.0 / 3.0;
  const double loss_err = std::abs(L - closed);

  torch::manual_seed(3);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto lab = torch::randint(0, 3, {4, 4}, torch::kLong);
    const auto w = torch::rand({3}, torch::kDouble) + 0.5;
    auto p = (torch::rand({3, 4, 4}, torch::kDouble) * 0.9 + 0.05).requires_grad_(true);
    segmentation_loss(p, lab, w).backward();
    auto g = p.grad().view({-1});
    auto base = p.detach().clone();
    auto flat = base.view({-1});
    for (int64_t i = 0; i < flat.size(0); ++i) {
      const double orig = flat[i].item<double>();
      flat[i] = orig + 1e-4;
      const double up = segmentation_loss(base, lab, w).item<double>();
      flat[i] = orig - 1e-4;
      const double down = segmentation_loss(base, lab, w).item<double>();
      flat[i] = orig;
      const double fd = (up - down) / 2e-4;
      worst = std::max(worst, std::abs(g[i].item<double>() - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  return {loss_err <= 1e-6 && worst <= 1e-3, "loss error " + num(loss_err) + ", worst relative gradient error " + num(worst)};
}

Outcome calibration_oracle() {
  std::mt19937 rng(4);
  int mismatches = 0, violations = 0, runs = 0;
  for (double t_fp : {0.01, 0.05, 0.1}) {
    for (int set = 0; set < 200; ++set) {
      const int n = 1 + static_cast<int>(rng() % 120);
      // Zero-reconstructor stub: a constant 2x2 image of value c scores exactly 2c.
      Dataset val{"stub", 2, {}};
      std::vector<double> scores;
      for (int i = 0; i < n; ++i) {
        const double c = static_cast<double>(rng() % 50) / 64.0;  // ties are common
        val.samples.push_back({"s" + std::to_string(i), Image(2, 2, c), LabelMap(2, 2, 0)});
        scores.push_back(2.0 * c);
      }
      DetectorBundle bundle(test::zero_reconstructor());
      const auto r = calibrate_threshold(bundle, val, t_fp);
      mismatches += r.threshold_t_re != oracle::smallest_threshold(scores, t_fp);
      violations += r.achieved_fpr > t_fp;
      ++runs;
    }
  }
  return {mismatches == 0 && violations == 0, std::to_string(runs) + " score sets, " + std::to_string(mismatches) +
                                                   " oracle mismatches, " + std::to_string(violations) + " FPR violations"};
}

Outcome auc_oracle() {
  std::mt19937 rng(5);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int n = 2 + static_cast<int>(rng() % 49);
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<bool> f(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      s[static_cast<std::size_t>(i)] = static_cast<double>(rng() % 15) / 15.0;
      f[static_cast<std::size_t>(i)] = rng() % 2;
    }
    f[0] = true;
    f[1] = false;
    worst = std::max(worst, std::abs(roc_auc(s, f) - oracle::auc_pairs(s, f)));
  }
  return {worst <= 1e-12, "worst error " + num(worst) + " over 100 instances"};
}

Outcome dice_oracle() {
  std::mt19937 rng(6);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int C = 2 + t % 5;
    LabelMap a(8, 8), b(8, 8);
    for (int& v : a.values()) v = static_cast<int>(rng() % C);
    for (int& v : b.values()) v = static_cast<int>(rng() % C);
    worst = std::max(worst, std::abs(dice_score(a, b, C) - oracle::dice(a, b, C)));
  }
  LabelMap m(8, 8);
  for (int& v : m.values()) v = static_cast<int>(rng() % 4);
  const double identity = dice_score(m, m, 4);
  const double disjoint = dice_score(LabelMap(8, 8, 1), LabelMap(8, 8, 2), 3);
  return {worst <= 1e-12 && identity == 1.0 && disjoint == 0.0,
          "worst error " + num(worst) + ", identity " + num(identity) + ", disjoint " + num(disjoint)};
}

// ---------------------------------------------------------------- 7-11

const ModelEntry* find_model(const std::vector<ModelEntry>& ms, Family f, RepresentationMode mode) {
  for (const auto& m : ms) {
    if (m.arch.family == f && m.mode == mode) return &m;
  }
  return nullptr;
}

struct Run {
  ExperimentConfig cfg;
  EvaluationSummary summary;
};

double pooled_auc(const EvaluationSummary& s, const std::string& detector) {
  for (const auto& r : s.auc) {
    if (r.detector == detector && r.target == "all") return r.auc;
  }
  throw MissingArtifactError("no pooled AUC row for detector '" + detector + "'");
}

Outcome attack_effectiveness(const Run& run) {
  const ModelEntry* unet = find_model(run.cfg.targets, Family::UNet, RepresentationMode::Spatial);
  if (!unet) return {false, "config has no UNet target"};
  const SegmenterModel model = load_target(run.cfg, unet->name);
  const AttackSet set = load_attack(run.cfg, run.cfg.attacks.front());
  double clean = 0.0, adv = 0.0;
  int n = 0, over_budget = 0;
  for (const auto& s : set.samples) {
    over_budget += !within_budget(s);
    if (s.source_model_id != unet->name) continue;
    clean += dice_score(model.predict(s.clean.image), s.clean.label, set.num_classes);
    adv += dice_score(model.predict(s.adversarial_image), s.clean.label, set.num_classes);
    ++n;
  }
  clean /= n;
  adv /= n;
  return {n > 0 && adv <= 0.6 * clean && over_budget == 0,
          "clean Dice " + num(clean) + ", adversarial Dice " + num(adv) + " (ratio " + num(adv / clean) + ", bound 0.6), " +
              std::to_string(over_budget) + " budget violations over " + std::to_string(set.samples.size()) + " samples"};
}

Outcome spectral_signature(const Run& run) {
  const AttackSet set = load_attack(run.cfg, run.cfg.attacks.front());
  int higher = 0;
  for (const auto& s : set.samples) {
    higher += high_frequency_log_magnitude(s.adversarial_image) > high_frequency_log_magnitude(s.clean.image);
  }
  const double frac = static_cast<double>(higher) / static_cast<double>(set.samples.size());
  return {frac >= 0.8, std::to_string(higher) + "/" + std::to_string(set.samples.size()) + " pairs (" + num(frac) +
                           ", bound 0.8)"};
}

Outcome table1_ordering(const Run& run) {
  const auto* shift = find_model(run.cfg.detectors, Family::UNet, RepresentationMode::ShiftFrequency);
  const auto* freq = find_model(run.cfg.detectors, Family::UNet, RepresentationMode::Frequency);
  const auto* ae = find_model(run.cfg.detectors, Family::AutoencoderI, RepresentationMode::Spatial);
  if (!shift || !freq || !ae) return {false, "config lacks the UNet shiftFrequency / frequency / AutoencoderI detectors"};
  const double a = pooled_auc(run.summary, shift->name), b = pooled_auc(run.summary, freq->name),
               c = pooled_auc(run.summary, ae->name);
  return {a > b && a > c && a >= 0.85,
          "AUC shiftFrequency " + num(a) + ", frequency " + num(b) + ", AutoencoderI " + num(c)};
}

Outcome fig4_trend(const Run& run) {
  const auto* det = find_model(run.cfg.detectors, Family::UNet, RepresentationMode::ShiftFrequency);
  const auto* ref = find_model(run.cfg.reformers, Family::UNet, RepresentationMode::Spatial);
  const auto* seg = find_model(run.cfg.targets, Family::UNet, RepresentationMode::Spatial);
  if (!det || !ref || !seg) return {false, "config lacks the UNet detector/reformer/target"};
  std::optional<double> adv, clean, pass, base_adv, base_clean;
  for (const auto& r : run.summary.grid) {
    const auto& c = r.config;
    if (c.segmenter != seg->name) continue;
    const bool adversarial = c.dataset.find('/') != std::string::npos;
    if (c.combination == 0) {
      if (r.metric == Metric::Dice) (adversarial ? base_adv : base_clean) = r.value;
    } else if (c.detector == det->name && c.reformer == ref->name) {
      if (r.metric == Metric::Dice) (adversarial ? adv : clean) = r.value;
      if (r.metric == Metric::PassRate && !adversarial) pass = r.value;
    }
  }
  if (!base_adv || !base_clean || !pass) return {false, "grid rows for the assembly are missing"};
  if (!adv) return {false, "no adversarial input passed the detector, so defended Dice is undefined"};
  const bool ok = *adv > *base_adv && clean && std::abs(*clean - *base_clean) <= 0.05 && *pass >= 0.90;
  return {ok, "adversarial Dice " + num(*adv) + " vs undefended " + num(*base_adv) + ", clean Dice " +
                  (clean ? num(*clean) : "n/a") + " vs " + num(*base_clean) + ", clean pass rate " + num(*pass)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(const Run& a, const Run& b) {
  int files = 0, differing = 0;
  std::string first_diff;
  for (const char* stage : {"data", "attacks"}) {
    for (const auto& e : fs::recursive_directory_iterator(a.cfg.output_dir / stage)) {
      if (!e.is_regular_file()) continue;
      const fs::path rel = fs::relative(e.path(), a.cfg.output_dir);
      ++files;
      if (slurp(e.path()) != slurp(b.cfg.output_dir / rel)) {
        if (first_diff.empty()) first_diff = rel.string();
        ++differing;
      }
    }
  }
  double worst = 0.0;
  bool aligned = a.summary.auc.size() == b.summary.auc.size() && a.summary.grid.size() == b.summary.grid.size();
  for (std::size_t i = 0; aligned && i < a.summary.auc.size(); ++i) {
    worst = std::max(worst, std::abs(a.summary.auc[i].auc - b.summary.auc[i].auc));
  }
  for (std::size_t i = 0; aligned && i < a.summary.grid.size(); ++i) {
    aligned = a.summary.grid[i].metric == b.summary.grid[i].metric &&
              a.summary.grid[i].config.assembly_id == b.summary.grid[i].config.assembly_id;
    worst = std::max(worst, std::abs(a.summary.grid[i].value - b.summary.grid[i].value));
  }
  std::string detail = std::to_string(files) + " prepare/attack files, " + std::to_string(differing) + " differ";
  if (!first_diff.empty()) detail += " (first: " + first_diff + ")";
  detail += aligned ? ", worst metric difference " + num(worst) : ", metric tables do not line up";
  return {files > 0 && differing == 0 && aligned && worst <= 0.02, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"freqshield acceptance gate"};
  std::string config_path, work = "acceptance_runs";
  bool reuse = false, verbose = false;
  app.add_option("--config", config_path, "experiment config")->required()->check(CLI::ExistingFile);
  app.add_option("--work", work, "scratch directory for the two pipeline runs");
  app.add_flag("--reuse", reuse, "keep artifacts from a previous invocation");
  app.add_flag("-v,--verbose", verbose, "stream stage progress");
  CLI11_PARSE(app, argc, argv);

  configure_threads();
  std::cout << "freqshield acceptance\n";
  report(1, "DFT correctness", dft_correctness, 5.0);
  report(2, "Shift correctness", shift_correctness, 1.0);
  report(3, "Loss and gradient checks", loss_and_gradient, 10.0);
  report(4, "Threshold calibration oracle", calibration_oracle, 5.0);
  report(5, "ROC-AUC oracle", auc_oracle, 5.0);
  report(6, "Dice oracle", dice_oracle, 5.0);

  if (verbose) set_log_stream(&std::clog);
  Run runs[2];
  std::string pipeline_error;
  double pipeline_secs = 0.0;
  try {
    fs::create_directories(work);
    for (int i = 0; i < 2; ++i) {
      runs[i].cfg = load_config(config_path);
      runs[i].cfg.output_dir = fs::path(work) / ("run" + std::to_string(i + 1));
      if (!reuse) fs::remove_all(runs[i].cfg.output_dir);
      const auto t0 = std::chrono::steady_clock::now();
      runs[i].summary = cmd_all(runs[i].cfg);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (i == 0) pipeline_secs = secs;
      std::cout << "pipeline run " << i + 1 << " finished in " << std::fixed << std::setprecision(0) << secs << " s"
                << std::defaultfloat << std::endl;
    }
  } catch (const std::exception& e) {
    pipeline_error = e.what();
  }

  auto gated = [&](const std::function<Outcome(const Run&)>& f) {
    return [&, f]() -> Outcome {
      if (!pipeline_error.empty()) return {false, "pipeline failed: " + pipeline_error};
      return f(runs[0]);
    };
  };
  report(7, "DAG attack effectiveness", gated(attack_effectiveness));
  report(8, "Spectral signature of DAG outputs", gated(spectral_signature));
  report(9, "Detector ROC-AUC ordering", gated(table1_ordering));
  report(10, "Defended pipeline trend", gated([&](const Run& r) {
           Outcome o = fig4_trend(r);
           o.detail += ", full run " + std::to_string(static_cast<int>(pipeline_secs)) + " s (limit 1800)";
           o.pass = o.pass && pipeline_secs < 1800.0;
           return o;
         }));
  report(11, "Rerun determinism", gated([&](const Run& r) { return determinism(r, runs[1]); }));

  std::cout << (g_failures == 0 ? "ALL CRITERIA PASSED" : std::to_string(g_failures) + " CRITERIA FAILED") << std::endl;
  return g_failures == 0 ? 0 : 1;
}
