#include "freqshield/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "freqshield/error.hpp"

namespace freqshield {

DetectorBundle::DetectorBundle(ReconstructionModel m, double p, std::string n)
    : model(std::move(m)), mode(model.mode()), norm_p(p), name(std::move(n)) {
  if (!(p >= 1.0)) throw ParameterError("norm p must be >= 1");
}

double lp_norm(std::span<const double> v, double p) {
  if (std::isinf(p)) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  }
  if (p == 1.0) {
    double s = 0.0;
    for (double x : v) s += std::abs(x);
    return s;
  }
  if (p == 2.0) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  }
  double s = 0.0;
  for (double x : v) s += std::pow(std::abs(x), p);
  return std::pow(s, 1.0 / p);
}

std::vector<double> reconstruction_errors(const DetectorBundle& bundle, std::span<const Image> images) {
  if (!bundle.model.valid()) throw StateError("detector has no model");
  std::vector<Image> reps;
  reps.reserve(images.size());
  for (const auto& img : images) reps.push_back(to_representation(img, bundle.mode));
  const auto recon = bundle.model.reconstruct(reps);
  std::vector<double> out;
  out.reserve(reps.size());
  std::vector<double> diff;
  for (std::size_t i = 0; i < reps.size(); ++i) {
    auto a = reps[i].values();
    auto b = recon[i].values();
    diff.resize(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) diff[k] = a[k] - b[k];
    out.push_back(lp_norm(diff, bundle.norm_p));
  }
  return out;
}

double reconstruction_error(const DetectorBundle& bundle, const Image& image) {
  return reconstruction_errors(bundle, std::span<const Image>(&image, 1)).front();
}

CalibrationResult calibrate_from_scores(std::vector<double> scores, double t_fp) {
  if (!(t_fp > 0.0 && t_fp < 1.0)) throw ParameterError("t_fp must lie in (0,1)");
  if (scores.empty()) throw ParameterError("calibration needs at least one validation score");
  std::sort(scores.begin(), scores.end());
  const std::size_t n = scores.size();
  const auto allowed = static_cast<std::size_t>(std::floor(t_fp * static_cast<double>(n) + 1e-9));

  // Ascending scan: the first value with few enough scores strictly above it.
  std::size_t chosen = n - 1;
  for (std::size_t i = 0; i < n; ++i) {
    const auto above = static_cast<std::size_t>(scores.end() - std::upper_bound(scores.begin(), scores.end(), scores[i]));
    if (above <= allowed) {
      chosen = i;
      break;
    }
  }
  CalibrationResult r;
  r.threshold_t_re = scores[chosen];
  r.target_t_fp = t_fp;
  const auto above = static_cast<std::size_t>(scores.end() - std::upper_bound(scores.begin(), scores.end(), r.threshold_t_re));
  r.achieved_fpr = static_cast<double>(above) / static_cast<double>(n);
  r.validation_errors = std::move(scores);
  return r;
}

CalibrationResult calibrate_threshold(DetectorBundle& bundle, const Dataset& clean_val, double t_fp) {
  if (!(t_fp > 0.0 && t_fp < 1.0)) throw ParameterError("t_fp must lie in (0,1)");
  if (clean_val.empty()) throw ParameterError("calibration set is empty");
  const auto images = clean_val.images();
  auto result = calibrate_from_scores(reconstruction_errors(bundle, images), t_fp);
  bundle.threshold_t_re = result.threshold_t_re;
  return result;
}

DetectionResult detect_from_scores(std::vector<double> scores, double t_re) {
  DetectionResult r;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] <= t_re) r.pass_indices.push_back(i);
  }
  r.scores = std::move(scores);
  return r;
}

DetectionResult detect(const DetectorBundle& bundle, std::span<const Image> images) {
  if (!bundle.threshold_t_re) throw StateError("detector '" + bundle.name + "' is not calibrated");
  if (images.empty()) return {};
  return detect_from_scores(reconstruction_errors(bundle, images), *bundle.threshold_t_re);
}

void save_calibration(const CalibrationResult& result, const std::filesystem::path& path) {
  nlohmann::json j;
  j["threshold_t_re"] = result.threshold_t_re;
  j["target_t_fp"] = result.target_t_fp;
  j["achieved_fpr"] = result.achieved_fpr;
  j["count"] = result.validation_errors.size();
  j["validation_errors"] = result.validation_errors;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write calibration '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

CalibrationResult load_calibration(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open calibration '" + path.string() + "'");
  try {
    const auto j = nlohmann::json::parse(in);
    CalibrationResult r;
    r.threshold_t_re = j.at("threshold_t_re").get<double>();
    r.target_t_fp = j.at("target_t_fp").get<double>();
    r.achieved_fpr = j.at("achieved_fpr").get<double>();
    r.validation_errors = j.at("validation_errors").get<std::vector<double>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("calibration '" + path.string() + "': " + e.what());
  }
}

}  // namespace freqshield
