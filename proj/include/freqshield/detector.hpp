#pragma once

#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "freqshield/dataset.hpp"
#include "freqshield/models.hpp"

namespace freqshield {

inline constexpr double kInfinityNorm = std::numeric_limits<double>::infinity();

// Reconstruction-error detector: a trained reconstructor, the representation
// it was trained on, the norm used for RE, and the calibrated threshold.
struct DetectorBundle {
  DetectorBundle() = default;
  explicit DetectorBundle(ReconstructionModel m, double p = 2.0, std::string n = {});

  ReconstructionModel model;
  RepresentationMode mode = RepresentationMode::Spatial;
  double norm_p = 2.0;
  std::optional<double> threshold_t_re;
  std::string name;
};

struct CalibrationResult {
  double threshold_t_re = 0.0;
  double target_t_fp = 0.05;
  double achieved_fpr = 0.0;
  std::vector<double> validation_errors;  // ascending
};

struct DetectionResult {
  std::vector<std::size_t> pass_indices;  // input order
  std::vector<double> scores;
};

// ||v||_p for p >= 1, or the max-abs norm for p = infinity.
double lp_norm(std::span<const double> v, double p);

double reconstruction_error(const DetectorBundle& bundle, const Image& image);
std::vector<double> reconstruction_errors(const DetectorBundle& bundle, std::span<const Image> images);

// Smallest observed score r* with at most floor(t_fp * n) scores strictly
// above it. Throws ParameterError unless 0 < t_fp < 1.
CalibrationResult calibrate_from_scores(std::vector<double> scores, double t_fp);

// Scores the clean validation set, picks t_re and stores it in the bundle.
CalibrationResult calibrate_threshold(DetectorBundle& bundle, const Dataset& clean_val, double t_fp);

// Inputs with score <= t_re pass.
DetectionResult detect_from_scores(std::vector<double> scores, double t_re);
DetectionResult detect(const DetectorBundle& bundle, std::span<const Image> images);

void save_calibration(const CalibrationResult& result, const std::filesystem::path& path);
CalibrationResult load_calibration(const std::filesystem::path& path);

}  // namespace freqshield
