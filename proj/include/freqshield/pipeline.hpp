#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "freqshield/attacks.hpp"
#include "freqshield/detector.hpp"
#include "freqshield/reformer.hpp"

namespace freqshield {

// Detector + reformer + target segmenter, validated at construction.
class DefenseAssembly {
 public:
  DefenseAssembly(DetectorBundle detector, ReformerBundle reformer, SegmenterModel segmenter, std::string id);

  const DetectorBundle& detector() const noexcept { return detector_; }
  const ReformerBundle& reformer() const noexcept { return reformer_; }
  const SegmenterModel& segmenter() const noexcept { return segmenter_; }
  const std::string& id() const noexcept { return id_; }

 private:
  DetectorBundle detector_;
  ReformerBundle reformer_;
  SegmenterModel segmenter_;
  std::string id_;
};

struct DefenseOutput {
  std::vector<LabelMap> predictions;  // one per passed input, in pass order
  std::vector<std::size_t> pass_indices;
  std::vector<double> scores;
};

// convert -> detect -> keep passed spatial images -> reform -> segment.
DefenseOutput defend_and_segment(const DefenseAssembly& assembly, std::span<const Image> images);

enum class Metric { Dice, RocAuc, Fpr, PassRate };
std::string_view to_string(Metric m);
Metric metric_from_string(std::string_view s);

struct Provenance {
  int combination = 0;  // 0 = no defense baseline; 1.. = grid cells
  std::string assembly_id;
  std::string detector;
  std::string reformer;
  std::string segmenter;
  std::string attack;
  std::string dataset;
  double t_fp = 0.0;
  std::uint64_t seed = 0;
};

struct MetricRecord {
  Metric metric = Metric::Dice;
  double value = 0.0;
  Provenance config;
};

MetricRecord evaluate_detector(const DetectorBundle& bundle, const MixedSet& mixed, Provenance provenance = {});

// Mean Dice of predictions against the labels of the selected samples.
double mean_dice(std::span<const LabelMap> predictions, const Dataset& truth,
                 std::span<const std::size_t> indices);

template <typename T>
using Named = std::pair<std::string, T>;

struct GridSpec {
  std::vector<Named<DetectorBundle>> detectors;
  std::vector<Named<ReformerBundle>> reformers;
  std::vector<Named<SegmenterModel>> segmenters;
  // Attack sets; each sample's source_model_id selects the segmenter it targets.
  std::vector<AttackSet> attack_sets;
  // Explicit (detector, reformer) pairs; the full cross product when empty.
  std::vector<std::pair<std::string, std::string>> combinations;
  Dataset clean_val;
  Dataset clean_test;
  double t_fp = 0.05;
  std::uint64_t seed = 0;
};

// Calibrates every detector at t_fp on clean_val, then for every
// (detector, reformer) pair, segmenter and attack set records:
//   DICE and PASS_RATE on the segmenter's adversarial inputs,
//   DICE and PASS_RATE on clean_test,
// plus one undefended baseline (combination 0) per segmenter and attack.
// DICE over passed images only; omitted when nothing passes.
std::vector<MetricRecord> run_combination_grid(GridSpec spec);

// Number of distinct combination ids (baselines included) in a record list.
std::size_t count_combinations(std::span<const MetricRecord> records);

// Tab-separated: combination, detector, reformer, segmenter, attack,
// dataset, metric, value, t_fp, seed. Rows sorted by combination id.
void write_results_table(std::span<const MetricRecord> records, const std::filesystem::path& path);
std::vector<MetricRecord> read_results_table(const std::filesystem::path& path);

// CSV of mean adversarial Dice per (combination, segmenter) for bar charts.
void write_plot_data(std::span<const MetricRecord> records, const std::filesystem::path& path);

}  // namespace freqshield
