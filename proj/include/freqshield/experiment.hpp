#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "freqshield/attacks.hpp"
#include "freqshield/pipeline.hpp"

namespace freqshield {

struct SyntheticSpec {
  int count = 200;
  int height = 64;
  int width = 64;
  int num_classes = 4;
};

struct ModelEntry {
  std::string name;
  ArchitectureSpec arch;
  RepresentationMode mode = RepresentationMode::Spatial;  // detectors and reformers
  TrainConfig train;
};

struct ExperimentConfig {
  // dataset
  std::optional<SyntheticSpec> synthetic;
  std::filesystem::path manifest;  // used when synthetic is unset
  SplitSpec split;

  // models
  std::vector<ModelEntry> targets;
  std::vector<ModelEntry> detectors;
  std::vector<ModelEntry> reformers;

  // attack
  std::vector<AttackConfig> attacks;

  // defense
  std::vector<std::pair<std::string, std::string>> combinations;  // empty: every detector x reformer
  double t_fp = 0.05;
  double norm_p = 2.0;
  double mixed_ratio = 0.5;

  std::filesystem::path output_dir = "freqshield_out";
  std::uint64_t seed = 0;
};

// Parses the JSON config; relative paths resolve against the config's
// directory. Throws ConfigurationError on bad or dangling references.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir = {});
void validate_config(const ExperimentConfig& cfg);

// Re-derives every seed from a new master seed.
void apply_seed(ExperimentConfig& cfg, std::uint64_t seed);

// Where each stage writes, relative to the output directory.
struct Layout {
  std::filesystem::path root;
  std::filesystem::path data_dir() const { return root / "data"; }
  std::filesystem::path split_manifest(const std::string& split) const { return data_dir() / (split + ".tsv"); }
  std::filesystem::path model_path(const std::string& kind, const std::string& name) const {
    return root / "models" / kind / (name + ".fshd");
  }
  std::filesystem::path history_path(const std::string& kind, const std::string& name) const {
    return root / "models" / kind / (name + "_history.tsv");
  }
  std::filesystem::path attack_manifest(const std::string& name) const { return root / "attacks" / (name + ".tsv"); }
  std::filesystem::path results_dir() const { return root / "results"; }
};

struct DetectorAucRow {
  std::string detector;
  std::string attack;
  std::string target;  // "all" for the pooled row
  double auc = 0.0;
};

struct EvaluationSummary {
  std::vector<DetectorAucRow> auc;
  std::vector<MetricRecord> grid;
};

enum class TrainWhich { Targets, Detectors, Reformers, All };
TrainWhich train_which_from_string(std::string_view s);

// Stages. Each skips work whose stamp matches the current config section
// and throws MissingArtifactError when an upstream stage has not run.
void cmd_prepare(const ExperimentConfig& cfg);
void cmd_train(const ExperimentConfig& cfg, TrainWhich which = TrainWhich::All);
void cmd_attack(const ExperimentConfig& cfg);
EvaluationSummary cmd_evaluate(const ExperimentConfig& cfg);
EvaluationSummary cmd_all(const ExperimentConfig& cfg);

// Loaders for stage outputs.
Dataset load_split(const ExperimentConfig& cfg, const std::string& split);
SegmenterModel load_target(const ExperimentConfig& cfg, const std::string& name);
AttackSet load_attack(const ExperimentConfig& cfg, const AttackConfig& attack);

std::vector<DetectorAucRow> read_auc_table(const std::filesystem::path& path);

// Progress lines go here; silent by default.
void set_log_stream(std::ostream* out);

}  // namespace freqshield
