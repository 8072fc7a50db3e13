#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "freqshield/dataset.hpp"
#include "freqshield/models.hpp"

namespace freqshield {

enum class AttackKind { DAG, FGSM };
enum class TargetPolicy { LeastLikely, RandomOther };

std::string_view to_string(AttackKind k);
std::string_view to_string(TargetPolicy p);
AttackKind attack_kind_from_string(std::string_view s);
TargetPolicy target_policy_from_string(std::string_view s);

struct AttackConfig {
  AttackKind kind = AttackKind::DAG;
  double epsilon = 0.03;      // L-infinity budget; FGSM accepts a signed value
  int max_iterations = 50;    // DAG only
  double step_gamma = 0.005;  // DAG step scale
  TargetPolicy target_policy = TargetPolicy::LeastLikely;
  std::uint64_t seed = 0;

  std::string name() const;  // e.g. "dag_eps0.03"
};

// Throws ParameterError on budgets outside [0, 0.1] (|eps| for FGSM),
// max_iterations < 1 or a non-positive step.
void validate_attack_config(const AttackConfig& cfg);

struct AdversarialSample {
  ImageSample clean;
  Image adversarial_image;
  std::string source_model_id;
  AttackConfig attack;
  double achieved_dice_drop = 0.0;
  // DAG: number of still-active pixels before each iteration.
  std::vector<std::int64_t> active_counts;

  std::string id() const { return source_model_id + "__" + clean.id; }
};

AdversarialSample dag_attack(const SegmenterModel& model, const ImageSample& sample, const AttackConfig& cfg,
                             std::string model_id = {});
AdversarialSample fgsm_attack(const SegmenterModel& model, const ImageSample& sample, const AttackConfig& cfg,
                              std::string model_id = {});
AdversarialSample run_attack(const SegmenterModel& model, const ImageSample& sample, const AttackConfig& cfg,
                             std::string model_id = {});

double linf_distance(const Image& a, const Image& b);
// Budget check with a 1e-12 allowance for the last bit of 16-bit quantization.
bool within_budget(const AdversarialSample& s);

struct AttackSet {
  std::string name;
  int num_classes = 2;
  std::vector<AdversarialSample> samples;

  // Adversarial images paired with the clean labels; ids are "<model>__<clean id>".
  Dataset to_dataset() const;
};

using NamedSegmenter = std::pair<std::string, const SegmenterModel*>;

AttackSet craft_attack_set(const std::vector<NamedSegmenter>& models, const Dataset& clean, const AttackConfig& cfg);

// Manifest of adversarial images plus one JSON sidecar per sample.
void save_attack_set(const AttackSet& set, const std::filesystem::path& manifest_path);
AttackSet load_attack_set(const std::filesystem::path& manifest_path, const Dataset& clean);

struct MixedSet {
  Dataset data;
  std::vector<bool> adversarial;  // positives
  std::size_t positives() const;
};

// Largest clean/adversarial blend with the requested adversarial fraction.
MixedSet build_mixed_set(const Dataset& clean, const Dataset& adversarial, double ratio, std::uint64_t seed);
void save_mixed_set(const MixedSet& set, const std::filesystem::path& manifest_path);
MixedSet load_mixed_set(const std::filesystem::path& manifest_path);

}  // namespace freqshield
