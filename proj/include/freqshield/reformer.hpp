#pragma once

#include <span>
#include <string>
#include <vector>

#include "freqshield/models.hpp"

namespace freqshield {

// Inference-time projection toward clean images. Only spatial-domain
// reconstructors are accepted.
struct ReformerBundle {
  ReformerBundle() = default;
  explicit ReformerBundle(ReconstructionModel m, std::string n = {});

  ReconstructionModel model;
  std::string name;
};

// One forward pass per image, outputs clamped to [0,1], order preserved.
std::vector<Image> reform(const ReformerBundle& bundle, std::span<const Image> images);

}  // namespace freqshield
