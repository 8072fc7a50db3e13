#include "freqshield/reformer.hpp"

#include <algorithm>

#include "freqshield/error.hpp"

namespace freqshield {

ReformerBundle::ReformerBundle(ReconstructionModel m, std::string n) : model(std::move(m)), name(std::move(n)) {
  if (model.mode() != RepresentationMode::Spatial) {
    throw ConfigurationError("reformer '" + name + "' must be trained in the spatial domain, not " +
                             std::string(to_string(model.mode())));
  }
}

std::vector<Image> reform(const ReformerBundle& bundle, std::span<const Image> images) {
  if (images.empty()) return {};
  if (!bundle.model.valid()) throw StateError("reformer has no model");
  auto out = bundle.model.reconstruct(images);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!out[i].same_shape(images[i])) throw ShapeError("reformer output shape differs from its input");
    for (double& v : out[i].values()) v = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

}  // namespace freqshield
