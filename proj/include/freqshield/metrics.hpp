#pragma once

#include <span>
#include <vector>

#include "freqshield/grid.hpp"

namespace freqshield {

// Mean per-class Dice 2|P n G| / (|P| + |G|) over classes present in either
// map. Returns 1 when both maps are empty of every class (cannot happen for
// non-empty maps).
double dice_score(const LabelMap& pred, const LabelMap& truth, int num_classes);

// Normalized Mann-Whitney statistic: probability that a random positive
// scores above a random negative, ties counted one half.
double roc_auc(std::span<const double> scores, const std::vector<bool>& positive);

}  // namespace freqshield
