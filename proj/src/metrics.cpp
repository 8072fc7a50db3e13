#include "freqshield/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "freqshield/error.hpp"

namespace freqshield {

double dice_score(const LabelMap& pred, const LabelMap& truth, int num_classes) {
  if (!pred.same_shape(truth)) throw ShapeError("dice_score: prediction and truth differ in shape");
  const auto C = static_cast<std::size_t>(num_classes);
  std::vector<std::size_t> p(C, 0), g(C, 0), both(C, 0);
  auto pv = pred.values();
  auto tv = truth.values();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const int a = pv[i], b = tv[i];
    if (a < 0 || a >= num_classes || b < 0 || b >= num_classes) {
      throw ShapeError("dice_score: class id outside [0, " + std::to_string(num_classes - 1) + "]");
    }
    ++p[static_cast<std::size_t>(a)];
    ++g[static_cast<std::size_t>(b)];
    if (a == b) ++both[static_cast<std::size_t>(a)];
  }
  double sum = 0.0;
  int present = 0;
  for (std::size_t c = 0; c < C; ++c) {
    if (p[c] + g[c] == 0) continue;
    sum += 2.0 * static_cast<double>(both[c]) / static_cast<double>(p[c] + g[c]);
    ++present;
  }
  return present == 0 ? 1.0 : sum / present;
}

double roc_auc(std::span<const double> scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw ShapeError("roc_auc: scores and flags differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of (mid-)ranks of the positives.
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (positive[order[k]]) {
        rank_sum += mid_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DegenerateInputError("roc_auc needs both positive and negative samples");
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

}  // namespace freqshield
