#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "freqshield/error.hpp"
#include "freqshield/metrics.hpp"
#include "oracles.hpp"

using namespace freqshield;

namespace {

LabelMap random_labels(int h, int w, int C, std::mt19937& rng) {
  std::uniform_int_distribution<int> d(0, C - 1);
  LabelMap m(h, w);
  for (int& v : m.values()) v = d(rng);
  return m;
}

}  // namespace

TEST(Dice, IdentityIsOne) {
  std::mt19937 rng(1);
  const LabelMap m = random_labels(8, 8, 4, rng);
  EXPECT_DOUBLE_EQ(dice_score(m, m, 4), 1.0);
}

TEST(Dice, DisjointSingleClassMapsScoreZero) {
  const LabelMap pred(5, 5, 1), truth(5, 5, 2);
  EXPECT_DOUBLE_EQ(dice_score(pred, truth, 3), 0.0);
}

TEST(Dice, HandComputedBinaryCase) {
  const LabelMap pred(2, 2, std::vector<int>{1, 1, 0, 0});
  const LabelMap truth(2, 2, std::vector<int>{1, 0, 0, 0});
  EXPECT_NEAR(dice_score(pred, truth, 2), 11.0 / 15.0, 1e-15);
}

TEST(Dice, MatchesSetOracleAndIsSymmetric) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const int C = 2 + trial % 4;
    const LabelMap a = random_labels(8, 8, C, rng);
    const LabelMap b = random_labels(8, 8, C, rng);
    EXPECT_NEAR(dice_score(a, b, C), oracle::dice(a, b, C), 1e-12);
    EXPECT_DOUBLE_EQ(dice_score(a, b, C), dice_score(b, a, C));
  }
}

TEST(Dice, AbsentClassesAreExcluded) {
  // Class 2 never appears: averaging runs over classes 0 and 1 only.
  const LabelMap pred(1, 2, std::vector<int>{0, 1});
  const LabelMap truth(1, 2, std::vector<int>{0, 1});
  EXPECT_DOUBLE_EQ(dice_score(pred, truth, 3), 1.0);
}

TEST(Dice, ShapeMismatchThrows) {
  EXPECT_THROW(dice_score(LabelMap(2, 2), LabelMap(2, 3), 2), ShapeError);
}

TEST(RocAuc, PerfectSeparation) {
  const std::vector<double> s{0.1, 0.2, 0.9, 0.95};
  EXPECT_DOUBLE_EQ(roc_auc(s, {false, false, true, true}), 1.0);
}

TEST(RocAuc, AllTiesIsChance) {
  const std::vector<double> s(6, 0.3);
  EXPECT_DOUBLE_EQ(roc_auc(s, {true, false, true, false, false, true}), 0.5);
}

TEST(RocAuc, HandEnumeratedExample) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  EXPECT_DOUBLE_EQ(roc_auc(s, {false, false, true, true}), 0.75);
}

TEST(RocAuc, SingleClassIsDegenerate) {
  const std::vector<double> s{0.1, 0.2};
  EXPECT_THROW(roc_auc(s, {true, true}), DegenerateInputError);
  EXPECT_THROW(roc_auc(s, {false, false}), DegenerateInputError);
}

TEST(RocAuc, MatchesPairEnumerationWithTies) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 49);
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<bool> f(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      s[static_cast<std::size_t>(i)] = static_cast<double>(rng() % 10) / 10.0;  // coarse: many ties
      f[static_cast<std::size_t>(i)] = rng() % 2 == 0;
    }
    f[0] = true;
    f[1] = false;
    EXPECT_NEAR(roc_auc(s, f), oracle::auc_pairs(s, f), 1e-12);
  }
}

TEST(RocAuc, InvariantUnderMonotoneTransformAndComplementary) {
  std::mt19937 rng(5);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(40), t(40);
    std::vector<bool> f(40), g(40);
    for (std::size_t i = 0; i < 40; ++i) {
      s[i] = nd(rng);
      t[i] = std::exp(3.0 * s[i]) + 7.0;
      f[i] = i % 3 == 0;
      g[i] = !f[i];
    }
    EXPECT_NEAR(roc_auc(s, f), roc_auc(t, f), 1e-12);
    EXPECT_NEAR(roc_auc(s, f) + roc_auc(s, g), 1.0, 1e-12);
  }
}
