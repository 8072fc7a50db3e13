#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "freqshield/dataset.hpp"
#include "freqshield/error.hpp"
#include "freqshield/frequency.hpp"
#include "oracles.hpp"

using namespace freqshield;

namespace {

Image random_image(int h, int w, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(h, w);
  for (double& v : img.values()) v = u(rng);
  return img;
}

Spectrum random_spectrum(int h, int w, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> n;
  Spectrum s{Grid2D<std::complex<double>>(h, w), false};
  for (auto& c : s.coefficients.values()) c = {n(rng), n(rng)};
  return s;
}

double total_energy(const Spectrum& s) {
  double e = 0.0;
  for (const auto& c : s.coefficients.values()) e += std::norm(c);
  return e;
}

}  // namespace

TEST(Dft2, ConstantImageIsDcOnly) {
  const Image img(6, 10, 0.37);
  const Spectrum s = dft2(img);
  EXPECT_FALSE(s.shifted);
  for (int v = 0; v < 6; ++v) {
    for (int u = 0; u < 10; ++u) {
      const double expected = (u == 0 && v == 0) ? 0.37 : 0.0;
      EXPECT_NEAR(s.coefficients(v, u).real(), expected, 1e-9);
      EXPECT_NEAR(s.coefficients(v, u).imag(), 0.0, 1e-9);
    }
  }
}

TEST(Dft2, CosineRowPatternSplitsIntoTwoPeaks) {
  const int H = 8, W = 16;
  const double c = 0.8;
  Image img(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) img(y, x) = c * std::cos(2.0 * std::numbers::pi * x / W);
  const Spectrum s = dft2(img);
  for (int v = 0; v < H; ++v) {
    for (int u = 0; u < W; ++u) {
      const bool peak = v == 0 && (u == 1 || u == W - 1);
      EXPECT_NEAR(std::abs(s.coefficients(v, u)), peak ? c / 2 : 0.0, 1e-9) << "u=" << u << " v=" << v;
    }
  }
}

TEST(Dft2, MatchesBruteForceDoubleSum) {
  for (unsigned seed = 0; seed < 5; ++seed) {
    const Image img = random_image(8, 8, seed);
    const Spectrum s = dft2(img);
    for (int v = 0; v < 8; ++v) {
      for (int u = 0; u < 8; ++u) {
        const auto ref = oracle::dft_coefficient(img, u, v);
        EXPECT_NEAR(std::abs(s.coefficients(v, u) - ref), 0.0, 1e-9);
      }
    }
  }
}

TEST(Dft2, NonSquareMatchesBruteForce) {
  const Image img = random_image(5, 7, 11);
  const Spectrum s = dft2(img);
  for (int v = 0; v < 5; ++v)
    for (int u = 0; u < 7; ++u) EXPECT_NEAR(std::abs(s.coefficients(v, u) - oracle::dft_coefficient(img, u, v)), 0.0, 1e-9);
}

TEST(Dft2, ConjugateSymmetryForRealInput) {
  const Image img = random_image(9, 12, 3);
  const Spectrum s = dft2(img);
  const int H = 9, W = 12;
  for (int v = 0; v < H; ++v) {
    for (int u = 0; u < W; ++u) {
      const auto a = s.coefficients(v, u);
      const auto b = std::conj(s.coefficients((H - v) % H, (W - u) % W));
      EXPECT_LE(std::abs(a - b), 1e-9 * std::max(1.0, std::abs(a)));
    }
  }
}

TEST(Dft2, ParsevalUnderNormalization) {
  for (unsigned seed = 0; seed < 4; ++seed) {
    const Image img = random_image(16, 12, seed);
    double spatial = 0.0;
    for (double v : img.values()) spatial += v * v;
    const double freq = total_energy(dft2(img)) * 16.0 * 12.0;
    EXPECT_NEAR(spatial / freq, 1.0, 1e-6);
  }
}

TEST(Dft2, RejectsNonFinite) {
  Image img(4, 4, 0.5);
  img(1, 2) = std::nan("");
  EXPECT_THROW(dft2(img), NumericError);
  img(1, 2) = INFINITY;
  EXPECT_THROW(to_representation(img, RepresentationMode::Frequency), NumericError);
}

TEST(Idft2, RoundTrips64x64) {
  const Image img = random_image(64, 64, 5);
  const Image back = idft2(dft2(img));
  double worst = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) worst = std::max(worst, std::abs(img.values()[i] - back.values()[i]));
  EXPECT_LT(worst, 1e-6);
}

TEST(Idft2, DcOnlySpectrumGivesConstant) {
  Spectrum s{Grid2D<std::complex<double>>(4, 6), false};
  s.coefficients(0, 0) = 0.25;
  const Image img = idft2(s);
  for (double v : img.values()) EXPECT_NEAR(v, 0.25, 1e-12);
}

TEST(Idft2, ShiftedSpectrumIsAStateError) {
  const Spectrum s = shift(dft2(Image(4, 4, 0.1)));
  EXPECT_THROW(idft2(s), StateError);
}

TEST(Idft2, LargeImaginaryResidueIsNumericError) {
  Spectrum s{Grid2D<std::complex<double>>(4, 4), false};
  s.coefficients(1, 0) = {0.0, 1.0};  // not conjugate-symmetric
  EXPECT_THROW(idft2(s), NumericError);
}

TEST(Shift, MovesDcToCenter) {
  Spectrum s{Grid2D<std::complex<double>>(4, 4), false};
  s.coefficients(0, 0) = 1.0;
  const Spectrum t = shift(s);
  EXPECT_TRUE(t.shifted);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) EXPECT_EQ(t.coefficients(y, x), std::complex<double>(y == 2 && x == 2 ? 1.0 : 0.0));
}

TEST(Shift, ExactInverseOnEvenAndOddDimensions) {
  for (auto [h, w] : {std::pair{4, 4}, std::pair{5, 5}, std::pair{6, 9}, std::pair{7, 2}}) {
    const Spectrum s = random_spectrum(h, w, static_cast<unsigned>(h * 31 + w));
    const Spectrum back = unshift(shift(s));
    EXPECT_FALSE(back.shifted);
    EXPECT_EQ(back.coefficients, s.coefficients) << h << "x" << w;
    // Shifting is a permutation: energy is preserved up to summation order.
    EXPECT_NEAR(total_energy(shift(s)), total_energy(s), 1e-12 * total_energy(s));
  }
}

TEST(Shift, OddDimensionDcLandsAtFloorHalf) {
  Spectrum s{Grid2D<std::complex<double>>(5, 7), false};
  s.coefficients(0, 0) = 3.0;
  const Spectrum t = shift(s);
  EXPECT_EQ(t.coefficients(2, 3), std::complex<double>(3.0));
}

TEST(Shift, StateErrors) {
  const Spectrum s = dft2(Image(4, 4, 0.3));
  EXPECT_THROW(shift(shift(s)), StateError);
  EXPECT_THROW(unshift(s), StateError);
}

TEST(Shift, FullRoundTripThroughImage) {
  const Image img = random_image(10, 14, 8);
  const Image back = idft2(unshift(shift(dft2(img))));
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(img.values()[i], back.values()[i], 1e-6);
}

TEST(Representation, SpatialIsIdentity) {
  const Image img = random_image(8, 8, 1);
  EXPECT_EQ(to_representation(img, RepresentationMode::Spatial), img);
}

TEST(Representation, ShiftedConstantImageIsSingleCenterPixel) {
  const Image img(8, 8, 0.6);
  const Image rep = to_representation(img, RepresentationMode::ShiftFrequency);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      if (y == 4 && x == 4) EXPECT_NEAR(rep(y, x), std::log1p(64 * 0.6) / std::log1p(64.0), 1e-12);
      else EXPECT_NEAR(rep(y, x), 0.0, 1e-9);
    }
  }
}

TEST(Representation, UnitConstantImageHasUnitDc) {
  const Image rep = to_representation(Image(6, 10, 1.0), RepresentationMode::Frequency);
  EXPECT_NEAR(rep(0, 0), 1.0, 1e-12);
}

TEST(Representation, FrequencyAndShiftedAreRotations) {
  const Image img = random_image(6, 9, 4);
  const Image a = to_representation(img, RepresentationMode::Frequency);
  const Image b = to_representation(img, RepresentationMode::ShiftFrequency);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 9; ++x) EXPECT_EQ(b((y + 3) % 6, (x + 4) % 9), a(y, x));
}

TEST(Representation, ValuesStayInUnitRangeForUnitImages) {
  const Image img = random_image(16, 16, 9);
  for (auto mode : {RepresentationMode::Frequency, RepresentationMode::ShiftFrequency}) {
    for (double v : to_representation(img, mode).values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Representation, ModeNamesRoundTrip) {
  for (auto m : {RepresentationMode::Spatial, RepresentationMode::Frequency, RepresentationMode::ShiftFrequency}) {
    EXPECT_EQ(representation_from_string(to_string(m)), m);
  }
  EXPECT_THROW(representation_from_string("phase"), ParameterError);
}

TEST(HighFrequency, UniformNoiseRaisesHighFrequencyMagnitude) {
  const Dataset ds = generate_synthetic_dataset(5, 64, 64, 4, 21);
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> noise(-0.05, 0.05);
  for (const auto& s : ds.samples) {
    Image noisy = s.image;
    for (double& v : noisy.values()) v += noise(rng);
    EXPECT_GT(high_frequency_log_magnitude(noisy), high_frequency_log_magnitude(s.image)) << s.id;
  }
}
