#pragma once

#include <complex>
#include <string_view>

#include "freqshield/grid.hpp"

namespace freqshield {

// Frequency coefficients F(u,v) stored with row = v (vertical frequency) and
// column = u (horizontal frequency), matching the image's (y, x) layout.
struct Spectrum {
  Grid2D<std::complex<double>> coefficients;
  bool shifted = false;

  int height() const noexcept { return coefficients.height(); }
  int width() const noexcept { return coefficients.width(); }
};

enum class RepresentationMode { Spatial, Frequency, ShiftFrequency };

std::string_view to_string(RepresentationMode mode);
RepresentationMode representation_from_string(std::string_view name);

// Forward DFT carrying the 1/(W*H) factor. Throws NumericError on NaN/Inf.
Spectrum dft2(const Image& image);

// Inverse of dft2 (no prefactor). The spectrum must be unshifted.
Image idft2(const Spectrum& spectrum);

// Moves the zero-frequency coefficient to (H/2, W/2) by circular rotation.
Spectrum shift(const Spectrum& spectrum);
Spectrum unshift(const Spectrum& spectrum);

// Detector input: the image itself, or log(1 + WH|F|) / log(1 + WH) of the
// (shifted) spectrum. Fixed scale, so a [0,1] image maps into [0,1].
Image to_representation(const Image& image, RepresentationMode mode);

// Mean of log(1+|F|) over shifted-spectrum entries farther than
// min(H,W)/4 from the center.
double high_frequency_log_magnitude(const Image& image);

}  // namespace freqshield
