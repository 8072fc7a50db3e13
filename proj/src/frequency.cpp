#include "freqshield/frequency.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "freqshield/error.hpp"

namespace freqshield {

std::string_view to_string(RepresentationMode mode) {
  switch (mode) {
    case RepresentationMode::Spatial: return "spatial";
    case RepresentationMode::Frequency: return "frequency";
    case RepresentationMode::ShiftFrequency: return "shiftFrequency";
  }
  return "unknown";
}

RepresentationMode representation_from_string(std::string_view name) {
  if (name == "spatial") return RepresentationMode::Spatial;
  if (name == "frequency") return RepresentationMode::Frequency;
  if (name == "shiftFrequency") return RepresentationMode::ShiftFrequency;
  throw ParameterError("unknown representation mode '" + std::string(name) + "'");
}

namespace {

using cplx = std::complex<double>;

// exp(sign * j*2*pi*k/n) for k in [0, n). Indices are reduced mod n by the
// caller so every product k*m uses an exactly representable angle.
std::vector<cplx> twiddles(int n, double sign) {
  std::vector<cplx> t(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double a = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    t[static_cast<std::size_t>(k)] = {std::cos(a), std::sin(a)};
  }
  return t;
}

// Separable transform: rows (x -> u), then columns (y -> v).
Grid2D<cplx> transform(const Grid2D<cplx>& in, double sign) {
  const int H = in.height(), W = in.width();
  const auto tw_x = twiddles(W, sign);
  const auto tw_y = twiddles(H, sign);

  Grid2D<cplx> rows(H, W);
  for (int y = 0; y < H; ++y) {
    for (int u = 0; u < W; ++u) {
      cplx acc = 0.0;
      for (int x = 0; x < W; ++x) {
        acc += in(y, x) * tw_x[static_cast<std::size_t>((static_cast<long>(u) * x) % W)];
      }
      rows(y, u) = acc;
    }
  }
  Grid2D<cplx> out(H, W);
  for (int v = 0; v < H; ++v) {
    for (int u = 0; u < W; ++u) {
      cplx acc = 0.0;
      for (int y = 0; y < H; ++y) {
        acc += rows(y, u) * tw_y[static_cast<std::size_t>((static_cast<long>(v) * y) % H)];
      }
      out(v, u) = acc;
    }
  }
  return out;
}

void require_finite(const Image& image) {
  if (image.empty()) throw NumericError("empty image");
  for (double v : image.values()) {
    if (!std::isfinite(v)) throw NumericError("image contains non-finite values");
  }
}

Grid2D<cplx> rotate(const Grid2D<cplx>& in, int dy, int dx) {
  const int H = in.height(), W = in.width();
  Grid2D<cplx> out(H, W);
  for (int y = 0; y < H; ++y) {
    const int ty = ((y + dy) % H + H) % H;
    for (int x = 0; x < W; ++x) out(ty, ((x + dx) % W + W) % W) = in(y, x);
  }
  return out;
}

}  // namespace

Spectrum dft2(const Image& image) {
  require_finite(image);
  const int H = image.height(), W = image.width();
  Grid2D<cplx> in(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) in(y, x) = image(y, x);
  Spectrum s{transform(in, -1.0), false};
  const double norm = 1.0 / (static_cast<double>(W) * static_cast<double>(H));
  for (auto& c : s.coefficients.values()) c *= norm;
  return s;
}

Image idft2(const Spectrum& spectrum) {
  if (spectrum.shifted) throw StateError("idft2 needs an unshifted spectrum; call unshift first");
  const auto back = transform(spectrum.coefficients, +1.0);
  Image out(back.height(), back.width());
  auto dst = out.values();
  auto src = back.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!std::isfinite(src[i].real()) || std::abs(src[i].imag()) > 1e-6) {
      throw NumericError("inverse transform left an imaginary residue of " +
                         std::to_string(std::abs(src[i].imag())));
    }
    dst[i] = src[i].real();
  }
  return out;
}

Spectrum shift(const Spectrum& spectrum) {
  if (spectrum.shifted) throw StateError("spectrum is already shifted");
  return {rotate(spectrum.coefficients, spectrum.height() / 2, spectrum.width() / 2), true};
}

Spectrum unshift(const Spectrum& spectrum) {
  if (!spectrum.shifted) throw StateError("spectrum is not shifted");
  return {rotate(spectrum.coefficients, -(spectrum.height() / 2), -(spectrum.width() / 2)), false};
}

Image to_representation(const Image& image, RepresentationMode mode) {
  require_finite(image);
  if (mode == RepresentationMode::Spatial) return image;
  Spectrum s = dft2(image);
  if (mode == RepresentationMode::ShiftFrequency) s = shift(s);
  Image out(s.height(), s.width());
  auto dst = out.values();
  auto src = s.coefficients.values();
  // log(1 + WH|F|) / log(1 + WH): the unnormalized magnitude on a log scale,
  // mapped so a unit constant image has a DC value of exactly 1.
  const double wh = static_cast<double>(image.size());
  const double scale = std::log1p(wh);
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::log1p(wh * std::abs(src[i])) / scale;
  return out;
}

double high_frequency_log_magnitude(const Image& image) {
  const Spectrum s = shift(dft2(image));
  const int H = s.height(), W = s.width();
  const double cy = H / 2, cx = W / 2;
  const double radius = std::min(H, W) / 4.0;
  double sum = 0.0;
  std::size_t count = 0;
  for (int v = 0; v < H; ++v) {
    for (int u = 0; u < W; ++u) {
      if (std::hypot(v - cy, u - cx) > radius) {
        sum += std::log1p(std::abs(s.coefficients(v, u)));
        ++count;
      }
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

}  // namespace freqshield
