#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <tuple>
#include <vector>

#include "freqshield/grid.hpp"

namespace freqshield {

// One grayscale slice with its per-pixel class ids.
struct ImageSample {
  std::string id;
  Image image;     // intensities in [0,1]
  LabelMap label;  // class ids in [0, C-1]
};

struct Dataset {
  std::string name;
  int num_classes = 2;
  std::vector<ImageSample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  int height() const { return samples.empty() ? 0 : samples.front().image.height(); }
  int width() const { return samples.empty() ? 0 : samples.front().image.width(); }
  std::vector<Image> images() const;
};

// Throws ValidationError naming the offending sample when any dataset
// invariant is violated (shape, intensity range, label range, id clash).
void validate_dataset(const Dataset& ds);

struct SplitSpec {
  double train_fraction = 0.7;
  double val_fraction = 0.15;
  double test_fraction = 0.15;
  std::uint64_t seed = 0;
};

struct SplitResult {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Reads a manifest (`C=<n>` header, then `id<TAB>image<TAB>label` lines).
// Relative raster paths resolve against the manifest's directory.
Dataset load_dataset(const std::filesystem::path& manifest_path);

// Writes every sample as a 16-bit image raster plus a label raster next to
// the manifest, then the manifest itself.
void save_dataset(const Dataset& ds, const std::filesystem::path& manifest_path);

Dataset generate_synthetic_dataset(int n, int height, int width, int num_classes,
                                   std::uint64_t seed);

SplitResult split_dataset(const Dataset& ds, const SplitSpec& spec);

// Quantizes an intensity onto the 16-bit grid used by the raster format.
double quantize16(double v);

// Deterministic uniform source shared by everything that needs to be a pure
// function of a seed (std distributions differ between standard libraries).
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

 private:
  std::uint64_t state_;
};

// Fisher-Yates shuffle driven by SplitMix64.
template <typename T>
void shuffle_with(std::vector<T>& v, SplitMix64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

namespace raster {

// Binary PGM (P5) with 8- or 16-bit samples.
struct Raster {
  int height = 0;
  int width = 0;
  int maxval = 255;
  std::vector<std::uint16_t> pixels;
};

Raster read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Raster& r);

Image to_image(const Raster& r);
Raster from_image(const Image& img);
LabelMap to_labels(const Raster& r);
Raster from_labels(const LabelMap& labels, int num_classes);

}  // namespace raster

}  // namespace freqshield
