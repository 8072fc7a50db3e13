#include "freqshield/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "freqshield/error.hpp"

namespace freqshield {

namespace fs = std::filesystem;

std::vector<Image> Dataset::images() const {
  std::vector<Image> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.image);
  return out;
}

void validate_dataset(const Dataset& ds) {
  if (ds.num_classes < 2) throw ValidationError("num_classes must be >= 2 in dataset '" + ds.name + "'");
  std::set<std::string> ids;
  for (const auto& s : ds.samples) {
    if (!ids.insert(s.id).second) throw ValidationError("duplicate sample id '" + s.id + "'");
    if (!s.image.same_shape(s.label)) {
      throw ValidationError("sample '" + s.id + "': image is " + std::to_string(s.image.height()) + "x" +
                            std::to_string(s.image.width()) + " but label is " +
                            std::to_string(s.label.height()) + "x" + std::to_string(s.label.width()));
    }
    if (!s.image.same_shape(ds.samples.front().image)) {
      throw ValidationError("sample '" + s.id + "' differs in size from the rest of the dataset");
    }
    for (double v : s.image.values()) {
      if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("sample '" + s.id + "': intensity outside [0,1]");
    }
    for (int l : s.label.values()) {
      if (l < 0 || l >= ds.num_classes) {
        throw ValidationError("sample '" + s.id + "': label value " + std::to_string(l) +
                              " outside [0," + std::to_string(ds.num_classes - 1) + "]");
      }
    }
  }
}

double quantize16(double v) {
  return std::round(std::clamp(v, 0.0, 1.0) * 65535.0) / 65535.0;
}

// ---------------------------------------------------------------- raster io

namespace raster {

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  while (in) {
    int c = in.get();
    if (c == '#') {
      while (in && in.get() != '\n') {}
      continue;
    }
    if (std::isspace(c) || c == EOF) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

}  // namespace

Raster read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open raster '" + path.string() + "'");
  if (next_token(in) != "P5") throw LoadError("'" + path.string() + "' is not a binary PGM (P5)");
  Raster r;
  try {
    r.width = std::stoi(next_token(in));
    r.height = std::stoi(next_token(in));
    r.maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    throw LoadError("malformed PGM header in '" + path.string() + "'");
  }
  if (r.width <= 0 || r.height <= 0 || r.maxval <= 0 || r.maxval > 65535) {
    throw LoadError("invalid PGM header values in '" + path.string() + "'");
  }
  const std::size_t n = static_cast<std::size_t>(r.width) * static_cast<std::size_t>(r.height);
  const bool wide = r.maxval > 255;
  std::vector<unsigned char> bytes(n * (wide ? 2 : 1));
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    throw LoadError("truncated pixel data in '" + path.string() + "'");
  }
  r.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    r.pixels[i] = wide ? static_cast<std::uint16_t>((bytes[2 * i] << 8) | bytes[2 * i + 1]) : bytes[i];
  }
  return r;
}

void write_pgm(const fs::path& path, const Raster& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write raster '" + path.string() + "'");
  out << "P5\n" << r.width << ' ' << r.height << '\n' << r.maxval << '\n';
  const bool wide = r.maxval > 255;
  std::vector<unsigned char> bytes;
  bytes.reserve(r.pixels.size() * (wide ? 2 : 1));
  for (std::uint16_t p : r.pixels) {
    if (wide) bytes.push_back(static_cast<unsigned char>(p >> 8));
    bytes.push_back(static_cast<unsigned char>(p & 0xff));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing raster '" + path.string() + "'");
}

Image to_image(const Raster& r) {
  // Rescale by the largest value the sample width can represent.
  const double scale = r.maxval > 255 ? 65535.0 : 255.0;
  Image img(r.height, r.width);
  auto dst = img.values();
  for (std::size_t i = 0; i < r.pixels.size(); ++i) dst[i] = std::min(1.0, r.pixels[i] / scale);
  return img;
}

Raster from_image(const Image& img) {
  Raster r{img.height(), img.width(), 65535, {}};
  r.pixels.reserve(img.size());
  for (double v : img.values()) {
    r.pixels.push_back(static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0)));
  }
  return r;
}

LabelMap to_labels(const Raster& r) {
  LabelMap labels(r.height, r.width);
  auto dst = labels.values();
  for (std::size_t i = 0; i < r.pixels.size(); ++i) dst[i] = r.pixels[i];
  return labels;
}

Raster from_labels(const LabelMap& labels, int num_classes) {
  Raster r{labels.height(), labels.width(), num_classes > 256 ? 65535 : 255, {}};
  r.pixels.reserve(labels.size());
  for (int v : labels.values()) r.pixels.push_back(static_cast<std::uint16_t>(v));
  return r;
}

}  // namespace raster

// ---------------------------------------------------------------- manifests

Dataset load_dataset(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw LoadError("cannot open manifest '" + manifest_path.string() + "'");
  Dataset ds;
  ds.name = manifest_path.stem().string();

  std::string header;
  if (!std::getline(in, header) || header.rfind("C=", 0) != 0) {
    throw LoadError("manifest '" + manifest_path.string() + "' must start with 'C=<num_classes>'");
  }
  try {
    ds.num_classes = std::stoi(header.substr(2));
  } catch (const std::exception&) {
    throw LoadError("bad class count in manifest '" + manifest_path.string() + "'");
  }

  const fs::path base = manifest_path.parent_path();
  std::string line;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string id, image_path, label_path;
    if (!std::getline(fields, id, '\t') || !std::getline(fields, image_path, '\t') ||
        !std::getline(fields, label_path, '\t')) {
      throw LoadError("manifest '" + manifest_path.string() + "' line " + std::to_string(line_no) +
                      ": expected three tab-separated fields");
    }
    auto resolve = [&](const std::string& p) {
      fs::path q(p);
      return q.is_absolute() ? q : base / q;
    };
    ImageSample s;
    s.id = id;
    s.image = raster::to_image(raster::read_pgm(resolve(image_path)));
    s.label = raster::to_labels(raster::read_pgm(resolve(label_path)));
    if (!s.image.same_shape(s.label)) {
      throw ValidationError("sample '" + id + "': image is " + std::to_string(s.image.height()) + "x" +
                            std::to_string(s.image.width()) + " but label is " +
                            std::to_string(s.label.height()) + "x" + std::to_string(s.label.width()));
    }
    ds.samples.push_back(std::move(s));
  }
  validate_dataset(ds);
  return ds;
}

void save_dataset(const Dataset& ds, const fs::path& manifest_path) {
  const fs::path dir = manifest_path.parent_path().empty() ? fs::path(".") : manifest_path.parent_path();
  if (!fs::is_directory(dir)) throw IoError("output directory '" + dir.string() + "' does not exist");
  const std::string stem = manifest_path.stem().string();
  const fs::path raster_dir = dir / (stem + "_rasters");
  std::error_code ec;
  fs::create_directories(raster_dir, ec);
  if (ec) throw IoError("cannot create '" + raster_dir.string() + "': " + ec.message());

  std::ostringstream manifest;
  manifest << "C=" << ds.num_classes << '\n';
  for (const auto& s : ds.samples) {
    const std::string image_rel = stem + "_rasters/" + s.id + "_image.pgm";
    const std::string label_rel = stem + "_rasters/" + s.id + "_label.pgm";
    raster::write_pgm(dir / image_rel, raster::from_image(s.image));
    raster::write_pgm(dir / label_rel, raster::from_labels(s.label, ds.num_classes));
    manifest << s.id << '\t' << image_rel << '\t' << label_rel << '\n';
  }
  std::ofstream out(manifest_path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest '" + manifest_path.string() + "'");
  out << manifest.str();
}

// ---------------------------------------------------------------- synthetic

namespace {

struct Blob {
  double cy, cx, ry, rx, angle, level, shade;
};

// Normalized elliptical radius; <= 1 inside the blob.
double blob_radius(const Blob& b, double y, double x) {
  const double dy = y - b.cy, dx = x - b.cx;
  const double c = std::cos(b.angle), s = std::sin(b.angle);
  const double u = (c * dx + s * dy) / b.rx;
  const double v = (-s * dx + c * dy) / b.ry;
  return std::sqrt(u * u + v * v);
}

ImageSample make_sample(int index, int H, int W, int C, SplitMix64& rng) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  ImageSample s;
  char id[32];
  std::snprintf(id, sizeof id, "syn%05d", index);
  s.id = id;
  s.image = Image(H, W);
  s.label = LabelMap(H, W, 0);

  // Background: mid-grey base with two faint, exactly periodic gratings, so
  // its spectrum has a few dominant directions.
  const double base = rng.uniform(0.27, 0.33);
  struct Grating { int fx, fy; double amp, phase; };
  Grating g[2];
  for (auto& gr : g) {
    gr.fx = 3 + static_cast<int>(rng.below(5));
    gr.fy = static_cast<int>(rng.below(4));
    if (rng.below(2) == 1) std::swap(gr.fx, gr.fy);
    gr.amp = rng.uniform(0.01, 0.02);
    gr.phase = rng.uniform(0.0, kTwoPi);
  }
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double v = base;
      for (const auto& gr : g) {
        v += gr.amp * std::sin(kTwoPi * (gr.fx * static_cast<double>(x) / W +
                                         gr.fy * static_cast<double>(y) / H) + gr.phase);
      }
      s.image(y, x) = v;
    }
  }

  // One smooth blob per foreground class, brighter for higher class ids. The
  // steps are small on purpose: a few multiples of a typical attack budget.
  const double step = std::min(0.08, 0.6 / static_cast<double>(C - 1));
  const double min_r = std::max(3.0, std::min(H, W) / 10.0);
  const double max_r = std::max(min_r + 1.0, std::min(H, W) / 5.0);
  for (int k = 1; k < C; ++k) {
    Blob b;
    b.ry = rng.uniform(min_r, max_r);
    b.rx = rng.uniform(min_r, max_r);
    b.cy = rng.uniform(max_r, H - max_r);
    b.cx = rng.uniform(max_r, W - max_r);
    b.angle = rng.uniform(0.0, std::numbers::pi);
    b.level = base + step * k;
    b.shade = rng.uniform(-0.05, 0.05);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const double r = blob_radius(b, y, x);
        // Soft edge over roughly one pixel around r = 1.
        const double edge = 1.0 / (1.0 + std::exp((r - 1.0) * std::min(b.rx, b.ry) * 2.5));
        const double inner = b.level + b.shade * (1.0 - r);
        s.image(y, x) = s.image(y, x) * (1.0 - edge) + inner * edge;
        if (r <= 1.0) s.label(y, x) = k;
      }
    }
  }
  // Mild sensor noise (sum of three uniforms, roughly Gaussian).
  for (double& v : s.image.values()) v += 0.01 * (rng.uniform() + rng.uniform() + rng.uniform() - 1.5);
  for (double& v : s.image.values()) v = quantize16(v);
  return s;
}

}  // namespace

Dataset generate_synthetic_dataset(int n, int height, int width, int num_classes, std::uint64_t seed) {
  if (n < 1) throw ParameterError("synthetic dataset needs n >= 1");
  if (height < 16 || width < 16) throw ParameterError("synthetic images must be at least 16x16");
  if (num_classes < 2) throw ParameterError("synthetic dataset needs at least 2 classes");
  Dataset ds;
  ds.name = "synthetic";
  ds.num_classes = num_classes;
  ds.samples.reserve(static_cast<std::size_t>(n));
  SplitMix64 rng(seed);
  for (int i = 0; i < n; ++i) ds.samples.push_back(make_sample(i, height, width, num_classes, rng));
  return ds;
}

// ---------------------------------------------------------------- splitting

SplitResult split_dataset(const Dataset& ds, const SplitSpec& spec) {
  for (double f : {spec.train_fraction, spec.val_fraction, spec.test_fraction}) {
    if (!(f > 0.0 && f < 1.0)) throw SplitError("split fractions must each lie in (0,1)");
  }
  if (std::abs(spec.train_fraction + spec.val_fraction + spec.test_fraction - 1.0) > 1e-9) {
    throw SplitError("split fractions must sum to 1");
  }
  const std::size_t n = ds.size();
  const auto count = [n](double f) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * f + 1e-9));
  };
  const std::size_t n_val = count(spec.val_fraction);
  const std::size_t n_test = count(spec.test_fraction);
  if (n_val == 0 || n_test == 0 || n_val + n_test >= n) {
    throw SplitError("dataset of " + std::to_string(n) + " samples leaves an empty split");
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  SplitMix64 rng(spec.seed);
  shuffle_with(order, rng);

  SplitResult out;
  for (Dataset* part : {&out.train, &out.val, &out.test}) part->num_classes = ds.num_classes;
  out.train.name = ds.name + "_train";
  out.val.name = ds.name + "_val";
  out.test.name = ds.name + "_test";
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = ds.samples[order[i]];
    if (i < n_val) out.val.samples.push_back(s);
    else if (i < n_val + n_test) out.test.samples.push_back(s);
    else out.train.samples.push_back(s);
  }
  return out;
}

}  // namespace freqshield
