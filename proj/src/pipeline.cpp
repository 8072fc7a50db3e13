#include "freqshield/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "freqshield/error.hpp"
#include "freqshield/metrics.hpp"

namespace freqshield {

namespace {

std::string shape_str(int h, int w) { return std::to_string(h) + "x" + std::to_string(w); }

// Input shape a component was bound to, or {0,0} when unbound.
std::pair<int, int> bound_shape(const ArchitectureSpec& a) { return {a.input_height, a.input_width}; }

}  // namespace

DefenseAssembly::DefenseAssembly(DetectorBundle detector, ReformerBundle reformer, SegmenterModel segmenter,
                                 std::string id)
    : detector_(std::move(detector)), reformer_(std::move(reformer)), segmenter_(std::move(segmenter)),
      id_(std::move(id)) {
  if (!detector_.model.valid()) throw AssemblyError(id_ + ": detector has no trained network");
  if (!reformer_.model.valid()) throw AssemblyError(id_ + ": reformer has no trained network");
  if (!segmenter_.network_ptr()) throw AssemblyError(id_ + ": segmenter has no trained network");
  if (!detector_.threshold_t_re) throw AssemblyError(id_ + ": detector '" + detector_.name + "' is not calibrated");
  if (reformer_.model.mode() != RepresentationMode::Spatial) {
    throw AssemblyError(id_ + ": reformer must operate on spatial images");
  }
  if (detector_.model.architecture().in_channels != 1 || reformer_.model.architecture().in_channels != 1 ||
      segmenter_.architecture().in_channels != 1) {
    throw AssemblyError(id_ + ": all components must take single-channel images");
  }

  // Every bound input shape must agree; unbound components accept any legal shape.
  const std::pair<int, int> shapes[] = {bound_shape(detector_.model.architecture()),
                                        bound_shape(reformer_.model.architecture()),
                                        bound_shape(segmenter_.architecture())};
  const char* names[] = {"detector", "reformer", "segmenter"};
  std::pair<int, int> ref{0, 0};
  const char* ref_name = nullptr;
  for (int i = 0; i < 3; ++i) {
    if (shapes[i].first == 0) continue;
    if (!ref_name) {
      ref = shapes[i];
      ref_name = names[i];
    } else if (shapes[i] != ref) {
      throw AssemblyError(id_ + ": " + names[i] + " expects " + shape_str(shapes[i].first, shapes[i].second) +
                          " inputs but " + ref_name + " expects " + shape_str(ref.first, ref.second));
    }
  }
}

DefenseOutput defend_and_segment(const DefenseAssembly& assembly, std::span<const Image> images) {
  DefenseOutput out;
  if (images.empty()) return out;
  DetectionResult det = detect(assembly.detector(), images);
  out.scores = std::move(det.scores);
  out.pass_indices = std::move(det.pass_indices);
  if (out.pass_indices.empty()) return out;

  std::vector<Image> passed;
  passed.reserve(out.pass_indices.size());
  for (std::size_t i : out.pass_indices) passed.push_back(images[i]);
  const std::vector<Image> reformed = reform(assembly.reformer(), passed);
  out.predictions = assembly.segmenter().predict(reformed);
  return out;
}

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::Dice: return "DICE";
    case Metric::RocAuc: return "ROC_AUC";
    case Metric::Fpr: return "FPR";
    case Metric::PassRate: return "PASS_RATE";
  }
  return "UNKNOWN";
}

Metric metric_from_string(std::string_view s) {
  if (s == "DICE") return Metric::Dice;
  if (s == "ROC_AUC") return Metric::RocAuc;
  if (s == "FPR") return Metric::Fpr;
  if (s == "PASS_RATE") return Metric::PassRate;
  throw FormatError("unknown metric '" + std::string(s) + "'");
}

MetricRecord evaluate_detector(const DetectorBundle& bundle, const MixedSet& mixed, Provenance provenance) {
  if (mixed.adversarial.size() != mixed.data.size()) {
    throw ValidationError("mixed set has " + std::to_string(mixed.data.size()) + " samples but " +
                          std::to_string(mixed.adversarial.size()) + " flags");
  }
  const auto images = mixed.data.images();
  const auto scores = reconstruction_errors(bundle, images);
  if (provenance.detector.empty()) provenance.detector = bundle.name;
  if (provenance.dataset.empty()) provenance.dataset = mixed.data.name;
  return {Metric::RocAuc, roc_auc(scores, mixed.adversarial), std::move(provenance)};
}

double mean_dice(std::span<const LabelMap> predictions, const Dataset& truth, std::span<const std::size_t> indices) {
  if (predictions.size() != indices.size()) {
    throw ShapeError(std::to_string(predictions.size()) + " predictions for " + std::to_string(indices.size()) +
                     " selected samples");
  }
  if (indices.empty()) throw DegenerateInputError("mean Dice over zero samples");
  double sum = 0.0;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    sum += dice_score(predictions[k], truth.samples.at(indices[k]).label, truth.num_classes);
  }
  return sum / static_cast<double>(indices.size());
}

// ---------------------------------------------------------------- grid

namespace {

template <typename T>
const T& find_named(const std::vector<Named<T>>& items, const std::string& name, const char* what) {
  for (const auto& [n, item] : items) {
    if (n == name) return item;
  }
  throw ConfigurationError(std::string("combination refers to unknown ") + what + " '" + name + "'");
}

// Adversarial samples of one attack set that target the given segmenter.
Dataset adversarial_subset(const AttackSet& set, const std::string& segmenter) {
  Dataset out;
  out.name = set.name + "/" + segmenter;
  out.num_classes = set.num_classes;
  for (const auto& s : set.samples) {
    if (s.source_model_id == segmenter) out.samples.push_back({s.id(), s.adversarial_image, s.clean.label});
  }
  return out;
}

struct CellOutcome {
  double pass_rate = 0.0;
  std::optional<double> dice;
};

CellOutcome run_cell(const DefenseAssembly& assembly, const Dataset& data) {
  const auto images = data.images();
  const DefenseOutput out = defend_and_segment(assembly, images);
  CellOutcome c;
  c.pass_rate = static_cast<double>(out.pass_indices.size()) / static_cast<double>(data.size());
  if (!out.pass_indices.empty()) c.dice = mean_dice(out.predictions, data, out.pass_indices);
  return c;
}

}  // namespace

std::vector<MetricRecord> run_combination_grid(GridSpec spec) {
  if (!(spec.t_fp > 0.0 && spec.t_fp < 1.0)) throw ParameterError("t_fp must lie in (0,1)");
  if (spec.clean_test.empty()) throw ValidationError("grid needs a non-empty clean test set");

  std::vector<std::pair<std::string, std::string>> pairs = spec.combinations;
  if (pairs.empty()) {
    for (const auto& [d, _] : spec.detectors)
      for (const auto& [r, __] : spec.reformers) pairs.emplace_back(d, r);
  }
  for (const auto& [d, r] : pairs) {
    find_named(spec.detectors, d, "detector");
    find_named(spec.reformers, r, "reformer");
  }

  for (auto& [name, det] : spec.detectors) {
    try {
      calibrate_threshold(det, spec.clean_val, spec.t_fp);
    } catch (const Error& e) {
      throw StateError("calibrating detector '" + name + "': " + e.what());
    }
  }

  std::vector<MetricRecord> records;
  auto emit = [&](Metric m, double v, const Provenance& p) { records.push_back({m, v, p}); };

  for (const auto& [seg_name, segmenter] : spec.segmenters) {
    const std::vector<LabelMap> clean_preds = segmenter.predict(spec.clean_test.images());
    std::vector<std::size_t> all(spec.clean_test.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const double clean_dice = mean_dice(clean_preds, spec.clean_test, all);

    for (const auto& attack : spec.attack_sets) {
      const Dataset adv = adversarial_subset(attack, seg_name);
      if (adv.empty()) continue;

      Provenance base{0, "0: no defense", "none", "none", seg_name, attack.name, adv.name, spec.t_fp, spec.seed};
      std::vector<std::size_t> idx(adv.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      emit(Metric::Dice, mean_dice(segmenter.predict(adv.images()), adv, idx), base);
      emit(Metric::PassRate, 1.0, base);
      Provenance base_clean = base;
      base_clean.dataset = spec.clean_test.name;
      emit(Metric::Dice, clean_dice, base_clean);
      emit(Metric::PassRate, 1.0, base_clean);

      for (std::size_t c = 0; c < pairs.size(); ++c) {
        const auto& [d_name, r_name] = pairs[c];
        const int combo = static_cast<int>(c) + 1;
        const std::string id = std::to_string(combo) + ": " + d_name + " + " + r_name;
        Provenance p{combo, id, d_name, r_name, seg_name, attack.name, adv.name, spec.t_fp, spec.seed};
        try {
          const DefenseAssembly assembly(find_named(spec.detectors, d_name, "detector"),
                                         find_named(spec.reformers, r_name, "reformer"), segmenter, id);
          const CellOutcome a = run_cell(assembly, adv);
          if (a.dice) emit(Metric::Dice, *a.dice, p);
          emit(Metric::PassRate, a.pass_rate, p);

          Provenance pc = p;
          pc.dataset = spec.clean_test.name;
          const CellOutcome cl = run_cell(assembly, spec.clean_test);
          if (cl.dice) emit(Metric::Dice, *cl.dice, pc);
          emit(Metric::PassRate, cl.pass_rate, pc);
        } catch (const Error& e) {
          throw StateError("combination '" + id + "', segmenter '" + seg_name + "', attack '" + attack.name +
                           "': " + e.what());
        }
      }
    }
  }

  std::stable_sort(records.begin(), records.end(),
                   [](const MetricRecord& a, const MetricRecord& b) { return a.config.combination < b.config.combination; });
  return records;
}

std::size_t count_combinations(std::span<const MetricRecord> records) {
  std::vector<int> ids;
  for (const auto& r : records) ids.push_back(r.config.combination);
  std::sort(ids.begin(), ids.end());
  return static_cast<std::size_t>(std::unique(ids.begin(), ids.end()) - ids.begin());
}

// ---------------------------------------------------------------- tables

namespace {

constexpr const char* kTableHeader = "combination\tdetector\treformer\tsegmenter\tattack\tdataset\tmetric\tvalue\tt_fp\tseed";

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(10);
  o << v;
  return o.str();
}

}  // namespace

void write_results_table(std::span<const MetricRecord> records, const std::filesystem::path& path) {
  std::vector<MetricRecord> sorted(records.begin(), records.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const MetricRecord& a, const MetricRecord& b) { return a.config.combination < b.config.combination; });
  std::ofstream out(path);
  if (!out) throw IoError("cannot write results table '" + path.string() + "'");
  out << kTableHeader << '\n';
  for (const auto& r : sorted) {
    const auto& c = r.config;
    out << c.combination << '\t' << c.detector << '\t' << c.reformer << '\t' << c.segmenter << '\t' << c.attack
        << '\t' << c.dataset << '\t' << to_string(r.metric) << '\t' << fmt(r.value) << '\t' << fmt(c.t_fp) << '\t'
        << c.seed << '\n';
  }
  if (!out) throw IoError("failed writing results table '" + path.string() + "'");
}

std::vector<MetricRecord> read_results_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open results table '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != kTableHeader) {
    throw FormatError("'" + path.string() + "' does not start with the results header");
  }
  std::vector<MetricRecord> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ss(line);
    for (std::string tok; std::getline(ss, tok, '\t');) f.push_back(tok);
    if (f.size() != 10) {
      throw FormatError(path.string() + " line " + std::to_string(line_no) + ": expected 10 fields");
    }
    try {
      MetricRecord r;
      r.config.combination = std::stoi(f[0]);
      r.config.detector = f[1];
      r.config.reformer = f[2];
      r.config.segmenter = f[3];
      r.config.attack = f[4];
      r.config.dataset = f[5];
      r.metric = metric_from_string(f[6]);
      r.value = std::stod(f[7]);
      r.config.t_fp = std::stod(f[8]);
      r.config.seed = std::stoull(f[9]);
      r.config.assembly_id = r.config.combination == 0
                                 ? "0: no defense"
                                 : std::to_string(r.config.combination) + ": " + f[1] + " + " + f[2];
      out.push_back(std::move(r));
    } catch (const std::invalid_argument&) {
      throw FormatError(path.string() + " line " + std::to_string(line_no) + ": malformed number");
    } catch (const std::out_of_range&) {
      throw FormatError(path.string() + " line " + std::to_string(line_no) + ": number out of range");
    }
  }
  return out;
}

void write_plot_data(std::span<const MetricRecord> records, const std::filesystem::path& path) {
  // Adversarial rows only: the clean rows carry the clean test dataset name.
  std::map<std::pair<int, std::string>, std::pair<double, int>> acc;
  std::map<int, std::string> labels;
  for (const auto& r : records) {
    if (r.metric != Metric::Dice || r.config.dataset.find('/') == std::string::npos) continue;
    auto& [sum, n] = acc[{r.config.combination, r.config.segmenter}];
    sum += r.value;
    ++n;
    labels[r.config.combination] = r.config.combination == 0 ? "no defense" : r.config.detector + " + " + r.config.reformer;
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write plot data '" + path.string() + "'");
  out << "combination,label,segmenter,mean_adversarial_dice\n";
  for (const auto& [key, v] : acc) {
    out << key.first << ",\"" << labels[key.first] << "\"," << key.second << ',' << fmt(v.first / v.second) << '\n';
  }
}

}  // namespace freqshield
