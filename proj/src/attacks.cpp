#include "freqshield/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "freqshield/error.hpp"
#include "freqshield/metrics.hpp"

namespace freqshield {

namespace fs = std::filesystem;

std::string_view to_string(AttackKind k) { return k == AttackKind::DAG ? "dag" : "fgsm"; }
std::string_view to_string(TargetPolicy p) { return p == TargetPolicy::LeastLikely ? "least_likely" : "random_other"; }

AttackKind attack_kind_from_string(std::string_view s) {
  if (s == "dag" || s == "DAG") return AttackKind::DAG;
  if (s == "fgsm" || s == "FGSM") return AttackKind::FGSM;
  throw ParameterError("unknown attack kind '" + std::string(s) + "'");
}

TargetPolicy target_policy_from_string(std::string_view s) {
  if (s == "least_likely") return TargetPolicy::LeastLikely;
  if (s == "random_other") return TargetPolicy::RandomOther;
  throw ParameterError("unknown target policy '" + std::string(s) + "'");
}

std::string AttackConfig::name() const {
  std::ostringstream os;
  os << to_string(kind) << "_eps" << epsilon;
  return os.str();
}

void validate_attack_config(const AttackConfig& cfg) {
  const double budget = cfg.kind == AttackKind::FGSM ? std::abs(cfg.epsilon) : cfg.epsilon;
  if (!(budget >= 0.0 && budget <= 0.1)) throw ParameterError("attack epsilon must lie in [0, 0.1]");
  if (cfg.max_iterations < 1) throw ParameterError("max_iterations must be >= 1");
  if (!(cfg.step_gamma > 0.0)) throw ParameterError("step_gamma must be > 0");
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool on_grid(double v) { return std::round(v * 65535.0) / 65535.0 == v; }

// Clips to the budget and [0,1], then snaps to the 16-bit grid by truncating
// the perturbation toward the clean value so the budget survives storage.
Image finalize(const Image& clean, const Image& raw, double budget) {
  Image out(clean.height(), clean.width());
  auto c = clean.values();
  auto r = raw.values();
  auto o = out.values();
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double a = std::clamp(c[i] + std::clamp(r[i] - c[i], -budget, budget), 0.0, 1.0);
    if (on_grid(c[i])) {
      const double q = std::round(c[i] * 65535.0) + std::trunc((a - c[i]) * 65535.0);
      o[i] = q / 65535.0;
    } else {
      o[i] = a;
    }
  }
  return out;
}

void require_compatible(const SegmenterModel& model, const ImageSample& sample) {
  if (!sample.image.same_shape(sample.label)) throw ShapeError("sample '" + sample.id + "' image/label mismatch");
  for (int l : sample.label.values()) {
    if (l < 0 || l >= model.num_classes()) {
      throw ConfigurationError("sample '" + sample.id + "' has labels outside the model's class range");
    }
  }
}

double dice_drop(const SegmenterModel& model, const ImageSample& sample, const Image& adv) {
  const std::vector<Image> both{sample.image, adv};
  const auto preds = model.predict(both);
  return dice_score(preds[0], sample.label, model.num_classes()) -
         dice_score(preds[1], sample.label, model.num_classes());
}

torch::Tensor choose_targets(const torch::Tensor& logits, const torch::Tensor& truth, const AttackConfig& cfg,
                             const std::string& sample_id) {
  const int64_t C = logits.size(1);
  if (cfg.target_policy == TargetPolicy::LeastLikely) {
    auto t = logits.argmin(1);
    // Degenerate ties could pick the true class; move those to the next one.
    auto same = t.eq(truth);
    return torch::where(same, (truth + 1).remainder(C), t);
  }
  SplitMix64 rng(cfg.seed ^ fnv1a(sample_id));
  auto t = torch::empty_like(truth);
  auto tv = t.accessor<int64_t, 3>();
  auto gv = truth.accessor<int64_t, 3>();
  for (int64_t y = 0; y < truth.size(1); ++y) {
    for (int64_t x = 0; x < truth.size(2); ++x) {
      const auto offset = 1 + static_cast<int64_t>(rng.below(static_cast<std::uint64_t>(C - 1)));
      tv[0][y][x] = (gv[0][y][x] + offset) % C;
    }
  }
  return t;
}

}  // namespace

double linf_distance(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ShapeError("linf_distance: shape mismatch");
  double m = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) m = std::max(m, std::abs(av[i] - bv[i]));
  return m;
}

bool within_budget(const AdversarialSample& s) {
  const double budget = std::abs(s.attack.epsilon);
  if (linf_distance(s.adversarial_image, s.clean.image) > budget + 1e-12) return false;
  return std::all_of(s.adversarial_image.values().begin(), s.adversarial_image.values().end(),
                     [](double v) { return v >= 0.0 && v <= 1.0; });
}

AdversarialSample dag_attack(const SegmenterModel& model, const ImageSample& sample, const AttackConfig& cfg,
                             std::string model_id) {
  if (cfg.kind != AttackKind::DAG) throw ConfigurationError("dag_attack called with a non-DAG config");
  validate_attack_config(cfg);
  require_compatible(model, sample);

  AdversarialSample out;
  out.clean = sample;
  out.source_model_id = std::move(model_id);
  out.attack = cfg;

  const auto x0 = image_to_tensor(sample.image);
  const auto truth = labels_to_tensor(std::span<const LabelMap>(&sample.label, 1));
  torch::Tensor targets;
  {
    torch::NoGradGuard no_grad;
    targets = choose_targets(model.logits(x0), truth, cfg, sample.id);
  }
  const auto truth_idx = truth.unsqueeze(1);
  const auto target_idx = targets.unsqueeze(1);
  const float eps = static_cast<float>(cfg.epsilon);
  const auto lo = (x0 - eps).clamp(0.0, 1.0);
  const auto hi = (x0 + eps).clamp(0.0, 1.0);

  // Pixels leave the active set once misclassified and do not re-enter.
  auto active = torch::ones_like(truth, torch::kBool);
  auto adv = x0.clone();
  for (int it = 0; it < cfg.max_iterations; ++it) {
    auto x = adv.detach().requires_grad_(true);
    auto z = model.logits(x);
    active = active.logical_and(z.argmax(1).eq(truth));
    const auto count = active.sum().item<int64_t>();
    out.active_counts.push_back(count);
    if (count == 0) break;
    auto diff = z.gather(1, target_idx) - z.gather(1, truth_idx);
    auto objective = (diff.squeeze(1) * active.to(diff.dtype())).sum();
    auto grad = torch::autograd::grad({objective}, {x})[0];
    const double gmax = grad.abs().max().item<double>();
    if (!(gmax > 0.0)) break;
    torch::NoGradGuard no_grad;
    adv = adv + grad * static_cast<float>(cfg.step_gamma / gmax);
    adv = torch::max(torch::min(adv, hi), lo);
  }
  out.adversarial_image = finalize(sample.image, tensor_to_image(adv), cfg.epsilon);
  out.achieved_dice_drop = dice_drop(model, sample, out.adversarial_image);
  return out;
}

AdversarialSample fgsm_attack(const SegmenterModel& model, const ImageSample& sample, const AttackConfig& cfg,
                              std::string model_id) {
  if (cfg.kind != AttackKind::FGSM) throw ConfigurationError("fgsm_attack called with a non-FGSM config");
  validate_attack_config(cfg);
  require_compatible(model, sample);

  AdversarialSample out;
  out.clean = sample;
  out.source_model_id = std::move(model_id);
  out.attack = cfg;

  auto x = image_to_tensor(sample.image).requires_grad_(true);
  const auto truth = labels_to_tensor(std::span<const LabelMap>(&sample.label, 1));
  const auto weights = torch::ones({model.num_classes()}, torch::kFloat32);
  auto loss = segmentation_loss(model.probabilities(x), truth, weights);
  auto grad = torch::autograd::grad({loss}, {x})[0];

  Image raw = sample.image;
  const Image sign = tensor_to_image(grad.sign());
  auto rv = raw.values();
  auto sv = sign.values();
  for (std::size_t i = 0; i < rv.size(); ++i) rv[i] += cfg.epsilon * sv[i];
  out.adversarial_image = finalize(sample.image, raw, std::abs(cfg.epsilon));
  out.achieved_dice_drop = dice_drop(model, sample, out.adversarial_image);
  return out;
}

AdversarialSample run_attack(const SegmenterModel& model, const ImageSample& sample, const AttackConfig& cfg,
                             std::string model_id) {
  return cfg.kind == AttackKind::DAG ? dag_attack(model, sample, cfg, std::move(model_id))
                                     : fgsm_attack(model, sample, cfg, std::move(model_id));
}

Dataset AttackSet::to_dataset() const {
  Dataset ds;
  ds.name = name;
  ds.num_classes = num_classes;
  ds.samples.reserve(samples.size());
  for (const auto& s : samples) ds.samples.push_back({s.id(), s.adversarial_image, s.clean.label});
  return ds;
}

AttackSet craft_attack_set(const std::vector<NamedSegmenter>& models, const Dataset& clean, const AttackConfig& cfg) {
  if (models.empty()) throw ParameterError("craft_attack_set needs at least one target model");
  AttackSet set;
  set.name = clean.name + "_" + cfg.name();
  set.num_classes = clean.num_classes;
  for (const auto& [id, model] : models) {
    for (const auto& sample : clean.samples) {
      try {
        set.samples.push_back(run_attack(*model, sample, cfg, id));
      } catch (const Error& e) {
        throw AttackError("sample '" + sample.id + "' against '" + id + "': " + e.what());
      }
    }
  }
  return set;
}

// ---------------------------------------------------------------- storage

namespace {

nlohmann::json attack_to_json(const AttackConfig& c) {
  return {{"kind", std::string(to_string(c.kind))},
          {"epsilon", c.epsilon},
          {"max_iterations", c.max_iterations},
          {"step_gamma", c.step_gamma},
          {"target_policy", std::string(to_string(c.target_policy))},
          {"seed", c.seed}};
}

AttackConfig attack_from_json(const nlohmann::json& j) {
  AttackConfig c;
  c.kind = attack_kind_from_string(j.at("kind").get<std::string>());
  c.epsilon = j.at("epsilon").get<double>();
  c.max_iterations = j.at("max_iterations").get<int>();
  c.step_gamma = j.at("step_gamma").get<double>();
  c.target_policy = target_policy_from_string(j.at("target_policy").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

fs::path sidecar_dir(const fs::path& manifest) {
  return manifest.parent_path() / (manifest.stem().string() + "_meta");
}

}  // namespace

void save_attack_set(const AttackSet& set, const fs::path& manifest_path) {
  save_dataset(set.to_dataset(), manifest_path);
  const fs::path dir = sidecar_dir(manifest_path);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "'");
  for (const auto& s : set.samples) {
    nlohmann::json j;
    j["id"] = s.id();
    j["clean_id"] = s.clean.id;
    j["source_model_id"] = s.source_model_id;
    j["attack"] = attack_to_json(s.attack);
    j["linf"] = linf_distance(s.adversarial_image, s.clean.image);
    j["within_budget"] = within_budget(s);
    j["achieved_dice_drop"] = s.achieved_dice_drop;
    j["active_counts"] = s.active_counts;
    std::ofstream out(dir / (s.id() + ".json"));
    if (!out) throw IoError("cannot write sidecar for '" + s.id() + "'");
    out << j.dump(2) << '\n';
  }
}

AttackSet load_attack_set(const fs::path& manifest_path, const Dataset& clean) {
  const Dataset adv = load_dataset(manifest_path);
  std::map<std::string, const ImageSample*> by_id;
  for (const auto& s : clean.samples) by_id[s.id] = &s;

  AttackSet set;
  set.name = adv.name;
  set.num_classes = adv.num_classes;
  const fs::path dir = sidecar_dir(manifest_path);
  for (const auto& s : adv.samples) {
    std::ifstream in(dir / (s.id + ".json"));
    if (!in) throw LoadError("missing sidecar metadata for adversarial sample '" + s.id + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("sidecar for '" + s.id + "': " + e.what());
    }
    const auto clean_id = j.at("clean_id").get<std::string>();
    auto it = by_id.find(clean_id);
    if (it == by_id.end()) throw LoadError("adversarial sample '" + s.id + "' refers to unknown clean id '" + clean_id + "'");
    AdversarialSample a;
    a.clean = *it->second;
    a.adversarial_image = s.image;
    a.source_model_id = j.at("source_model_id").get<std::string>();
    a.attack = attack_from_json(j.at("attack"));
    a.achieved_dice_drop = j.at("achieved_dice_drop").get<double>();
    a.active_counts = j.at("active_counts").get<std::vector<std::int64_t>>();
    set.samples.push_back(std::move(a));
  }
  return set;
}

std::size_t MixedSet::positives() const {
  return static_cast<std::size_t>(std::count(adversarial.begin(), adversarial.end(), true));
}

MixedSet build_mixed_set(const Dataset& clean, const Dataset& adversarial, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ParameterError("mixed-set ratio must lie in (0,1)");
  if (clean.empty() || adversarial.empty()) throw CompositionError("mixed set needs clean and adversarial samples");
  const double by_pos = static_cast<double>(adversarial.size()) / ratio;
  const double by_neg = static_cast<double>(clean.size()) / (1.0 - ratio);
  const auto total = static_cast<std::size_t>(std::floor(std::min(by_pos, by_neg) + 1e-9));
  auto n_pos = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(total)));
  n_pos = std::min(n_pos, adversarial.size());
  const std::size_t n_neg = std::min(total - n_pos, clean.size());
  if (n_pos == 0 || n_neg == 0) {
    throw CompositionError("not enough samples for an adversarial fraction of " + std::to_string(ratio));
  }

  SplitMix64 rng(seed);
  auto pick = [&rng](const Dataset& ds, std::size_t k) {
    std::vector<std::size_t> idx(ds.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    shuffle_with(idx, rng);
    idx.resize(k);
    return idx;
  };
  const auto neg = pick(clean, n_neg);
  const auto pos = pick(adversarial, n_pos);

  std::vector<std::pair<const ImageSample*, bool>> all;
  for (auto i : neg) all.emplace_back(&clean.samples[i], false);
  for (auto i : pos) all.emplace_back(&adversarial.samples[i], true);
  shuffle_with(all, rng);

  MixedSet m;
  m.data.name = clean.name + "_mixed";
  m.data.num_classes = clean.num_classes;
  for (const auto& [s, flag] : all) {
    m.data.samples.push_back(*s);
    m.adversarial.push_back(flag);
  }
  validate_dataset(m.data);
  return m;
}

void save_mixed_set(const MixedSet& set, const fs::path& manifest_path) {
  save_dataset(set.data, manifest_path);
  const fs::path flags = manifest_path.parent_path() / (manifest_path.stem().string() + "_flags.tsv");
  std::ofstream out(flags);
  if (!out) throw IoError("cannot write '" + flags.string() + "'");
  for (std::size_t i = 0; i < set.data.size(); ++i) {
    out << set.data.samples[i].id << '\t' << (set.adversarial[i] ? 1 : 0) << '\n';
  }
}

MixedSet load_mixed_set(const fs::path& manifest_path) {
  MixedSet m;
  m.data = load_dataset(manifest_path);
  const fs::path flags = manifest_path.parent_path() / (manifest_path.stem().string() + "_flags.tsv");
  std::ifstream in(flags);
  if (!in) throw LoadError("missing flags file '" + flags.string() + "'");
  std::map<std::string, bool> by_id;
  std::string id;
  int flag = 0;
  while (in >> id >> flag) by_id[id] = flag != 0;
  for (const auto& s : m.data.samples) {
    auto it = by_id.find(s.id);
    if (it == by_id.end()) throw FormatError("no flag recorded for mixed sample '" + s.id + "'");
    m.adversarial.push_back(it->second);
  }
  return m;
}

}  // namespace freqshield
