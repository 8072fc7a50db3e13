#include "freqshield/experiment.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <json.hpp>

#include "freqshield/error.hpp"
#include "freqshield/metrics.hpp"

namespace freqshield {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ostream* g_log = nullptr;

template <typename... Args>
void log(const Args&... args) {
  if (!g_log) return;
  ((*g_log) << ... << args) << std::endl;
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream o;
  o << std::hex << std::setw(16) << std::setfill('0') << v;
  return o.str();
}

// ---------------------------------------------------------------- config io

json to_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate}, {"epochs", t.epochs},   {"batch_size", t.batch_size},
          {"weight_decay", t.weight_decay},   {"seed", t.seed},       {"class_weights", t.class_weights}};
}

json to_json(const ModelEntry& m) {
  return {{"name", m.name},
          {"family", to_string(m.arch.family)},
          {"base_width", m.arch.base_width},
          {"depth", m.arch.depth},
          {"out_channels", m.arch.out_channels},
          {"mode", to_string(m.mode)},
          {"train", to_json(m.train)}};
}

json to_json(const AttackConfig& a) {
  return {{"kind", to_string(a.kind)},          {"epsilon", a.epsilon},
          {"max_iterations", a.max_iterations}, {"step_gamma", a.step_gamma},
          {"target_policy", to_string(a.target_policy)}, {"seed", a.seed}};
}

json dataset_json(const ExperimentConfig& c) {
  json j;
  if (c.synthetic) {
    j["synthetic"] = {{"count", c.synthetic->count},
                      {"height", c.synthetic->height},
                      {"width", c.synthetic->width},
                      {"num_classes", c.synthetic->num_classes}};
  } else {
    j["manifest"] = c.manifest.string();
    std::error_code ec;
    j["manifest_size"] = fs::exists(c.manifest, ec) ? static_cast<std::int64_t>(fs::file_size(c.manifest, ec)) : -1;
  }
  j["split"] = {{"train", c.split.train_fraction}, {"val", c.split.val_fraction}, {"test", c.split.test_fraction}, {"seed", c.split.seed}};
  j["seed"] = c.seed;
  return j;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

ModelEntry parse_model(const json& j, const json& defaults, const char* kind, int num_classes) {
  ModelEntry m;
  m.name = j.at("name").get<std::string>();
  if (m.name.empty() || m.name.find_first_of("/\\ \t") != std::string::npos) {
    throw ConfigurationError(std::string(kind) + " name '" + m.name + "' must be non-empty without spaces or slashes");
  }
  auto pick = [&](const char* key, auto fallback) {
    using T = decltype(fallback);
    return j.contains(key) ? j.at(key).get<T>() : get_or<T>(defaults, key, fallback);
  };
  m.arch.family = family_from_string(j.at("family").get<std::string>());
  m.arch.base_width = pick("base_width", 16);
  m.arch.depth = pick("depth", 4);
  m.arch.in_channels = 1;
  m.arch.out_channels = std::string_view(kind) == "target" ? num_classes : 1;
  m.mode = representation_from_string(pick("mode", std::string("spatial")));
  m.train.learning_rate = pick("learning_rate", 1e-3);
  m.train.epochs = pick("epochs", 30);
  m.train.batch_size = pick("batch_size", 8);
  m.train.weight_decay = pick("weight_decay", 1e-5);
  m.train.class_weights = pick("class_weights", std::vector<double>{});
  return m;
}

}  // namespace

void set_log_stream(std::ostream* out) { g_log = out; }

TrainWhich train_which_from_string(std::string_view s) {
  if (s == "targets") return TrainWhich::Targets;
  if (s == "detectors") return TrainWhich::Detectors;
  if (s == "reformer" || s == "reformers") return TrainWhich::Reformers;
  if (s == "all") return TrainWhich::All;
  throw ConfigurationError("train target must be targets, detectors, reformer or all, not '" + std::string(s) + "'");
}

ExperimentConfig parse_config(const std::string& json_text, const fs::path& base_dir) {
  ExperimentConfig c;
  try {
    const json j = json::parse(json_text);
    c.seed = get_or<std::uint64_t>(j, "seed", 0);
    if (j.contains("output_dir")) {
      fs::path out = j.at("output_dir").get<std::string>();
      c.output_dir = out.is_absolute() || base_dir.empty() ? out : base_dir / out;
    }

    const json& d = j.at("dataset");
    if (d.contains("synthetic")) {
      const json& s = d.at("synthetic");
      c.synthetic = SyntheticSpec{get_or(s, "count", 200), get_or(s, "height", 64), get_or(s, "width", 64),
                                  get_or(s, "num_classes", 4)};
    } else if (d.contains("manifest")) {
      fs::path m = d.at("manifest").get<std::string>();
      c.manifest = m.is_absolute() || base_dir.empty() ? m : base_dir / m;
    } else {
      throw ConfigurationError("dataset section needs 'synthetic' or 'manifest'");
    }
    if (d.contains("split")) {
      const json& s = d.at("split");
      c.split.train_fraction = get_or(s, "train", 0.7);
      c.split.val_fraction = get_or(s, "val", 0.15);
      c.split.test_fraction = get_or(s, "test", 0.15);
    }

    int num_classes = c.synthetic ? c.synthetic->num_classes : get_or(d, "num_classes", 0);
    if (!c.synthetic && num_classes == 0) {
      // Class count of a manifest dataset comes from its header line.
      std::ifstream in(c.manifest);
      std::string header;
      if (in && std::getline(in, header) && header.rfind("C=", 0) == 0) num_classes = std::atoi(header.c_str() + 2);
    }

    const json& m = j.at("models");
    const json defaults = m.value("defaults", json::object());
    for (const auto& e : m.value("targets", json::array())) c.targets.push_back(parse_model(e, defaults, "target", num_classes));
    for (const auto& e : m.value("detectors", json::array())) c.detectors.push_back(parse_model(e, defaults, "detector", num_classes));
    for (const auto& e : m.value("reformers", json::array())) c.reformers.push_back(parse_model(e, defaults, "reformer", num_classes));

    for (const auto& a : j.value("attack", json::array())) {
      AttackConfig ac;
      ac.kind = attack_kind_from_string(get_or<std::string>(a, "kind", "dag"));
      ac.epsilon = get_or(a, "epsilon", 0.03);
      ac.max_iterations = get_or(a, "max_iterations", 50);
      ac.step_gamma = get_or(a, "step_gamma", 0.005);
      ac.target_policy = target_policy_from_string(get_or<std::string>(a, "target_policy", "least_likely"));
      c.attacks.push_back(ac);
    }

    const json def = j.value("defense", json::object());
    c.t_fp = get_or(def, "t_fp", 0.05);
    c.norm_p = get_or(def, "norm_p", 2.0);
    c.mixed_ratio = get_or(def, "mixed_ratio", 0.5);
    for (const auto& pair : def.value("combinations", json::array())) {
      c.combinations.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<std::string>());
    }
    apply_seed(c, c.seed);
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("config: ") + e.what());
  } catch (const ParameterError& e) {
    throw ConfigurationError(std::string("config: ") + e.what());
  }
  validate_config(c);
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

void apply_seed(ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.split.seed = seed + 1;
  auto reseed = [&](std::vector<ModelEntry>& models, std::string_view kind) {
    for (auto& m : models) m.train.seed = fnv1a(m.name, fnv1a(kind, seed + 2));
  };
  reseed(cfg.targets, "target");
  reseed(cfg.detectors, "detector");
  reseed(cfg.reformers, "reformer");
  for (auto& a : cfg.attacks) a.seed = fnv1a(a.name(), seed + 3);
}

void validate_config(const ExperimentConfig& c) {
  if (!(c.t_fp > 0.0 && c.t_fp < 1.0)) throw ConfigurationError("t_fp must lie in (0,1)");
  if (!(c.mixed_ratio > 0.0 && c.mixed_ratio < 1.0)) throw ConfigurationError("mixed_ratio must lie in (0,1)");
  if (!(c.norm_p >= 1.0)) throw ConfigurationError("norm_p must be >= 1");
  if (c.synthetic) {
    const auto& s = *c.synthetic;
    if (s.count < 3 || s.height < 16 || s.width < 16 || s.num_classes < 2) {
      throw ConfigurationError("synthetic dataset needs count >= 3, size >= 16x16 and >= 2 classes");
    }
  } else if (c.manifest.empty()) {
    throw ConfigurationError("dataset manifest path is empty");
  }
  const double total = c.split.train_fraction + c.split.val_fraction + c.split.test_fraction;
  if (c.split.train_fraction <= 0 || c.split.val_fraction <= 0 || c.split.test_fraction <= 0 || std::abs(total - 1.0) > 1e-9) {
    throw ConfigurationError("split fractions must be positive and sum to 1");
  }

  auto check_models = [](const std::vector<ModelEntry>& models, Purpose purpose, const char* kind) {
    std::map<std::string, int> seen;
    for (const auto& m : models) {
      if (seen[m.name]++) throw ConfigurationError(std::string("duplicate ") + kind + " name '" + m.name + "'");
      try {
        build_network(m.arch, purpose, 0);
      } catch (const ConfigurationError& e) {
        throw ConfigurationError(std::string(kind) + " '" + m.name + "': " + e.what());
      }
      if (m.train.epochs < 1 || m.train.batch_size < 1 || !(m.train.learning_rate > 0)) {
        throw ConfigurationError(std::string(kind) + " '" + m.name + "': epochs, batch_size and learning_rate must be positive");
      }
    }
  };
  check_models(c.targets, Purpose::Segment, "target");
  check_models(c.detectors, Purpose::Reconstruct, "detector");
  check_models(c.reformers, Purpose::Reconstruct, "reformer");
  for (const auto& r : c.reformers) {
    if (r.mode != RepresentationMode::Spatial) {
      throw ConfigurationError("reformer '" + r.name + "' must use the spatial representation");
    }
  }

  std::map<std::string, int> attack_names;
  for (const auto& a : c.attacks) {
    try {
      validate_attack_config(a);
    } catch (const ParameterError& e) {
      throw ConfigurationError("attack '" + a.name() + "': " + e.what());
    }
    if (attack_names[a.name()]++) throw ConfigurationError("duplicate attack '" + a.name() + "'");
  }

  auto has = [](const std::vector<ModelEntry>& ms, const std::string& n) {
    return std::any_of(ms.begin(), ms.end(), [&](const ModelEntry& m) { return m.name == n; });
  };
  for (const auto& [d, r] : c.combinations) {
    if (!has(c.detectors, d)) throw ConfigurationError("combination names undefined detector '" + d + "'");
    if (!has(c.reformers, r)) throw ConfigurationError("combination names undefined reformer '" + r + "'");
  }
}

// ---------------------------------------------------------------- stamps

namespace {

fs::path stamp_path(const fs::path& artifact) { return fs::path(artifact.string() + ".stamp"); }

bool fresh(const fs::path& artifact, const std::string& key) {
  std::ifstream in(stamp_path(artifact));
  std::string stored;
  return in && std::getline(in, stored) && stored == key && fs::exists(artifact);
}

void write_stamp(const fs::path& artifact, const std::string& key) {
  std::ofstream out(stamp_path(artifact));
  out << key << '\n';
  if (!out) throw IoError("cannot write stamp for '" + artifact.string() + "'");
}

std::string read_stamp(const fs::path& artifact, const char* stage) {
  std::ifstream in(stamp_path(artifact));
  std::string stored;
  if (!in || !std::getline(in, stored) || !fs::exists(artifact)) {
    throw MissingArtifactError("'" + artifact.string() + "' is missing; run the " + stage + " stage first");
  }
  return stored;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

// Creates the output root; its parent has to exist already.
Layout open_layout(const ExperimentConfig& cfg) {
  Layout l{cfg.output_dir};
  const fs::path parent = fs::absolute(cfg.output_dir).parent_path();
  if (!fs::is_directory(parent)) {
    throw IoError("parent of output directory '" + cfg.output_dir.string() + "' does not exist");
  }
  std::error_code ec;
  fs::create_directory(cfg.output_dir, ec);
  if (ec || !fs::is_directory(cfg.output_dir)) {
    throw IoError("cannot create output directory '" + cfg.output_dir.string() + "'");
  }
  return l;
}

std::string prepare_key(const ExperimentConfig& cfg) { return hex(fnv1a(dataset_json(cfg).dump())); }

std::string model_key(const std::string& data_key, const char* kind, const ModelEntry& m) {
  return hex(fnv1a(to_json(m).dump(), fnv1a(kind, fnv1a(data_key))));
}

void write_history(const fs::path& path, const LossHistory& h) {
  std::ofstream out(path);
  out << "epoch\ttrain_loss\tval_loss\n" << std::setprecision(10);
  for (std::size_t i = 0; i < h.train.size(); ++i) out << i + 1 << '\t' << h.train[i] << '\t' << h.val[i] << '\n';
  if (!out) throw IoError("cannot write loss history '" + path.string() + "'");
}

const char* kind_dir(Purpose p, bool detector) {
  return p == Purpose::Segment ? "targets" : (detector ? "detectors" : "reformers");
}

}  // namespace

// ---------------------------------------------------------------- prepare

void cmd_prepare(const ExperimentConfig& cfg) {
  const Layout l = open_layout(cfg);
  ensure_dir(l.data_dir());
  const std::string key = prepare_key(cfg);
  const char* splits[] = {"train", "val", "test"};
  if (std::all_of(std::begin(splits), std::end(splits),
                  [&](const char* s) { return fresh(l.split_manifest(s), key); })) {
    log("prepare: up to date");
    return;
  }

  Dataset full;
  if (cfg.synthetic) {
    const auto& s = *cfg.synthetic;
    full = generate_synthetic_dataset(s.count, s.height, s.width, s.num_classes, cfg.seed);
  } else {
    full = load_dataset(cfg.manifest);
  }
  const SplitResult parts = split_dataset(full, cfg.split);
  const Dataset* sets[] = {&parts.train, &parts.val, &parts.test};
  for (int i = 0; i < 3; ++i) {
    save_dataset(*sets[i], l.split_manifest(splits[i]));
    write_stamp(l.split_manifest(splits[i]), key);
  }
  log("prepare: ", parts.train.size(), " train / ", parts.val.size(), " val / ", parts.test.size(), " test");
}

Dataset load_split(const ExperimentConfig& cfg, const std::string& split) {
  const Layout l{cfg.output_dir};
  read_stamp(l.split_manifest(split), "prepare");
  return load_dataset(l.split_manifest(split));
}

// ---------------------------------------------------------------- train

void cmd_train(const ExperimentConfig& cfg, TrainWhich which) {
  const Layout l{cfg.output_dir};
  const std::string data_key = read_stamp(l.split_manifest("train"), "prepare");
  read_stamp(l.split_manifest("val"), "prepare");
  std::optional<Dataset> train, val;
  auto data = [&] {
    if (!train) {
      train = load_dataset(l.split_manifest("train"));
      val = load_dataset(l.split_manifest("val"));
    }
  };

  auto run = [&](const std::vector<ModelEntry>& models, Purpose purpose, bool detector) {
    const char* kind = kind_dir(purpose, detector);
    ensure_dir(l.root / "models" / kind);
    for (const auto& m : models) {
      const fs::path path = l.model_path(kind, m.name);
      const std::string key = model_key(data_key, kind, m);
      if (fresh(path, key)) {
        log("train ", kind, "/", m.name, ": up to date");
        continue;
      }
      data();
      TrainConfig tc = m.train;
      tc.on_epoch = [&](int epoch, double tr, double va) {
        log("train ", kind, "/", m.name, " epoch ", epoch + 1, "/", tc.epochs, " loss ", tr, " val ", va);
      };
      try {
        if (purpose == Purpose::Segment) {
          auto model = train_segmenter(build_segmenter(m.arch, m.train.seed), *train, *val, tc);
          save_model(model, path);
          write_history(l.history_path(kind, m.name), model.history);
        } else {
          auto model = train_reconstructor(build_reconstructor(m.arch, m.mode, m.train.seed), *train, *val, tc, m.mode);
          save_model(model, path);
          write_history(l.history_path(kind, m.name), model.history);
        }
      } catch (const TrainingError& e) {
        throw TrainingError(e.epoch(), std::string(kind) + " '" + m.name + "': " + e.what());
      } catch (const Error& e) {
        throw StateError(std::string("training ") + kind + " '" + m.name + "': " + e.what());
      }
      write_stamp(path, key);
    }
  };
  if (which == TrainWhich::Targets || which == TrainWhich::All) run(cfg.targets, Purpose::Segment, false);
  if (which == TrainWhich::Detectors || which == TrainWhich::All) run(cfg.detectors, Purpose::Reconstruct, true);
  if (which == TrainWhich::Reformers || which == TrainWhich::All) run(cfg.reformers, Purpose::Reconstruct, false);
}

SegmenterModel load_target(const ExperimentConfig& cfg, const std::string& name) {
  const fs::path path = Layout{cfg.output_dir}.model_path("targets", name);
  read_stamp(path, "train targets");
  return load_segmenter(path);
}

// ---------------------------------------------------------------- attack

namespace {

std::string attack_key(const ExperimentConfig& cfg, const AttackConfig& a) {
  const Layout l{cfg.output_dir};
  std::uint64_t h = fnv1a(to_json(a).dump(), fnv1a(read_stamp(l.split_manifest("test"), "prepare")));
  for (const auto& t : cfg.targets) h = fnv1a(read_stamp(l.model_path("targets", t.name), "train targets"), h);
  return hex(h);
}

}  // namespace

void cmd_attack(const ExperimentConfig& cfg) {
  const Layout l{cfg.output_dir};
  if (cfg.targets.empty()) throw ConfigurationError("no targets configured to attack");
  ensure_dir(l.root / "attacks");
  ensure_dir(l.results_dir());

  std::optional<Dataset> test;
  std::vector<Named<SegmenterModel>> targets;
  std::ofstream summary(l.results_dir() / "attack_summary.tsv");
  summary << "attack\ttarget\tsamples\tclean_dice\tadversarial_dice\tmean_dice_drop\tbudget_ok\n" << std::setprecision(10);

  for (const auto& a : cfg.attacks) {
    const fs::path manifest = l.attack_manifest(a.name());
    const std::string key = attack_key(cfg, a);
    AttackSet set;
    if (!test) test = load_split(cfg, "test");
    if (targets.empty()) {
      for (const auto& t : cfg.targets) targets.emplace_back(t.name, load_target(cfg, t.name));
    }
    if (fresh(manifest, key)) {
      log("attack ", a.name(), ": up to date");
      set = load_attack_set(manifest, *test);
    } else {
      std::vector<NamedSegmenter> ptrs;
      for (const auto& [n, m] : targets) ptrs.emplace_back(n, &m);
      set = craft_attack_set(ptrs, *test, a);
      set.name = a.name();
      save_attack_set(set, manifest);
      write_stamp(manifest, key);
    }
    for (const auto& [name, model] : targets) {
      double clean = 0.0, adv = 0.0, drop = 0.0;
      std::size_t n = 0;
      bool budget = true;
      for (const auto& s : set.samples) {
        if (s.source_model_id != name) continue;
        const std::vector<Image> pair{s.clean.image, s.adversarial_image};
        const auto preds = model.predict(pair);
        clean += dice_score(preds[0], s.clean.label, set.num_classes);
        adv += dice_score(preds[1], s.clean.label, set.num_classes);
        drop += s.achieved_dice_drop;
        budget = budget && within_budget(s);
        ++n;
      }
      const double k = n ? static_cast<double>(n) : 1.0;
      summary << a.name() << '\t' << name << '\t' << n << '\t' << clean / k << '\t' << adv / k << '\t' << drop / k
              << '\t' << (budget ? "yes" : "no") << '\n';
      log("attack ", a.name(), " on ", name, ": dice ", clean / k, " -> ", adv / k, budget ? "" : " (BUDGET VIOLATED)");
    }
  }
  if (!summary) throw IoError("cannot write attack summary");
}

AttackSet load_attack(const ExperimentConfig& cfg, const AttackConfig& attack) {
  const fs::path manifest = Layout{cfg.output_dir}.attack_manifest(attack.name());
  read_stamp(manifest, "attack");
  AttackSet set = load_attack_set(manifest, load_split(cfg, "test"));
  set.name = attack.name();
  return set;
}

// ---------------------------------------------------------------- evaluate

namespace {

DetectorBundle load_detector(const ExperimentConfig& cfg, const ModelEntry& m) {
  const fs::path path = Layout{cfg.output_dir}.model_path("detectors", m.name);
  read_stamp(path, "train detectors");
  return DetectorBundle(load_reconstructor(path), cfg.norm_p, m.name);
}

ReformerBundle load_reformer(const ExperimentConfig& cfg, const ModelEntry& m) {
  const fs::path path = Layout{cfg.output_dir}.model_path("reformers", m.name);
  read_stamp(path, "train reformer");
  return ReformerBundle(load_reconstructor(path), m.name);
}

Dataset subset_for(const AttackSet& set, const std::string& target) {
  Dataset out{set.name, set.num_classes, {}};
  for (const auto& s : set.samples) {
    if (target == "all" || s.source_model_id == target) out.samples.push_back({s.id(), s.adversarial_image, s.clean.label});
  }
  return out;
}

void write_auc_table(const std::vector<DetectorAucRow>& rows, const fs::path& path) {
  std::ofstream out(path);
  out << "detector\tattack\ttarget\troc_auc\n" << std::setprecision(10);
  for (const auto& r : rows) out << r.detector << '\t' << r.attack << '\t' << r.target << '\t' << r.auc << '\n';
  if (!out) throw IoError("cannot write '" + path.string() + "'");
}

}  // namespace

std::vector<DetectorAucRow> read_auc_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  std::vector<DetectorAucRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    DetectorAucRow r;
    std::string auc;
    if (!std::getline(ss, r.detector, '\t') || !std::getline(ss, r.attack, '\t') || !std::getline(ss, r.target, '\t') ||
        !std::getline(ss, auc)) {
      throw FormatError("malformed AUC row in '" + path.string() + "'");
    }
    r.auc = std::stod(auc);
    rows.push_back(r);
  }
  return rows;
}

EvaluationSummary cmd_evaluate(const ExperimentConfig& cfg) {
  const Layout l{cfg.output_dir};
  ensure_dir(l.results_dir());
  const Dataset val = load_split(cfg, "val");
  const Dataset test = load_split(cfg, "test");

  std::vector<Named<DetectorBundle>> detectors;
  for (const auto& d : cfg.detectors) detectors.emplace_back(d.name, load_detector(cfg, d));
  std::vector<Named<ReformerBundle>> reformers;
  for (const auto& r : cfg.reformers) reformers.emplace_back(r.name, load_reformer(cfg, r));
  std::vector<Named<SegmenterModel>> segmenters;
  for (const auto& t : cfg.targets) segmenters.emplace_back(t.name, load_target(cfg, t.name));
  std::vector<AttackSet> attacks;
  for (const auto& a : cfg.attacks) attacks.push_back(load_attack(cfg, a));

  EvaluationSummary summary;

  // Detector ROC-AUC on clean/adversarial blends, per target and pooled.
  for (const auto& attack : attacks) {
    std::vector<std::string> groups;
    for (const auto& t : cfg.targets) groups.push_back(t.name);
    groups.push_back("all");
    for (const auto& g : groups) {
      const Dataset adv = subset_for(attack, g);
      if (adv.empty()) continue;
      const MixedSet mixed = build_mixed_set(test, adv, cfg.mixed_ratio, fnv1a(g, cfg.seed + 4));
      if (g == "all") save_mixed_set(mixed, l.root / "attacks" / (attack.name + "_mixed.tsv"));
      for (const auto& [name, det] : detectors) {
        Provenance p;
        p.detector = name;
        p.attack = attack.name;
        p.segmenter = g;
        p.seed = cfg.seed;
        const MetricRecord r = evaluate_detector(det, mixed, p);
        summary.auc.push_back({name, attack.name, g, r.value});
        log("evaluate ", name, " vs ", attack.name, " [", g, "]: ROC-AUC ", r.value);
      }
    }
  }
  write_auc_table(summary.auc, l.results_dir() / "detector_auc.tsv");

  for (auto& [name, det] : detectors) {
    save_calibration(calibrate_threshold(det, val, cfg.t_fp), l.results_dir() / ("calibration_" + name + ".json"));
  }

  if (!detectors.empty() && !reformers.empty() && !segmenters.empty() && !attacks.empty()) {
    GridSpec g;
    g.detectors = detectors;
    g.reformers = reformers;
    g.segmenters = segmenters;
    g.attack_sets = attacks;
    g.combinations = cfg.combinations;
    g.clean_val = val;
    g.clean_test = test;
    g.t_fp = cfg.t_fp;
    g.seed = cfg.seed;
    summary.grid = run_combination_grid(std::move(g));
    write_results_table(summary.grid, l.results_dir() / "grid.tsv");
    write_plot_data(summary.grid, l.results_dir() / "plot.csv");
    log("evaluate: ", count_combinations(summary.grid), " combinations (baseline included)");
  }
  return summary;
}

EvaluationSummary cmd_all(const ExperimentConfig& cfg) {
  cmd_prepare(cfg);
  cmd_train(cfg, TrainWhich::All);
  cmd_attack(cfg);
  return cmd_evaluate(cfg);
}

}  // namespace freqshield
