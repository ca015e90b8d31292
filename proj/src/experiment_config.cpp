#include "ganfinger/experiment_config.hpp"

#include <algorithm>
#include <charconv>

#include <yaml-cpp/yaml.h>

#include "ganfinger/error.hpp"

namespace ganfinger {

const char* profile_name(Profile p) { return p == Profile::desk ? "desk" : "full"; }

Profile parse_profile(const std::string& name) {
  if (name == "desk") return Profile::desk;
  if (name == "full") return Profile::full;
  throw ConfigError("unknown profile '" + name + "' (expected desk or full)");
}

namespace {

AttackDescriptor make_attack(AttackKind kind) {
  AttackDescriptor a;
  a.kind = kind;
  return a;
}

std::vector<AttackDescriptor> default_attacks(Arch extraction_arch) {
  std::vector<AttackDescriptor> out;
  for (auto kind : {AttackKind::ftll, AttackKind::ftal, AttackKind::rtll, AttackKind::rtal}) {
    auto a = make_attack(kind);
    a.epochs = 10;
    out.push_back(a);
  }
  for (double p : {0.1, 0.2, 0.3, 0.4, 0.5}) {
    auto a = make_attack(AttackKind::prune);
    a.prune_rate = p;
    out.push_back(a);
  }
  for (auto kind : {AttackKind::extract_label, AttackKind::extract_prob}) {
    auto a = make_attack(kind);
    a.target_arch = extraction_arch;
    out.push_back(a);
  }
  auto adv = make_attack(AttackKind::adv_train);
  adv.epochs = 2;
  adv.fgsm_eps = 8.0 / 255.0;
  adv.rounds = 2;
  out.push_back(adv);
  return out;
}

std::vector<SweepCell> default_sweep(std::size_t m) {
  return {{"all-terms", 1, 5, 5, 10, m, m}, {"gamma-0", 1, 5, 5, 0, m, m}, {"pool-2", 1, 5, 5, 10, 2, 2}};
}

// YAML scalars arrive untyped; numbers and booleans are recognised here so the
// JSON readers shared with artifact files can do the rest.
nlohmann::json scalar_to_json(const std::string& s, bool quoted) {
  if (quoted) return s;
  if (s == "true" || s == "True") return true;
  if (s == "false" || s == "False") return false;
  if (s == "null" || s == "~" || s.empty()) return nullptr;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  std::int64_t i = 0;
  if (auto r = std::from_chars(b, e, i); r.ec == std::errc() && r.ptr == e) return i;
  std::uint64_t u = 0;
  if (auto r = std::from_chars(b, e, u); r.ec == std::errc() && r.ptr == e) return u;
  try {
    std::size_t used = 0;
    const double d = std::stod(s, &used);
    if (used == s.size()) return d;
  } catch (const std::exception&) {
  }
  // Ratios like 8/255 are allowed for readability.
  if (const auto slash = s.find('/'); slash != std::string::npos) {
    try {
      std::size_t u1 = 0, u2 = 0;
      const auto num = s.substr(0, slash);
      const auto den = s.substr(slash + 1);
      const double a = std::stod(num, &u1);
      const double c = std::stod(den, &u2);
      if (u1 == num.size() && u2 == den.size() && c != 0.0) return a / c;
    } catch (const std::exception&) {
    }
  }
  return s;
}

nlohmann::json yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Scalar:
      return scalar_to_json(node.Scalar(), node.Tag() == "!");
    case YAML::NodeType::Sequence: {
      auto arr = nlohmann::json::array();
      for (const auto& item : node) arr.push_back(yaml_to_json(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      auto obj = nlohmann::json::object();
      for (const auto& kv : node) obj[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return obj;
    }
  }
  return nullptr;
}

std::vector<Arch> archs_from(const nlohmann::json& j) {
  std::vector<Arch> out;
  for (const auto& t : j) out.push_back(parse_arch(t.get<std::string>()));
  return out;
}

nlohmann::json archs_to(const std::vector<Arch>& archs) {
  auto arr = nlohmann::json::array();
  for (auto a : archs) arr.push_back(std::string(arch_tag(a)));
  return arr;
}

int attack_epochs(const AttackDescriptor& a, const ZooSpec& zoo) {
  switch (a.kind) {
    case AttackKind::ftll:
    case AttackKind::ftal:
    case AttackKind::rtll:
    case AttackKind::rtal:
      return zoo.victim.epochs + a.epochs.value_or(10);
    case AttackKind::prune:
      return zoo.victim.epochs;
    case AttackKind::extract_label:
    case AttackKind::extract_prob:
      return a.epochs.value_or(zoo.extract.epochs);
    case AttackKind::adv_train:
      return zoo.extract.epochs + a.rounds.value_or(2) * a.epochs.value_or(2);
  }
  return 0;
}

}  // namespace

ExperimentConfig default_config(Profile profile) {
  ExperimentConfig cfg;
  cfg.profile = profile;
  if (profile == Profile::desk) {
    cfg.out_dir = "runs/desk";
    cfg.dataset = "shapes10-hard";
    cfg.zoo.victim_arch = Arch::small_resnet_20;
    cfg.zoo.pool_archs = {Arch::small_resnet_20, Arch::small_resnet_32, Arch::tiny_cnn};
    cfg.zoo.irrelevant_archs = cfg.zoo.pool_archs;
    TrainConfig t;
    t.epochs = 10;
    t.lr = 0.05;
    cfg.zoo.train = t;
    cfg.zoo.extract = t;
    // Weight decay keeps the victim usable under 50% magnitude pruning.
    t.weight_decay = 5e-4;
    cfg.zoo.victim = t;
    t.weight_decay = 0.0;
    t.lr = 0.01;
    cfg.zoo.finetune = t;
    cfg.attacks = default_attacks(Arch::small_resnet_20);
    cfg.gan.epochs = 3;
    cfg.gan.optimizer = OptimizerKind::adam;
    cfg.gan.perturbation_scale = 0.3;
    cfg.gan.k = 32;
    cfg.gan.confer_threshold = 0.66;
    cfg.gan.m = 5;
    cfg.gan.n = 5;
    cfg.sweep = default_sweep(5);
  } else {
    cfg.out_dir = "runs/full";
    cfg.dataset = "cifar10";
    cfg.zoo.victim_arch = Arch::small_resnet_20;
    cfg.zoo.pool_archs = {Arch::small_resnet_20, Arch::small_resnet_32, Arch::vgg_16, Arch::vgg_19, Arch::densenet};
    cfg.zoo.irrelevant_archs = cfg.zoo.pool_archs;
    cfg.zoo.full_width = true;
    cfg.zoo.pool_train = 20;
    cfg.zoo.pool_validation = 10;
    cfg.zoo.irrelevant = 30;
    cfg.zoo.finetune.lr = 0.001;
    cfg.zoo.victim = cfg.zoo.train;
    cfg.attacks.clear();
    for (auto arch : cfg.zoo.pool_archs) {
      for (const auto& a : default_attacks(arch)) {
        if (a.target_arch || arch == cfg.zoo.victim_arch) cfg.attacks.push_back(a);
      }
    }
    cfg.gan.m = 20;
    cfg.gan.n = 20;
    cfg.sweep_budget = 16;
    cfg.sweep = default_sweep(20);
  }
  return cfg;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j, std::optional<Profile> profile_override) {
  if (!j.is_object()) throw ConfigError("experiment config must be a mapping");
  try {
    Profile profile = profile_override.value_or(Profile::desk);
    if (!profile_override && j.contains("profile")) profile = parse_profile(j.at("profile").get<std::string>());
    ExperimentConfig cfg = default_config(profile);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("out")) cfg.out_dir = j.at("out").get<std::string>();
    if (j.contains("data")) {
      const auto& d = j.at("data");
      cfg.dataset = d.value("dataset", cfg.dataset);
      if (d.contains("data_dir") && !d.at("data_dir").is_null()) cfg.data_dir = d.at("data_dir").get<std::string>();
      cfg.split_fraction = d.value("fraction", cfg.split_fraction);
    }
    if (j.contains("zoo")) {
      const auto& z = j.at("zoo");
      auto& zoo = cfg.zoo;
      if (z.contains("victim_arch")) zoo.victim_arch = parse_arch(z.at("victim_arch").get<std::string>());
      if (z.contains("pool_archs")) zoo.pool_archs = archs_from(z.at("pool_archs"));
      if (z.contains("irrelevant_archs")) zoo.irrelevant_archs = archs_from(z.at("irrelevant_archs"));
      zoo.full_width = z.value("full_width", zoo.full_width);
      zoo.pool_train = z.value("pool_train", zoo.pool_train);
      zoo.pool_validation = z.value("pool_validation", zoo.pool_validation);
      zoo.irrelevant = z.value("irrelevant", zoo.irrelevant);
      if (z.contains("victim")) zoo.victim = train_config_from_json(z.at("victim"), zoo.victim);
      if (z.contains("train")) zoo.train = train_config_from_json(z.at("train"), zoo.train);
      if (z.contains("extract")) zoo.extract = train_config_from_json(z.at("extract"), zoo.extract);
      if (z.contains("finetune")) zoo.finetune = train_config_from_json(z.at("finetune"), zoo.finetune);
    }
    if (j.contains("attacks")) {
      cfg.attacks.clear();
      for (const auto& a : j.at("attacks")) cfg.attacks.push_back(attack_from_json(a));
    }
    if (j.contains("gan")) cfg.gan = gan_config_from_json(j.at("gan"), cfg.gan);
    if (j.contains("verify")) {
      cfg.verify_threshold = j.at("verify").value("threshold", cfg.verify_threshold);
      cfg.grid_size = j.at("verify").value("grid_size", cfg.grid_size);
    }
    if (j.contains("forge")) cfg.forge_examples = j.at("forge").value("examples", cfg.forge_examples);
    if (j.contains("sweep")) {
      const auto& s = j.at("sweep");
      cfg.sweep_budget = s.value("budget", cfg.sweep_budget);
      if (s.contains("cells")) {
        cfg.sweep.clear();
        for (const auto& c : s.at("cells")) {
          SweepCell cell;
          cell.name = c.at("name").get<std::string>();
          cell.eta = c.value("eta", cfg.gan.eta);
          cell.alpha = c.value("alpha", cfg.gan.alpha);
          cell.beta = c.value("beta", cfg.gan.beta);
          cell.gamma = c.value("gamma", cfg.gan.gamma);
          cell.m = c.value("m", cfg.gan.m);
          cell.n = c.value("n", cfg.gan.n);
          cfg.sweep.push_back(cell);
        }
      }
    }
    validate(cfg);
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path, std::optional<Profile> profile_override) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::BadFile&) {
    throw ConfigError("cannot read config " + path.string());
  } catch (const YAML::Exception& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  return experiment_config_from_json(yaml_to_json(root), profile_override);
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json attacks = nlohmann::json::array();
  for (const auto& a : cfg.attacks) attacks.push_back(to_json(a));
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : cfg.sweep) {
    cells.push_back({{"name", c.name}, {"eta", c.eta}, {"alpha", c.alpha}, {"beta", c.beta}, {"gamma", c.gamma},
                     {"m", c.m}, {"n", c.n}});
  }
  const auto& z = cfg.zoo;
  return {{"profile", profile_name(cfg.profile)},
          {"seed", cfg.seed},
          {"out", cfg.out_dir.string()},
          {"data", {{"dataset", cfg.dataset}, {"data_dir", cfg.data_dir}, {"fraction", cfg.split_fraction}}},
          {"zoo",
           {{"victim_arch", std::string(arch_tag(z.victim_arch))},
            {"pool_archs", archs_to(z.pool_archs)},
            {"irrelevant_archs", archs_to(z.irrelevant_archs)},
            {"full_width", z.full_width},
            {"pool_train", z.pool_train},
            {"pool_validation", z.pool_validation},
            {"irrelevant", z.irrelevant},
            {"victim", to_json(z.victim)},
            {"train", to_json(z.train)},
            {"extract", to_json(z.extract)},
            {"finetune", to_json(z.finetune)}}},
          {"attacks", attacks},
          {"gan", to_json(cfg.gan)},
          {"verify", {{"threshold", cfg.verify_threshold}, {"grid_size", cfg.grid_size}}},
          {"forge", {{"examples", cfg.forge_examples}}},
          {"sweep", {{"budget", cfg.sweep_budget}, {"cells", cells}}}};
}

std::size_t suspect_count(const ExperimentConfig& cfg) { return cfg.attacks.size() + cfg.zoo.irrelevant; }

int max_epochs_per_network(const ExperimentConfig& cfg) {
  int worst = std::max({cfg.zoo.victim.epochs, cfg.zoo.train.epochs, cfg.zoo.extract.epochs, cfg.gan.epochs});
  for (const auto& a : cfg.attacks) worst = std::max(worst, attack_epochs(a, cfg.zoo));
  return worst;
}

void validate(const ExperimentConfig& cfg) {
  if (!(cfg.split_fraction > 0.0 && cfg.split_fraction < 1.0)) throw ValidationError("split fraction must lie in (0, 1)");
  if (cfg.zoo.pool_archs.empty()) throw ValidationError("zoo.pool_archs must not be empty");
  if (cfg.zoo.irrelevant > 0 && cfg.zoo.irrelevant_archs.empty()) {
    throw ValidationError("zoo.irrelevant_archs must not be empty");
  }
  if (cfg.zoo.pool_train == 0 || cfg.zoo.pool_validation == 0) {
    throw ValidationError("every pool needs at least one member");
  }
  if (cfg.gan.m > cfg.zoo.pool_train || cfg.gan.n > cfg.zoo.pool_train) {
    throw ValidationError("gan.m / gan.n exceed the train pool sizes");
  }
  for (const auto& c : cfg.sweep) {
    if (c.m == 0 || c.n == 0 || c.m > cfg.zoo.pool_train || c.n > cfg.zoo.pool_train) {
      throw ValidationError("sweep cell '" + c.name + "' pool sizes must lie in [1, train pool size]");
    }
  }
  if (!(cfg.verify_threshold > 0.0 && cfg.verify_threshold < 1.0)) {
    throw ValidationError("verify.threshold must lie in (0, 1)");
  }
  if (cfg.grid_size < 2) throw ValidationError("verify.grid_size must be at least 2");
  for (const auto& a : cfg.attacks) validate(a);
  const bool has_adv = std::any_of(cfg.attacks.begin(), cfg.attacks.end(),
                                   [](const AttackDescriptor& a) { return a.kind == AttackKind::adv_train; });
  const bool has_label = std::any_of(cfg.attacks.begin(), cfg.attacks.end(),
                                     [](const AttackDescriptor& a) { return a.kind == AttackKind::extract_label; });
  if (has_adv && !has_label) throw ValidationError("adv_train needs an extract_label attack to build on");
  validate(cfg.gan);
  if (cfg.profile == Profile::desk) {
    if (suspect_count(cfg) > 40) {
      throw ValidationError("desk profile allows at most 40 suspects, config has " + std::to_string(suspect_count(cfg)));
    }
    if (max_epochs_per_network(cfg) > 20) {
      throw ValidationError("desk profile allows at most 20 training epochs per network, config needs " +
                            std::to_string(max_epochs_per_network(cfg)));
    }
  }
}

ArchSpec arch_for(const ExperimentConfig& cfg, Arch arch, std::int64_t channels, std::int64_t height,
                  std::int64_t width, std::int64_t classes) {
  ArchSpec spec{arch, channels, height, width, classes, 0};
  if (cfg.zoo.full_width) spec.base_width = arch_info(arch).full_base_width;
  return spec;
}

}  // namespace ganfinger
