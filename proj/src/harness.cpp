#include "ganfinger/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>


#include "ganfinger/data_splits.hpp"
#include "ganfinger/dataset.hpp"
#include "ganfinger/error.hpp"
#include "ganfinger/fingerprint_gan.hpp"
#include "ganfinger/log.hpp"
#include "ganfinger/model_zoo.hpp"
#include "ganfinger/plot.hpp"
#include "ganfinger/post_processing.hpp"
#include "ganfinger/registry.hpp"
#include "ganfinger/tensor_io.hpp"

namespace ganfinger {

namespace fs = std::filesystem;

std::string positive_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "positive-%02zu", i);
  return buf;
}

std::string negative_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "negative-%02zu", i);
  return buf;
}

std::string irrelevant_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "irrelevant-%02zu", i);
  return buf;
}

std::string pirate_id(std::size_t i, const AttackDescriptor& attack) {
  char buf[64];
  std::string kind(attack_kind_name(attack.kind));
  std::transform(kind.begin(), kind.end(), kind.begin(), [](unsigned char c) { return std::tolower(c); });
  std::replace(kind.begin(), kind.end(), '_', '-');
  if (attack.prune_rate) {
    std::snprintf(buf, sizeof buf, "pirate-%02zu-%s-%.2f", i, kind.c_str(), *attack.prune_rate);
  } else {
    std::snprintf(buf, sizeof buf, "pirate-%02zu-%s", i, kind.c_str());
  }
  return buf;
}

namespace {

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw ValidationError("cannot write " + tmp);
    out << j.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("missing artifact " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IntegrityError(path.filename().string(), e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
}

std::string fixed(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Per-network seeds are spread out from the global seed so adding a role
// never shifts another role's seeds.
std::uint64_t derived_seed(const ExperimentConfig& cfg, std::uint64_t role, std::size_t index) {
  return cfg.seed * 1000003ULL + role * 10007ULL + index;
}

struct Session {
  ExperimentConfig cfg;
  Layout layout;
  Dataset data;
  DataSplit split;
  Registry registry;

  ArchSpec arch(Arch a) const {
    return arch_for(cfg, a, data.channels(), data.height(), data.width(), data.num_classes);
  }
};

DatasetOptions dataset_options(const ExperimentConfig& cfg) { return DatasetOptions{cfg.data_dir}; }

Session open_session(const ExperimentConfig& cfg) {
  validate(cfg);
  Layout layout{cfg.out_dir};
  auto data = load_dataset(cfg.dataset, dataset_options(cfg));
  if (!fs::exists(layout.split())) cmd_prepare_data(cfg, RunOptions{});
  auto split = load_split(layout.split());
  if (split.source_dataset != cfg.dataset) {
    throw ConfigError("split in " + layout.split().string() + " belongs to dataset '" + split.source_dataset + "'");
  }
  validate_split(split, data);
  return Session{cfg, layout, std::move(data), std::move(split), Registry(layout.registry())};
}

TrainedModel load_model(const Session& s, const std::string& id) {
  auto record = s.registry.get(id);
  auto net = s.registry.load_network(record);
  return {std::move(record), std::move(net)};
}

// Trains `id` unless resuming and it already exists. Training failures are
// re-raised naming the zoo cell.
template <typename Fn>
TrainedModel ensure_model(Session& s, const RunOptions& opts, const std::string& id, Fn&& train) {
  if (opts.resume && s.registry.contains(id)) {
    log::info("resume: keeping %s", id.c_str());
    return load_model(s, id);
  }
  TrainedModel m;
  try {
    m = train();
  } catch (const TrainingError& e) {
    throw TrainingError("zoo cell " + id + ": " + e.what(), e.epoch(), e.step());
  }
  m.record = s.registry.put(m.record, *m.net);
  log::info("trained %s (%s, accuracy %.3f)", id.c_str(), std::string(arch_tag(m.record.arch.arch)).c_str(),
            m.record.test_accuracy);
  return m;
}

VictimQueries victim_queries(Session& s, const TrainedModel& victim) {
  return cached_victim_queries(s.registry, victim.record, *victim.net, s.data, s.split);
}

PoolSet pools_for(const Session& s) {
  const auto records = s.registry.list();
  return build_pools(records, s.cfg.zoo.pool_train, s.cfg.zoo.pool_validation);
}

std::vector<NetworkPtr> load_members(const Session& s, const std::vector<std::string>& ids, std::size_t count) {
  if (count > ids.size()) throw CapacityError("pool smaller than requested size", ids.size(), count);
  std::vector<NetworkPtr> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(s.registry.load_network(ids[i]));
  return out;
}

nlohmann::json pools_json(const PoolSet& p) {
  auto pool = [](const NetworkPool& n) {
    return nlohmann::json{{"pool_id", n.pool_id},
                          {"role", role_name(n.role)},
                          {"purpose", n.purpose == PoolPurpose::train ? "train" : "validation"},
                          {"member_ids", n.member_ids}};
  };
  return nlohmann::json::array(
      {pool(p.positive_train), pool(p.positive_validation), pool(p.negative_train), pool(p.negative_validation)});
}

void write_zoo_summary(const Session& s) {
  nlohmann::json records = nlohmann::json::array();
  std::map<std::pair<std::string, std::string>, std::vector<double>> cells;
  std::string csv = "model_id,role,arch,attack,test_accuracy,victim_agreement\n";
  for (const auto& r : s.registry.list()) {
    const std::string attack = r.lineage ? r.lineage->attack : "";
    const double agree = r.metadata.value("victim_agreement", r.role == Role::victim ? 1.0 : -1.0);
    records.push_back({{"model_id", r.model_id},
                       {"role", role_name(r.role)},
                       {"arch", arch_tag(r.arch.arch)},
                       {"attack", attack},
                       {"test_accuracy", r.test_accuracy},
                       {"victim_agreement", agree}});
    csv += r.model_id + "," + std::string(role_name(r.role)) + "," + std::string(arch_tag(r.arch.arch)) + "," +
           attack + "," + fixed(r.test_accuracy) + "," + (agree >= 0 ? fixed(agree) : "") + "\n";
    cells[{std::string(role_name(r.role)) + (attack.empty() ? "" : ":" + attack), std::string(arch_tag(r.arch.arch))}]
        .push_back(r.test_accuracy);
  }
  nlohmann::json table = nlohmann::json::array();
  for (const auto& [key, accs] : cells) {
    double mean = 0.0;
    for (double a : accs) mean += a;
    table.push_back({{"cell", key.first},
                     {"arch", key.second},
                     {"count", accs.size()},
                     {"mean_accuracy", mean / static_cast<double>(accs.size())}});
  }
  write_json(s.layout.zoo_summary(), {{"records", records}, {"table", table}, {"count", records.size()}});
  write_text(s.layout.zoo_summary().parent_path() / "summary.csv", csv);
}

GanNetworks gan_networks(Network& victim, const std::vector<NetworkPtr>& pos, const std::vector<NetworkPtr>& neg) {
  return GanNetworks{victim, std::span<const NetworkPtr>(pos), std::span<const NetworkPtr>(neg)};
}

GanConfig effective_gan(const ExperimentConfig& cfg) {
  auto g = cfg.gan;
  g.seed = cfg.seed * 7919ULL + cfg.gan.seed;
  return g;
}

struct FingerprintRun {
  GanTrainResult gan;
  std::vector<ScoredCandidate> scored;
  std::vector<ScoredCandidate> accepted;
};

FingerprintRun run_fingerprinting(Session& s, Network& victim, const GanConfig& g) {
  const auto pools = pools_for(s);
  const auto pos_train = load_members(s, pools.positive_train.member_ids, g.m);
  const auto neg_train = load_members(s, pools.negative_train.member_ids, g.n);
  const auto pos_val = load_members(s, pools.positive_validation.member_ids, pools.positive_validation.member_ids.size());
  const auto neg_val = load_members(s, pools.negative_validation.member_ids, pools.negative_validation.member_ids.size());

  FingerprintRun run;
  run.gan = train_gan(gan_networks(victim, pos_train, neg_train), s.data.images_at(s.split.d_v), g);
  auto candidates = generate_candidates(run.gan.generator, victim, s.data, s.split.eval_set);
  run.scored = score_candidates(std::move(candidates), pos_val, neg_val);
  run.accepted = select_conferrable(run.scored, g.confer_threshold);
  return run;
}

nlohmann::json gan_log_json(const GanTrainResult& r) {
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : r.log) {
    auto j = to_json(e.mean);
    j["epoch"] = e.epoch;
    log.push_back(j);
  }
  return log;
}

nlohmann::json report_json(const ARDReport& r, const ModelRecord& record, double threshold) {
  auto j = to_json(r);
  j["role"] = role_name(record.role);
  j["threshold"] = threshold;
  j["verdict"] = verdict_name(classify(r, threshold));
  return j;
}

// Irrelevant population: negative-pool networks plus the independently
// trained suspects. The latter never took part in fingerprint generation and
// are also scored on their own as the held-out population.
struct Populations {
  std::vector<std::string> pirated_ids;
  std::vector<double> pirated;
  std::vector<std::string> irrelevant_ids;
  std::vector<double> irrelevant;
  std::vector<double> held_out;

  void add(const ModelRecord& r, double ard) {
    if (r.role == Role::pirated) {
      pirated_ids.push_back(r.model_id);
      pirated.push_back(ard);
      return;
    }
    irrelevant_ids.push_back(r.model_id);
    irrelevant.push_back(ard);
    if (r.role == Role::irrelevant) held_out.push_back(ard);
  }
};

bool is_suspect(Role role) { return role == Role::pirated || role == Role::irrelevant || role == Role::negative; }

ARUCResult write_evaluation(const fs::path& dir, const Populations& pop, std::size_t grid, const std::string& title,
                            nlohmann::json& summary) {
  const auto curves = compute_curves(pop.pirated, pop.irrelevant, grid);
  const double min_p = *std::min_element(pop.pirated.begin(), pop.pirated.end());
  const double max_i = *std::max_element(pop.irrelevant.begin(), pop.irrelevant.end());
  summary["aruc"] = curves.aruc;
  summary["min_pirated_ard"] = min_p;
  summary["max_irrelevant_ard"] = max_i;
  summary["separation"] = min_p - max_i;
  if (!pop.held_out.empty()) {
    const double max_h = *std::max_element(pop.held_out.begin(), pop.held_out.end());
    summary["held_out"] = {{"count", pop.held_out.size()},
                           {"aruc", compute_curves(pop.pirated, pop.held_out, grid).aruc},
                           {"max_irrelevant_ard", max_h},
                           {"separation", min_p - max_h}};
  }
  summary["pirated"] = nlohmann::json::object();
  for (std::size_t i = 0; i < pop.pirated.size(); ++i) summary["pirated"][pop.pirated_ids[i]] = pop.pirated[i];
  summary["irrelevant"] = nlohmann::json::object();
  for (std::size_t i = 0; i < pop.irrelevant.size(); ++i) {
    summary["irrelevant"][pop.irrelevant_ids[i]] = pop.irrelevant[i];
  }
  write_json(dir / "aruc.json", summary);
  write_curves_csv(dir / "curves.csv", curves);
  write_curves_svg(dir / "curves.svg", curves, title);
  std::vector<Bar> bars;
  for (std::size_t i = 0; i < pop.pirated.size(); ++i) bars.push_back({pop.pirated_ids[i], pop.pirated[i]});
  for (std::size_t i = 0; i < pop.irrelevant.size(); ++i) bars.push_back({pop.irrelevant_ids[i], pop.irrelevant[i]});
  write_bars_svg(dir / "ard.svg", bars, "ARD per suspect");
  return curves;
}

}  // namespace

nlohmann::json cmd_prepare_data(const ExperimentConfig& cfg, const RunOptions& opts) {
  validate(cfg);
  Layout layout{cfg.out_dir};
  write_json(layout.config(), to_json(cfg));
  if (opts.resume && fs::exists(layout.split())) {
    const auto existing = load_split(layout.split());
    log::info("resume: keeping split %s", existing.split_id.c_str());
    return {{"split_id", existing.split_id}, {"d_v", existing.d_v.size()}, {"d_p", existing.d_p.size()},
            {"eval_set", existing.eval_set.size()}, {"resumed", true}};
  }
  const auto data = load_dataset(cfg.dataset, dataset_options(cfg));
  const auto split = split_dataset(data, cfg.seed, cfg.split_fraction);
  validate_split(split, data);
  persist_split(split, layout.split());
  log::info("split %s: d_v %zu, d_p %zu, eval %zu", split.split_id.c_str(), split.d_v.size(), split.d_p.size(),
            split.eval_set.size());
  return {{"split_id", split.split_id}, {"d_v", split.d_v.size()}, {"d_p", split.d_p.size()},
          {"eval_set", split.eval_set.size()}, {"resumed", false}};
}

nlohmann::json cmd_attack(const ExperimentConfig& cfg, const RunOptions& opts) {
  auto s = open_session(cfg);
  const auto victim = load_model(s, "victim");
  const auto queries = victim_queries(s, victim);
  AttackContext ctx{s.data, s.split, victim, queries, cfg.zoo.finetune, cfg.zoo.extract};

  nlohmann::json made = nlohmann::json::array();
  std::optional<TrainedModel> label_pirate;
  for (std::size_t i = 0; i < cfg.attacks.size(); ++i) {
    const auto& attack = cfg.attacks[i];
    const auto id = pirate_id(i, attack);
    const TrainedModel* parent = &victim;
    if (attack.kind == AttackKind::adv_train) {
      if (!label_pirate) throw ValidationError("adv_train must follow an extract_label attack in the matrix");
      parent = &*label_pirate;
    }
    auto m = ensure_model(s, opts, id, [&] { return apply_attack(ctx, *parent, attack, derived_seed(cfg, 5, i), id); });
    if (attack.kind == AttackKind::extract_label && !label_pirate) label_pirate = m;
    made.push_back(id);
  }
  write_zoo_summary(s);
  return {{"pirates", made}};
}

nlohmann::json cmd_build_zoo(const ExperimentConfig& cfg, const RunOptions& opts) {
  auto s = open_session(cfg);
  const auto& zoo = cfg.zoo;

  const bool had_victim = s.registry.contains("victim");
  const auto victim = ensure_model(s, opts, "victim", [&] {
    return train_victim(s.data, s.split, s.arch(zoo.victim_arch), zoo.victim, derived_seed(cfg, 1, 0), "victim");
  });
  if (!(opts.resume && had_victim)) fs::remove(s.registry.cache_dir() / "victim.dp-queries.bin");
  const auto queries = victim_queries(s, victim);

  const auto pool_size = zoo.pool_train + zoo.pool_validation;
  for (std::size_t i = 0; i < pool_size; ++i) {
    const auto arch = s.arch(zoo.pool_archs[i % zoo.pool_archs.size()]);
    ensure_model(s, opts, positive_id(i), [&] {
      return train_positive_extraction(victim, queries, s.data, s.split, arch, zoo.extract, derived_seed(cfg, 2, i),
                                       positive_id(i));
    });
    ensure_model(s, opts, negative_id(i), [&] {
      return train_negative(s.data, s.split, arch, zoo.train, derived_seed(cfg, 3, i), negative_id(i), Role::negative);
    });
  }
  for (std::size_t i = 0; i < zoo.irrelevant; ++i) {
    const auto arch = s.arch(zoo.irrelevant_archs[i % zoo.irrelevant_archs.size()]);
    ensure_model(s, opts, irrelevant_id(i), [&] {
      return train_negative(s.data, s.split, arch, zoo.train, derived_seed(cfg, 4, i), irrelevant_id(i),
                            Role::irrelevant);
    });
  }
  const auto pools = pools_for(s);
  write_json(s.layout.registry().parent_path() / "zoo" / "pools.json", pools_json(pools));

  auto attacks = cmd_attack(cfg, opts);
  const auto count = s.registry.list().size();
  log::info("zoo complete: %zu records", count);
  return {{"records", count}, {"pirates", attacks["pirates"]}, {"pools", pools_json(pools)}};
}

nlohmann::json cmd_fingerprint(const ExperimentConfig& cfg, const RunOptions& opts) {
  auto s = open_session(cfg);
  const auto& layout = s.layout;
  if (opts.resume && fs::exists(layout.fingerprints())) {
    const auto set = load_fingerprints(layout.fingerprints());
    log::info("resume: keeping %zu fingerprints", set.size());
    return {{"k", set.size()}, {"resumed", true}};
  }
  auto victim = load_model(s, "victim");
  const auto g = effective_gan(cfg);
  auto run = run_fingerprinting(s, *victim.net, g);

  save_module(*run.gan.generator, layout.generator());
  write_json(layout.gan_log(), gan_log_json(run.gan));
  nlohmann::json cands = nlohmann::json::array();
  std::set<std::int64_t> accepted_ids;
  for (const auto& a : run.accepted) accepted_ids.insert(a.pair.source_index);
  for (const auto& c : run.scored) {
    cands.push_back({{"source_index", c.pair.source_index},
                     {"positive_matches", c.positive_matches},
                     {"negative_matches", c.negative_matches},
                     {"perturbation_norm", c.pair.perturbation_norm},
                     {"accepted", accepted_ids.count(c.pair.source_index) > 0}});
  }
  const nlohmann::json status = {{"candidates", run.scored.size()},
                                 {"accepted", run.accepted.size()},
                                 {"requested", g.k},
                                 {"confer_threshold", g.confer_threshold}};
  write_json(layout.fingerprint_dir() / "candidates.json", {{"status", status}, {"candidates", cands}});
  log::info("fingerprint: %zu candidates, %zu conferrable, K=%zu", run.scored.size(), run.accepted.size(), g.k);
  if (run.accepted.size() < g.k) throw ShortfallError(run.accepted.size(), g.k);

  std::vector<FingerprintPair> pairs;
  for (std::size_t i = 0; i < g.k; ++i) pairs.push_back(run.accepted[i].pair);
  const auto set = make_fingerprint_set(std::move(pairs), victim.record.model_id, g,
                                        fs::relative(layout.generator(), layout.root).string());
  save_fingerprints(set, layout.fingerprints());
  double norm = 0.0;
  for (const auto& p : set.pairs) norm += p.perturbation_norm;
  return {{"k", set.size()},
          {"status", status},
          {"mean_perturbation_norm", norm / static_cast<double>(set.size())},
          {"final_epoch", run.gan.log.empty() ? nlohmann::json() : to_json(run.gan.log.back().mean)}};
}

nlohmann::json cmd_verify(const ExperimentConfig& cfg, const VerifyOptions& verify, const RunOptions& opts) {
  validate(cfg);
  const Layout layout{cfg.out_dir};
  const Registry registry(layout.registry());
  const auto set = load_fingerprints(layout.fingerprints());
  std::vector<ModelRecord> suspects;
  if (verify.suspects.empty()) {
    suspects = registry.list();
  } else {
    for (const auto& id : verify.suspects) suspects.push_back(registry.get(id));
  }

  nlohmann::json summary = nlohmann::json::array();
  for (const auto& record : suspects) {
    const auto report_path = layout.report(record.model_id);
    if (opts.resume && !verify.replay && fs::exists(report_path) && fs::exists(layout.journal(record.model_id))) {
      const auto j = read_json(report_path);
      summary.push_back({{"suspect_id", record.model_id}, {"role", j.at("role")}, {"ard", j.at("ard")}});
      continue;
    }
    ARDReport report;
    if (verify.replay) {
      TranscriptOracle oracle(record.model_id, read_journal(layout.journal(record.model_id)));
      report = compute_ard(set, oracle);
    } else {
      ModelOracle model(record.model_id, registry.load_network(record));
      std::vector<JournalEntry> journal;
      JournalingOracle oracle(model, journal);
      report = compute_ard(set, oracle);
      write_journal(layout.journal(record.model_id), journal);
    }
    write_json(report_path, report_json(report, record, cfg.verify_threshold));
    summary.push_back({{"suspect_id", record.model_id}, {"role", role_name(record.role)}, {"ard", report.ard}});
    log::info("verify %s (%s): ARD %.4f", record.model_id.c_str(), std::string(role_name(record.role)).c_str(),
              report.ard);
  }
  return {{"reports", summary}, {"replay", verify.replay}};
}

nlohmann::json cmd_evaluate(const ExperimentConfig& cfg, const RunOptions&) {
  validate(cfg);
  const Layout layout{cfg.out_dir};
  const Registry registry(layout.registry());
  Populations pop;
  for (const auto& r : registry.list()) {
    if (!is_suspect(r.role)) continue;
    const auto path = layout.report(r.model_id);
    if (!fs::exists(path)) throw ValidationError("no verification report for suspect " + r.model_id);
    pop.add(r, ard_report_from_json(read_json(path)).ard);
  }
  if (pop.pirated.empty()) throw ValidationError("evaluation needs at least one pirated suspect");
  if (pop.irrelevant.empty()) throw ValidationError("evaluation needs at least one irrelevant suspect");
  nlohmann::json summary = {{"pirated_count", pop.pirated.size()}, {"irrelevant_count", pop.irrelevant.size()},
                            {"grid_size", cfg.grid_size}};
  write_evaluation(layout.evaluate_dir(), pop, cfg.grid_size, "robustness / uniqueness", summary);
  log::info("evaluate: ARUC %.4f, separation %.4f", summary["aruc"].get<double>(),
            summary["separation"].get<double>());
  return summary;
}

nlohmann::json cmd_forge_check(const ExperimentConfig& cfg, const RunOptions&) {
  auto s = open_session(cfg);
  auto victim = load_model(s, "victim");

  std::vector<std::int64_t> picks(s.split.eval_set);
  std::mt19937_64 rng(derived_seed(cfg, 6, 0));
  std::shuffle(picks.begin(), picks.end(), rng);
  picks.resize(std::min(picks.size(), cfg.forge_examples));
  std::sort(picks.begin(), picks.end());
  const auto x = s.data.images_at(picks);

  ModelOracle victim_oracle("victim", victim.net);
  nlohmann::json rates = nlohmann::json::object();
  double lowest = 1.0;
  for (const auto& r : s.registry.list(RecordFilter{Role::irrelevant, std::nullopt, std::nullopt})) {
    ModelOracle suspect(r.model_id, s.registry.load_network(r));
    const double rate = label_matching_rate(victim_oracle, suspect, x);
    rates[r.model_id] = rate;
    lowest = std::min(lowest, rate);
  }

  // A forger presents the originals themselves as x'. The victim labels both
  // sides identically, which the pair invariant refuses.
  const auto y = predict_labels(*victim.net, x);
  std::vector<FingerprintPair> forged;
  for (std::int64_t i = 0; i < x.size(0); ++i) {
    const auto label = y[i].item<std::int64_t>();
    forged.push_back({picks[static_cast<std::size_t>(i)], x[i], x[i], label, label, 0.0});
  }
  bool rejected = false;
  std::string message;
  try {
    make_fingerprint_set(std::move(forged), "victim", effective_gan(cfg), "forged");
  } catch (const InvariantError& e) {
    rejected = true;
    message = e.what();
  }
  const nlohmann::json report = {{"examples", picks.size()},
                                 {"matching_rate", rates},
                                 {"min_matching_rate", rates.empty() ? nlohmann::json() : nlohmann::json(lowest)},
                                 {"forged_set_rejected", rejected},
                                 {"rejection", message}};
  write_json(s.layout.forge_report(), report);
  log::info("forge-check: min matching rate %.3f, forged set rejected: %s", lowest, rejected ? "yes" : "no");
  return report;
}

nlohmann::json cmd_sweep(const ExperimentConfig& cfg, const RunOptions& opts) {
  validate(cfg);
  if (cfg.sweep.size() > cfg.sweep_budget) {
    throw ValidationError("sweep has " + std::to_string(cfg.sweep.size()) + " cells, budget is " +
                          std::to_string(cfg.sweep_budget));
  }
  if (cfg.sweep.empty()) throw ValidationError("sweep grid is empty");
  auto s = open_session(cfg);
  auto victim = load_model(s, "victim");

  std::vector<std::pair<ModelRecord, NetworkPtr>> suspects;
  for (const auto& r : s.registry.list()) {
    if (is_suspect(r.role)) suspects.emplace_back(r, s.registry.load_network(r));
  }

  nlohmann::json table = nlohmann::json::array();
  std::string csv = "cell,eta,alpha,beta,gamma,m,n,accepted,k_used,aruc,separation\n";
  std::vector<Bar> bars;
  for (const auto& cell : cfg.sweep) {
    const auto dir = s.layout.sweep_dir() / cell.name;
    nlohmann::json result;
    if (opts.resume && fs::exists(dir / "result.json")) {
      result = read_json(dir / "result.json");
      log::info("resume: keeping sweep cell %s", cell.name.c_str());
    } else {
      auto g = effective_gan(cfg);
      g.eta = cell.eta;
      g.alpha = cell.alpha;
      g.beta = cell.beta;
      g.gamma = cell.gamma;
      g.m = cell.m;
      g.n = cell.n;
      auto run = run_fingerprinting(s, *victim.net, g);
      write_json(dir / "gan_log.json", gan_log_json(run.gan));
      const auto k_used = std::min(run.accepted.size(), g.k);
      result = {{"cell", cell.name}, {"eta", g.eta},        {"alpha", g.alpha},
                {"beta", g.beta},    {"gamma", g.gamma},   {"m", g.m},
                {"n", g.n},          {"candidates", run.scored.size()}, {"accepted", run.accepted.size()},
                {"k_used", k_used}};
      if (k_used == 0) {
        result["aruc"] = 0.0;
        result["separation"] = nullptr;
      } else {
        std::vector<FingerprintPair> pairs;
        for (std::size_t i = 0; i < k_used; ++i) pairs.push_back(run.accepted[i].pair);
        const auto set = make_fingerprint_set(std::move(pairs), "victim", g, "sweep:" + cell.name);
        Populations pop;
        for (auto& [record, net] : suspects) {
          ModelOracle oracle(record.model_id, net);
          pop.add(record, compute_ard(set, oracle).ard);
        }
        if (pop.pirated.empty() || pop.irrelevant.empty()) {
          throw ValidationError("sweep needs pirated and irrelevant suspects in the registry");
        }
        nlohmann::json summary;
        write_evaluation(dir, pop, cfg.grid_size, cell.name, summary);
        result["aruc"] = summary["aruc"];
        result["separation"] = summary["separation"];
      }
      write_json(dir / "result.json", result);
      log::info("sweep %s: accepted %zu, ARUC %.4f", cell.name.c_str(), run.accepted.size(),
                result["aruc"].get<double>());
    }
    table.push_back(result);
    csv += cell.name + "," + fixed(cell.eta, 3) + "," + fixed(cell.alpha, 3) + "," + fixed(cell.beta, 3) + "," +
           fixed(cell.gamma, 3) + "," + std::to_string(cell.m) + "," + std::to_string(cell.n) + "," +
           std::to_string(result["accepted"].get<std::size_t>()) + "," +
           std::to_string(result["k_used"].get<std::size_t>()) + "," + fixed(result["aruc"].get<double>()) + "," +
           (result["separation"].is_null() ? "" : fixed(result["separation"].get<double>())) + "\n";
    bars.push_back({cell.name, result["aruc"].get<double>()});
  }
  write_json(s.layout.sweep_dir() / "table.json", table);
  write_text(s.layout.sweep_dir() / "table.csv", csv);
  write_bars_svg(s.layout.sweep_dir() / "aruc.svg", bars, "ARUC per sweep cell");
  return {{"cells", table}};
}

}  // namespace ganfinger
