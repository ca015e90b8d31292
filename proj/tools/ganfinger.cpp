// Command-line driver for the fingerprinting pipeline.
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ganfinger/error.hpp"
#include "ganfinger/experiment_config.hpp"
#include "ganfinger/log.hpp"
#include "ganfinger/harness.hpp"

namespace gf = ganfinger;

int main(int argc, char** argv) {
  CLI::App app{"Conferrable adversarial fingerprints: build a zoo, fingerprint a victim, verify suspects."};
  app.require_subcommand(1);

  std::string config_path;
  std::string profile;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool resume = false;
  bool quiet = false;
  app.add_option("--config", config_path, "YAML experiment config")->check(CLI::ExistingFile);
  app.add_option("--profile", profile, "desk or full defaults")->check(CLI::IsMember({"desk", "full"}));
  app.add_option("--seed", seed, "global seed");
  app.add_option("--out", out, "output directory");
  app.add_flag("--resume", resume, "keep artifacts that already exist");
  app.add_flag("-q,--quiet", quiet, "only print the result document");

  std::vector<std::string> suspects;
  bool replay = false;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"show-config", "print the effective configuration and exit"},
      {"prepare-data", "load the dataset and write the D_v / D_p / eval split"},
      {"build-zoo", "train victim, pools, irrelevant networks and the attack matrix"},
      {"attack", "run the attack matrix against the stored victim"},
      {"fingerprint", "train the generator and emit the conferrable fingerprint set"},
      {"verify", "compute ARD reports for suspects and journal their answers"},
      {"evaluate", "robustness/uniqueness curves and ARUC over the suspect populations"},
      {"forge-check", "label matching of original examples and forged-set rejection"},
      {"sweep", "loss-weight and pool-size grid, one ARUC per cell"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    if (name == "verify") {
      sub->add_option("--suspect", suspects, "model id to verify (repeatable; default all)");
      sub->add_flag("--replay", replay, "answer from recorded journals instead of the networks");
    }
  }
  CLI11_PARSE(app, argc, argv);
  gf::log::set_level(quiet ? gf::log::Level::warn : gf::log::Level::info);

  try {
    std::optional<gf::Profile> profile_override;
    if (!profile.empty()) profile_override = gf::parse_profile(profile);
    gf::ExperimentConfig cfg = config_path.empty() ? gf::default_config(profile_override.value_or(gf::Profile::desk))
                                                   : gf::load_experiment_config(config_path, profile_override);
    if (seed) cfg.seed = *seed;
    if (!out.empty()) cfg.out_dir = out;
    gf::validate(cfg);

    const gf::RunOptions opts{resume};
    const auto cmd = app.get_subcommands().front()->get_name();
    nlohmann::json result;
    if (cmd == "show-config") {
      result = gf::to_json(cfg);
    } else if (cmd == "prepare-data") {
      result = gf::cmd_prepare_data(cfg, opts);
    } else if (cmd == "build-zoo") {
      result = gf::cmd_build_zoo(cfg, opts);
    } else if (cmd == "attack") {
      result = gf::cmd_attack(cfg, opts);
    } else if (cmd == "fingerprint") {
      result = gf::cmd_fingerprint(cfg, opts);
    } else if (cmd == "verify") {
      result = gf::cmd_verify(cfg, gf::VerifyOptions{suspects, replay}, opts);
    } else if (cmd == "evaluate") {
      result = gf::cmd_evaluate(cfg, opts);
    } else if (cmd == "forge-check") {
      result = gf::cmd_forge_check(cfg, opts);
    } else {
      result = gf::cmd_sweep(cfg, opts);
    }
    std::cout << result.dump(2) << '\n';
    return 0;
  } catch (const std::exception& e) {
    gf::log::error("%s", e.what());
    return gf::exit_code(e);
  }
}
