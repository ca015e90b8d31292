#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ganfinger/experiment_config.hpp"
#include "ganfinger/verification.hpp"

namespace ganfinger {

/// Artifact locations under an experiment's output directory.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path config() const { return root / "config.json"; }
  std::filesystem::path split() const { return root / "data" / "split.json"; }
  std::filesystem::path registry() const { return root / "registry"; }
  std::filesystem::path zoo_summary() const { return root / "zoo" / "summary.json"; }
  std::filesystem::path fingerprint_dir() const { return root / "fingerprint"; }
  std::filesystem::path fingerprints() const { return fingerprint_dir() / "fingerprints.bin"; }
  std::filesystem::path generator() const { return fingerprint_dir() / "generator.bin"; }
  std::filesystem::path gan_log() const { return fingerprint_dir() / "gan_log.json"; }
  std::filesystem::path report(const std::string& id) const { return root / "verify" / "reports" / (id + ".json"); }
  std::filesystem::path journal(const std::string& id) const {
    return root / "verify" / "journal" / (id + ".jsonl");
  }
  std::filesystem::path evaluate_dir() const { return root / "evaluate"; }
  std::filesystem::path forge_report() const { return root / "forge" / "report.json"; }
  std::filesystem::path sweep_dir() const { return root / "sweep"; }
};

struct RunOptions {
  /// Skip steps whose output artifacts already exist.
  bool resume = false;
};

struct VerifyOptions {
  /// Restrict to these model ids; empty means every registered network.
  std::vector<std::string> suspects;
  /// Answer from the recorded journals instead of querying the networks.
  bool replay = false;
};

// Each command returns a JSON summary of what it produced.
nlohmann::json cmd_prepare_data(const ExperimentConfig& cfg, const RunOptions& opts = {});
/// Victim, positive/negative pools, irrelevant suspects, then the attack matrix.
nlohmann::json cmd_build_zoo(const ExperimentConfig& cfg, const RunOptions& opts = {});
/// The attack matrix alone, against an existing victim.
nlohmann::json cmd_attack(const ExperimentConfig& cfg, const RunOptions& opts = {});
/// Throws ShortfallError after saving the generator and log when fewer than K pairs pass.
nlohmann::json cmd_fingerprint(const ExperimentConfig& cfg, const RunOptions& opts = {});
nlohmann::json cmd_verify(const ExperimentConfig& cfg, const VerifyOptions& verify = {}, const RunOptions& opts = {});
nlohmann::json cmd_evaluate(const ExperimentConfig& cfg, const RunOptions& opts = {});
nlohmann::json cmd_forge_check(const ExperimentConfig& cfg, const RunOptions& opts = {});
/// Throws ValidationError before any training when the grid exceeds the budget.
nlohmann::json cmd_sweep(const ExperimentConfig& cfg, const RunOptions& opts = {});

/// Model ids the harness assigns; pools take members in this (sorted) order.
std::string positive_id(std::size_t i);
std::string negative_id(std::size_t i);
std::string irrelevant_id(std::size_t i);
std::string pirate_id(std::size_t i, const AttackDescriptor& attack);

}  // namespace ganfinger
