#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ganfinger/fingerprint_gan.hpp"
#include "ganfinger/networks.hpp"
#include "ganfinger/post_processing.hpp"
#include "ganfinger/training.hpp"

namespace ganfinger {

enum class Profile { desk, full };
const char* profile_name(Profile p);
Profile parse_profile(const std::string& name);

struct ZooSpec {
  Arch victim_arch = Arch::small_resnet_20;
  /// Pool and irrelevant members cycle through these lists in order.
  std::vector<Arch> pool_archs;
  std::vector<Arch> irrelevant_archs;
  /// Use each arch's full channel width instead of the reduced desk width.
  bool full_width = false;
  /// Members per pool; positive and negative pools have equal sizes.
  std::size_t pool_train = 5;
  std::size_t pool_validation = 3;
  std::size_t irrelevant = 5;
  TrainConfig victim;
  /// Negative and irrelevant networks.
  TrainConfig train;
  /// Positive-pool extraction and extraction attacks.
  TrainConfig extract;
  /// Fine-tuning and adversarial-training attacks.
  TrainConfig finetune;
};

/// One sweep/ablation cell: generator loss weights and pool sizes.
struct SweepCell {
  std::string name;
  double eta = 1.0;
  double alpha = 5.0;
  double beta = 5.0;
  double gamma = 10.0;
  std::size_t m = 5;
  std::size_t n = 5;
};

struct ExperimentConfig {
  Profile profile = Profile::desk;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs/desk";
  std::string dataset = "shapes10";
  std::string data_dir;
  double split_fraction = 0.5;
  ZooSpec zoo;
  std::vector<AttackDescriptor> attacks;
  GanConfig gan;
  double verify_threshold = 0.5;
  std::size_t grid_size = 1000;
  std::size_t forge_examples = 100;
  std::size_t sweep_budget = 4;
  std::vector<SweepCell> sweep;
};

/// Built-in defaults for a profile; the shipped YAML files spell these out.
ExperimentConfig default_config(Profile profile);

/// Reads a YAML document. Its `profile` key (or `profile_override`) picks the
/// defaults that unspecified keys fall back to. Throws ConfigError.
ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        std::optional<Profile> profile_override = std::nullopt);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j,
                                             std::optional<Profile> profile_override = std::nullopt);
nlohmann::json to_json(const ExperimentConfig& cfg);

/// Pirated plus irrelevant suspects the zoo will contain.
std::size_t suspect_count(const ExperimentConfig& cfg);
/// Largest epoch count any single network is trained for.
int max_epochs_per_network(const ExperimentConfig& cfg);

/// Structural checks, plus the desk bounds: at most 40 suspects and at most
/// 20 training epochs per network. Throws ValidationError.
void validate(const ExperimentConfig& cfg);

/// ArchSpec for `arch` on the configured dataset's input shape.
ArchSpec arch_for(const ExperimentConfig& cfg, Arch arch, std::int64_t channels, std::int64_t height,
                  std::int64_t width, std::int64_t classes);

}  // namespace ganfinger
