#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ganfinger/networks.hpp"

namespace ganfinger {

enum class Role { victim, positive, negative, pirated, irrelevant };

std::string_view role_name(Role role);
Role parse_role(std::string_view name);

/// Where a derived network came from: its parent record and the attack that
/// produced it. `descriptor` is the serialized AttackDescriptor (or the
/// extraction recipe for positive-pool members).
struct Lineage {
  std::string parent_id;
  std::string attack;
  nlohmann::json descriptor = nlohmann::json::object();

  bool operator==(const Lineage&) const = default;
};

struct ModelRecord {
  std::string model_id;
  Role role = Role::victim;
  ArchSpec arch;
  std::optional<Lineage> lineage;
  std::string weights_ref;  ///< relative to the registry root
  double test_accuracy = 0.0;
  std::uint64_t seed = 0;
  /// Free-form provenance: training log, label source, agreement with victim.
  nlohmann::json metadata = nlohmann::json::object();

  bool operator==(const ModelRecord&) const = default;
};

/// Throws InvariantError if role and lineage disagree or accuracy is outside [0, 1].
void validate_record(const ModelRecord& record);

nlohmann::json to_json(const ModelRecord& record);
ModelRecord record_from_json(const nlohmann::json& j);

struct RecordFilter {
  std::optional<Role> role;
  std::optional<Arch> arch;
  std::optional<std::string> parent_id;
};

/// Manifest-backed model store:
///   <root>/<model_id>/weights.bin    GFW1 tensors
///   <root>/<model_id>/manifest.json  every ModelRecord field
/// Writes take an exclusive advisory lock on <root>/.lock; reads do not.
class Registry {
 public:
  explicit Registry(std::filesystem::path root);

  const std::filesystem::path& root() const noexcept { return root_; }

  /// Append-or-replace keyed by model_id. Stores the weights and fills in
  /// weights_ref on the returned copy.
  ModelRecord put(ModelRecord record, const Network& weights);
  ModelRecord get(const std::string& model_id) const;
  bool contains(const std::string& model_id) const;
  /// Sorted by model_id.
  std::vector<ModelRecord> list(const RecordFilter& filter = {}) const;

  /// Rebuilds the network and loads its stored weights.
  NetworkPtr load_network(const ModelRecord& record) const;
  NetworkPtr load_network(const std::string& model_id) const { return load_network(get(model_id)); }

  /// Follows lineage parents until a record without lineage.
  ModelRecord lineage_root(const std::string& model_id) const;

  /// Directory for derived per-model artifacts (query caches).
  std::filesystem::path cache_dir() const { return root_ / ".cache"; }

 private:
  std::filesystem::path root_;
};

}  // namespace ganfinger
