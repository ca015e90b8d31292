#include "ganfinger/registry.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "ganfinger/error.hpp"
#include "ganfinger/tensor_io.hpp"

namespace ganfinger {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kWeights = "weights.bin";

class LockFile {
 public:
  explicit LockFile(const fs::path& path) : fd_(::open(path.c_str(), O_CREAT | O_RDWR, 0644)) {
    if (fd_ < 0 || ::flock(fd_, LOCK_EX) != 0) throw Error("cannot lock registry at " + path.string());
  }
  ~LockFile() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  LockFile(const LockFile&) = delete;
  LockFile& operator=(const LockFile&) = delete;

 private:
  int fd_;
};

void check_id(const std::string& id) {
  if (id.empty() || id.front() == '.' ||
      !std::all_of(id.begin(), id.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.'; })) {
    throw ValidationError("invalid model_id '" + id + "'");
  }
}

}  // namespace

std::string_view role_name(Role role) {
  switch (role) {
    case Role::victim: return "victim";
    case Role::positive: return "positive";
    case Role::negative: return "negative";
    case Role::pirated: return "pirated";
    case Role::irrelevant: return "irrelevant";
  }
  return "victim";
}

Role parse_role(std::string_view name) {
  for (Role r : {Role::victim, Role::positive, Role::negative, Role::pirated, Role::irrelevant}) {
    if (role_name(r) == name) return r;
  }
  throw ConfigError("unknown role '" + std::string(name) + "'");
}

void validate_record(const ModelRecord& record) {
  check_id(record.model_id);
  const bool derived = record.role == Role::positive || record.role == Role::pirated;
  const bool independent = record.role == Role::negative || record.role == Role::irrelevant;
  if (derived && !record.lineage) {
    throw InvariantError("record " + record.model_id + " has role " + std::string(role_name(record.role)) +
                         " but no lineage");
  }
  if (independent && record.lineage) {
    throw InvariantError("record " + record.model_id + " has role " + std::string(role_name(record.role)) +
                         " but carries lineage");
  }
  if (!(record.test_accuracy >= 0.0 && record.test_accuracy <= 1.0)) {
    throw InvariantError("record " + record.model_id + " has test_accuracy outside [0, 1]");
  }
}

nlohmann::json to_json(const ModelRecord& r) {
  nlohmann::json j = {{"model_id", r.model_id},       {"role", role_name(r.role)},
                      {"arch", to_json(r.arch)},      {"weights_ref", r.weights_ref},
                      {"test_accuracy", r.test_accuracy}, {"seed", r.seed},
                      {"metadata", r.metadata},       {"lineage", nullptr}};
  if (r.lineage) {
    j["lineage"] = {{"parent_id", r.lineage->parent_id},
                    {"attack", r.lineage->attack},
                    {"descriptor", r.lineage->descriptor}};
  }
  return j;
}

ModelRecord record_from_json(const nlohmann::json& j) {
  ModelRecord r;
  try {
    r.model_id = j.at("model_id").get<std::string>();
    r.role = parse_role(j.at("role").get<std::string>());
    r.arch = arch_spec_from_json(j.at("arch"));
    r.weights_ref = j.at("weights_ref").get<std::string>();
    r.test_accuracy = j.at("test_accuracy").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.metadata = j.value("metadata", nlohmann::json::object());
    if (const auto& l = j.at("lineage"); !l.is_null()) {
      r.lineage = Lineage{l.at("parent_id").get<std::string>(), l.at("attack").get<std::string>(),
                          l.value("descriptor", nlohmann::json::object())};
    }
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("manifest", e.what());
  }
  return r;
}

Registry::Registry(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

ModelRecord Registry::put(ModelRecord record, const Network& weights) {
  validate_record(record);
  if (!(weights.spec() == record.arch)) {
    auto normalized = record.arch;
    normalized.base_width = effective_base_width(normalized);
    auto actual = weights.spec();
    actual.base_width = effective_base_width(actual);
    if (!(normalized == actual)) throw ValidationError("weights do not match the record's architecture");
  }
  record.arch.base_width = effective_base_width(record.arch);
  LockFile lock(root_ / ".lock");
  const auto dir = root_ / record.model_id;
  fs::create_directories(dir);
  save_module(weights, dir / kWeights);
  record.weights_ref = record.model_id + "/" + kWeights;
  const auto tmp = dir / "manifest.json.tmp";
  {
    std::ofstream out(tmp);
    out << to_json(record).dump(2) << '\n';
    if (!out) throw Error("cannot write manifest for " + record.model_id);
  }
  fs::rename(tmp, dir / kManifest);
  return record;
}

ModelRecord Registry::get(const std::string& model_id) const {
  const auto path = root_ / model_id / kManifest;
  std::ifstream in(path);
  if (!in) throw NotFoundError("model '" + model_id + "' not found in registry " + root_.string());
  try {
    return record_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw IntegrityError("manifest", e.what());
  }
}

bool Registry::contains(const std::string& model_id) const { return fs::exists(root_ / model_id / kManifest); }

std::vector<ModelRecord> Registry::list(const RecordFilter& filter) const {
  std::set<std::string> ids;
  for (const auto& entry : fs::directory_iterator(root_)) {
    if (entry.is_directory() && fs::exists(entry.path() / kManifest)) ids.insert(entry.path().filename().string());
  }
  std::vector<ModelRecord> out;
  for (const auto& id : ids) {
    auto r = get(id);
    if (filter.role && r.role != *filter.role) continue;
    if (filter.arch && r.arch.arch != *filter.arch) continue;
    if (filter.parent_id && (!r.lineage || r.lineage->parent_id != *filter.parent_id)) continue;
    out.push_back(std::move(r));
  }
  return out;
}

NetworkPtr Registry::load_network(const ModelRecord& record) const {
  const auto path = root_ / record.weights_ref;
  if (record.weights_ref.empty() || !fs::exists(path)) {
    throw NotFoundError("weights for model '" + record.model_id + "' missing from registry");
  }
  auto net = make_network(record.arch, record.seed);
  load_module(*net, path);
  return net;
}

ModelRecord Registry::lineage_root(const std::string& model_id) const {
  auto record = get(model_id);
  std::set<std::string> seen{record.model_id};
  while (record.lineage) {
    record = get(record.lineage->parent_id);
    if (!seen.insert(record.model_id).second) throw IntegrityError("lineage", "cycle at " + record.model_id);
  }
  return record;
}

}  // namespace ganfinger
