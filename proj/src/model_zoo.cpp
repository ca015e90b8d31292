#include "ganfinger/model_zoo.hpp"

#include <algorithm>

#include "ganfinger/error.hpp"
#include "ganfinger/tensor_io.hpp"

namespace ganfinger {

namespace {

nlohmann::json loss_curve(const std::vector<EpochStats>& log) {
  auto curve = nlohmann::json::array();
  for (const auto& e : log) curve.push_back(e.mean_loss);
  return curve;
}

nlohmann::json training_metadata(const char* data, const char* label_source, const TrainConfig& cfg,
                                 const std::vector<EpochStats>& log) {
  return {{"data", data}, {"label_source", label_source}, {"config", to_json(cfg)}, {"epoch_loss", loss_curve(log)}};
}

TrainedModel train_on_ground_truth(const Dataset& data, const DataSplit& split, const ArchSpec& arch,
                                   const TrainConfig& cfg, std::uint64_t seed, const std::string& model_id, Role role) {
  auto net = make_network(arch, seed);
  const auto log =
      train_classifier(*net, data.images_at(split.d_v), Targets::hard(data.labels_at(split.d_v)), cfg, seed);
  ModelRecord record;
  record.model_id = model_id;
  record.role = role;
  record.arch = net->spec();
  record.seed = seed;
  record.test_accuracy = evaluate_accuracy(*net, data, split.eval_set);
  record.metadata["training"] = training_metadata("d_v", "ground_truth", cfg, log);
  return {std::move(record), std::move(net)};
}

}  // namespace

VictimQueries query_victim(Network& victim, const torch::Tensor& inputs) {
  VictimQueries q;
  q.probs = predict_probs(victim, inputs);
  q.labels = q.probs.argmax(1);
  return q;
}

VictimQueries cached_victim_queries(const Registry& registry, const ModelRecord& victim_record, Network& victim,
                                    const Dataset& data, const DataSplit& split) {
  const auto path = registry.cache_dir() / (victim_record.model_id + ".dp-queries.bin");
  if (std::filesystem::exists(path)) {
    const auto stored = read_tensors(path);
    if (stored.size() == 2 && stored[0].first == "labels" && stored[1].first == "probs" &&
        stored[0].second.size(0) == static_cast<std::int64_t>(split.d_p.size())) {
      return {stored[0].second, stored[1].second};
    }
  }
  auto q = query_victim(victim, data.images_at(split.d_p));
  write_tensors(path, {{"labels", q.labels}, {"probs", q.probs}});
  return q;
}

TrainedModel train_victim(const Dataset& data, const DataSplit& split, const ArchSpec& arch, const TrainConfig& cfg,
                          std::uint64_t seed, const std::string& model_id) {
  return train_on_ground_truth(data, split, arch, cfg, seed, model_id, Role::victim);
}

TrainedModel train_negative(const Dataset& data, const DataSplit& split, const ArchSpec& arch, const TrainConfig& cfg,
                            std::uint64_t seed, const std::string& model_id, Role role) {
  if (role != Role::negative && role != Role::irrelevant) {
    throw ValidationError("independently trained networks must be negative or irrelevant");
  }
  return train_on_ground_truth(data, split, arch, cfg, seed, model_id, role);
}

TrainedModel train_positive_extraction(const TrainedModel& victim, const VictimQueries& queries, const Dataset& data,
                                       const DataSplit& split, const ArchSpec& arch, const TrainConfig& cfg,
                                       std::uint64_t seed, const std::string& model_id) {
  auto net = make_network(arch, seed);
  const auto log = train_classifier(*net, data.images_at(split.d_p), Targets::hard(queries.labels), cfg, seed);

  ModelRecord record;
  record.model_id = model_id;
  record.role = Role::positive;
  record.arch = net->spec();
  record.seed = seed;
  record.lineage = Lineage{victim.record.model_id, "extract-label",
                           {{"kind", "extract_label"}, {"target_arch", arch_tag(arch.arch)}}};
  const auto eval_inputs = data.images_at(split.eval_set);
  record.test_accuracy = accuracy(*net, eval_inputs, data.labels_at(split.eval_set));
  record.metadata["victim_agreement"] = agreement(predict_labels(*net, eval_inputs), predict_labels(*victim.net, eval_inputs));
  record.metadata["training"] = training_metadata("d_p", "victim_labels", cfg, log);
  return {std::move(record), std::move(net)};
}

PoolSet build_pools(std::span<const ModelRecord> records, std::size_t m_train, std::size_t m_val) {
  auto members_of = [&](Role role) {
    std::vector<std::string> ids;
    for (const auto& r : records) {
      if (r.role == role) ids.push_back(r.model_id);
    }
    std::sort(ids.begin(), ids.end());
    if (ids.size() < m_train + m_val) {
      throw CapacityError("not enough " + std::string(role_name(role)) + " networks for the pools", ids.size(),
                          m_train + m_val);
    }
    return ids;
  };
  auto make_pool = [](Role role, PoolPurpose purpose, std::vector<std::string> ids) {
    const std::string id = std::string(role_name(role)) + (purpose == PoolPurpose::train ? "-train" : "-validation");
    return NetworkPool{id, role, std::move(ids), purpose};
  };

  PoolSet pools;
  for (Role role : {Role::positive, Role::negative}) {
    const auto ids = members_of(role);
    auto train = make_pool(role, PoolPurpose::train,
                           {ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(m_train)});
    auto val = make_pool(role, PoolPurpose::validation,
                         {ids.begin() + static_cast<std::ptrdiff_t>(m_train),
                          ids.begin() + static_cast<std::ptrdiff_t>(m_train + m_val)});
    if (role == Role::positive) {
      pools.positive_train = std::move(train);
      pools.positive_validation = std::move(val);
    } else {
      pools.negative_train = std::move(train);
      pools.negative_validation = std::move(val);
    }
  }
  return pools;
}

double evaluate_accuracy(Network& net, const Dataset& data, std::span<const std::int64_t> indices) {
  return accuracy(net, data.images_at(indices), data.labels_at(indices));
}

double evaluate_accuracy(const Registry& registry, const ModelRecord& record, const Dataset& data,
                         std::span<const std::int64_t> indices) {
  auto net = registry.load_network(record);
  return evaluate_accuracy(*net, data, indices);
}

}  // namespace ganfinger
