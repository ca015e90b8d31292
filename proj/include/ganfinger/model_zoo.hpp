#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ganfinger/data_splits.hpp"
#include "ganfinger/registry.hpp"
#include "ganfinger/training.hpp"

namespace ganfinger {

/// A record together with its live network.
struct TrainedModel {
  ModelRecord record;
  NetworkPtr net;
};

/// The victim's answers on the attacker's query set: one hard label and one
/// probability vector per d_p item, in d_p order.
struct VictimQueries {
  torch::Tensor labels;  ///< [|d_p|] int64
  torch::Tensor probs;   ///< [|d_p|, C] float
};

VictimQueries query_victim(Network& victim, const torch::Tensor& inputs);
/// Loads <registry>/.cache/<victim_id>.dp-queries.bin or queries once and stores it.
VictimQueries cached_victim_queries(const Registry& registry, const ModelRecord& victim_record, Network& victim,
                                    const Dataset& data, const DataSplit& split);

/// Victim f_v: trained on d_v with ground-truth labels.
TrainedModel train_victim(const Dataset& data, const DataSplit& split, const ArchSpec& arch, const TrainConfig& cfg,
                          std::uint64_t seed, const std::string& model_id = "victim");

/// Independently trained network: fresh initialization, d_v, ground-truth
/// labels. `role` is negative for pool members, irrelevant for suspects.
TrainedModel train_negative(const Dataset& data, const DataSplit& split, const ArchSpec& arch, const TrainConfig& cfg,
                            std::uint64_t seed, const std::string& model_id, Role role = Role::negative);

/// Positive-pool member: label-based extraction from the victim using only
/// d_p inputs and the victim's hard labels.
TrainedModel train_positive_extraction(const TrainedModel& victim, const VictimQueries& queries, const Dataset& data,
                                       const DataSplit& split, const ArchSpec& arch, const TrainConfig& cfg,
                                       std::uint64_t seed, const std::string& model_id);

enum class PoolPurpose { train, validation };

struct NetworkPool {
  std::string pool_id;
  Role role = Role::positive;
  std::vector<std::string> member_ids;
  PoolPurpose purpose = PoolPurpose::train;
};

struct PoolSet {
  NetworkPool positive_train;
  NetworkPool positive_validation;
  NetworkPool negative_train;
  NetworkPool negative_validation;
};

/// Assigns positive and negative records (in model_id order) to train and
/// validation pools. Throws CapacityError when a role has fewer than
/// m_train + m_val records.
PoolSet build_pools(std::span<const ModelRecord> records, std::size_t m_train, std::size_t m_val);

/// Top-1 accuracy over the given dataset indices.
double evaluate_accuracy(Network& net, const Dataset& data, std::span<const std::int64_t> indices);
/// Loads the record's weights first; NotFoundError when they are missing.
double evaluate_accuracy(const Registry& registry, const ModelRecord& record, const Dataset& data,
                         std::span<const std::int64_t> indices);

}  // namespace ganfinger
