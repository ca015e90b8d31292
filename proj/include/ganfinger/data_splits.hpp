#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ganfinger/dataset.hpp"

namespace ganfinger {

/// Disjoint partition of a dataset's training portion into the defender's
/// set (d_v) and the attacker's set (d_p), plus the held-out evaluation
/// indices. Indices refer to the source dataset and are stored sorted.
struct DataSplit {
  std::string split_id;
  std::vector<std::int64_t> d_v;
  std::vector<std::int64_t> d_p;
  std::vector<std::int64_t> eval_set;
  std::uint64_t seed = 0;
  std::string source_dataset;

  bool operator==(const DataSplit&) const = default;
};

/// Stratified split of the training portion [0, train_size) described by
/// `labels`; items [train_size, labels.size()) become eval_set.
/// `fraction` is |d_v| / |training portion| and must lie in (0, 1).
DataSplit split_labels(std::span<const std::int64_t> labels, std::int64_t train_size, std::uint64_t seed,
                       double fraction, const std::string& source_tag);

/// Loads `source` through load_dataset() and splits it.
DataSplit split_dataset(const std::string& source, std::uint64_t seed, double fraction = 0.5,
                        const DatasetOptions& options = {});
DataSplit split_dataset(const Dataset& source, std::uint64_t seed, double fraction = 0.5);

/// Throws IntegrityError naming the first violated invariant.
void validate_split(const DataSplit& split);
/// Additionally checks exact coverage of the dataset's training portion.
void validate_split(const DataSplit& split, const Dataset& source);

void persist_split(const DataSplit& split, const std::filesystem::path& path);
DataSplit load_split(const std::filesystem::path& path);

}  // namespace ganfinger
