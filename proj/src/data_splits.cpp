#include "ganfinger/data_splits.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "ganfinger/error.hpp"

namespace ganfinger {

namespace {

constexpr const char* kSplitFormat = "ganfinger.split/1";

std::string format_fraction(double fraction) {
  std::ostringstream out;
  out << fraction;
  return out.str();
}

// Both inputs sorted; returns the first shared value, or -1.
std::int64_t first_common(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b) {
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      return *i;
    }
  }
  return -1;
}

void check_sorted_unique(const std::vector<std::int64_t>& v, const char* field) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] < 0) throw IntegrityError(field, "negative index " + std::to_string(v[i]));
    if (i > 0 && v[i] <= v[i - 1]) throw IntegrityError(field, "indices not strictly increasing");
  }
}

}  // namespace

DataSplit split_labels(std::span<const std::int64_t> labels, std::int64_t train_size, std::uint64_t seed,
                       double fraction, const std::string& source_tag) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ValidationError("split fraction must lie in (0, 1), got " + format_fraction(fraction));
  }
  if (train_size < 0 || train_size > static_cast<std::int64_t>(labels.size())) {
    throw ValidationError("train_size outside the label range");
  }

  std::map<std::int64_t, std::vector<std::int64_t>> by_class;
  for (std::int64_t i = 0; i < train_size; ++i) by_class[labels[static_cast<std::size_t>(i)]].push_back(i);

  DataSplit split;
  split.seed = seed;
  split.source_dataset = source_tag;
  split.split_id = source_tag + "-s" + std::to_string(seed) + "-f" + format_fraction(fraction);

  std::mt19937_64 rng(seed);
  for (auto& [cls, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size())));
    split.d_v.insert(split.d_v.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
    split.d_p.insert(split.d_p.end(), members.begin() + static_cast<std::ptrdiff_t>(take), members.end());
  }
  std::sort(split.d_v.begin(), split.d_v.end());
  std::sort(split.d_p.begin(), split.d_p.end());
  for (auto i = train_size; i < static_cast<std::int64_t>(labels.size()); ++i) split.eval_set.push_back(i);
  return split;
}

DataSplit split_dataset(const Dataset& source, std::uint64_t seed, double fraction) {
  auto labels = source.labels.contiguous();
  std::span<const std::int64_t> view(labels.data_ptr<std::int64_t>(), static_cast<std::size_t>(labels.numel()));
  return split_labels(view, source.train_size, seed, fraction, source.tag);
}

DataSplit split_dataset(const std::string& source, std::uint64_t seed, double fraction,
                        const DatasetOptions& options) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ValidationError("split fraction must lie in (0, 1), got " + format_fraction(fraction));
  }
  return split_dataset(load_dataset(source, options), seed, fraction);
}

void validate_split(const DataSplit& split) {
  check_sorted_unique(split.d_v, "d_v");
  check_sorted_unique(split.d_p, "d_p");
  check_sorted_unique(split.eval_set, "eval_set");
  if (auto i = first_common(split.d_v, split.d_p); i >= 0) {
    throw IntegrityError("d_p", "index " + std::to_string(i) + " also appears in d_v");
  }
  if (auto i = first_common(split.d_v, split.eval_set); i >= 0) {
    throw IntegrityError("eval_set", "index " + std::to_string(i) + " also appears in d_v");
  }
  if (auto i = first_common(split.d_p, split.eval_set); i >= 0) {
    throw IntegrityError("eval_set", "index " + std::to_string(i) + " also appears in d_p");
  }
}

void validate_split(const DataSplit& split, const Dataset& source) {
  validate_split(split);
  if (split.source_dataset != source.tag) {
    throw IntegrityError("source_dataset", "split is for '" + split.source_dataset + "', dataset is '" + source.tag + "'");
  }
  const auto training = static_cast<std::size_t>(source.train_size);
  if (split.d_v.size() + split.d_p.size() != training ||
      (!split.d_v.empty() && split.d_v.back() >= source.train_size) ||
      (!split.d_p.empty() && split.d_p.back() >= source.train_size)) {
    throw IntegrityError("d_v", "d_v and d_p do not cover the training portion exactly");
  }
  for (auto i : split.eval_set) {
    if (i < source.train_size || i >= source.size()) {
      throw IntegrityError("eval_set", "index " + std::to_string(i) + " outside the held-out portion");
    }
  }
}

void persist_split(const DataSplit& split, const std::filesystem::path& path) {
  validate_split(split);
  nlohmann::json doc = {
      {"format", kSplitFormat},
      {"split_id", split.split_id},
      {"seed", split.seed},
      {"source_dataset", split.source_dataset},
      {"d_v", split.d_v},
      {"d_p", split.d_p},
      {"eval_set", split.eval_set},
  };
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write split file " + path.string());
  out << doc.dump() << '\n';
}

DataSplit load_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("split file not found: " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IntegrityError("<document>", e.what());
  }
  if (!doc.is_object()) throw IntegrityError("<document>", "expected an object");

  auto require = [&](const char* field) -> const nlohmann::json& {
    if (!doc.contains(field)) throw IntegrityError(field, "missing");
    return doc.at(field);
  };
  auto indices = [&](const char* field) {
    const auto& node = require(field);
    if (!node.is_array()) throw IntegrityError(field, "expected an array of indices");
    std::vector<std::int64_t> out;
    out.reserve(node.size());
    for (const auto& v : node) {
      if (!v.is_number_integer()) throw IntegrityError(field, "non-integer index");
      out.push_back(v.get<std::int64_t>());
    }
    return out;
  };

  if (require("format") != kSplitFormat) throw IntegrityError("format", "unsupported split format");
  DataSplit split;
  const auto& id = require("split_id");
  if (!id.is_string()) throw IntegrityError("split_id", "expected a string");
  split.split_id = id.get<std::string>();
  const auto& seed = require("seed");
  if (!seed.is_number_unsigned()) throw IntegrityError("seed", "expected a non-negative integer");
  split.seed = seed.get<std::uint64_t>();
  const auto& source = require("source_dataset");
  if (!source.is_string()) throw IntegrityError("source_dataset", "expected a string");
  split.source_dataset = source.get<std::string>();
  split.d_v = indices("d_v");
  split.d_p = indices("d_p");
  split.eval_set = indices("eval_set");
  validate_split(split);
  return split;
}

}  // namespace ganfinger
