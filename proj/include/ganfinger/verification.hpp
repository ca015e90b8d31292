#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "ganfinger/fingerprint_gan.hpp"
#include "ganfinger/networks.hpp"

namespace ganfinger {

enum class InputKind { x, x_prime };
const char* input_kind_name(InputKind kind);
InputKind parse_input_kind(const std::string& name);

/// One label request. `input` is a single [C, H, W] example.
struct Query {
  std::size_t pair_index = 0;
  InputKind kind = InputKind::x;
  torch::Tensor input;
};

/// Label-only black-box suspect: one input in, one class index out.
class LabelOracle {
 public:
  virtual ~LabelOracle() = default;
  virtual std::string suspect_id() const = 0;
  virtual std::int64_t label(const Query& query) = 0;
  /// Answers queries in order. The default asks one at a time; a failure
  /// reports how many answers were already produced via PartialResultError.
  virtual std::vector<std::int64_t> labels(std::span<const Query> queries);
};

/// Local network behind the oracle interface.
class ModelOracle : public LabelOracle {
 public:
  ModelOracle(std::string suspect_id, NetworkPtr net);
  std::string suspect_id() const override { return id_; }
  std::int64_t label(const Query& query) override;
  std::vector<std::int64_t> labels(std::span<const Query> queries) override;

 private:
  std::string id_;
  NetworkPtr net_;
};

/// One audited answer. Journals are ordered by (pair_index, input_kind).
struct JournalEntry {
  std::string suspect_id;
  std::size_t pair_index = 0;
  InputKind kind = InputKind::x;
  std::int64_t label = 0;

  bool operator==(const JournalEntry&) const = default;
};

/// JSON lines, one entry per line, sorted by (pair_index, input_kind).
void write_journal(const std::filesystem::path& path, std::vector<JournalEntry> entries);
std::vector<JournalEntry> read_journal(const std::filesystem::path& path);

/// Replays recorded answers; an unrecorded query throws NotFoundError.
class TranscriptOracle : public LabelOracle {
 public:
  TranscriptOracle(std::string suspect_id, const std::vector<JournalEntry>& entries);
  std::string suspect_id() const override { return id_; }
  std::int64_t label(const Query& query) override;

 private:
  std::string id_;
  std::map<std::pair<std::size_t, int>, std::int64_t> answers_;
};

/// Forwards to `inner` and appends every answer to `sink`.
class JournalingOracle : public LabelOracle {
 public:
  JournalingOracle(LabelOracle& inner, std::vector<JournalEntry>& sink) : inner_(inner), sink_(sink) {}
  std::string suspect_id() const override { return inner_.suspect_id(); }
  std::int64_t label(const Query& query) override;
  std::vector<std::int64_t> labels(std::span<const Query> queries) override;

 private:
  LabelOracle& inner_;
  std::vector<JournalEntry>& sink_;
};

struct PairOutcome {
  bool ori_mismatch = false;
  bool conf_match = false;
  bool operator==(const PairOutcome&) const = default;
};

struct ARDReport {
  std::string suspect_id;
  std::size_t k = 0;
  std::size_t ori_mismatches = 0;
  std::size_t conf_matches = 0;
  double p_ori = 0.0;
  double p_conf = 0.0;
  /// (conf_matches - ori_mismatches) / k, the correctly rounded exact value.
  double ard = 0.0;
  std::vector<PairOutcome> per_pair;

  bool operator==(const ARDReport&) const = default;
};

/// Pure label-level ARD. All four vectors have length K >= 1.
ARDReport ard_from_labels(const std::string& suspect_id, std::span<const std::int64_t> y_v_x,
                          std::span<const std::int64_t> y_v_xp, std::span<const std::int64_t> suspect_x,
                          std::span<const std::int64_t> suspect_xp);

/// Issues exactly 2K queries (x then x' for each pair, in pair order). An
/// oracle failure becomes PartialResultError carrying the answered count.
ARDReport compute_ard(const FingerprintSet& fingerprints, LabelOracle& suspect);

enum class Verdict { pirated, irrelevant };
const char* verdict_name(Verdict v);
/// Pirated iff ard > threshold (strict). Threshold must lie in (0, 1).
Verdict classify(const ARDReport& report, double threshold);

struct ARUCResult {
  std::vector<double> thresholds;
  std::vector<double> robustness;
  std::vector<double> uniqueness;
  double aruc = 0.0;
};

/// Thresholds t_i = i / (grid_size + 1), i = 1..grid_size. robustness(t) is
/// the share of pirated ARDs > t, uniqueness(t) the share of irrelevant ARDs
/// <= t. aruc integrates min(R, U) over (0, 1) by the trapezoid rule on the
/// grid, holding the end values constant out to 0 and 1.
ARUCResult compute_curves(std::span<const double> pirated_ards, std::span<const double> irrelevant_ards,
                          std::size_t grid_size = 1000);

/// Fraction of positions where the two label lists agree.
double label_matching_rate(std::span<const std::int64_t> a, std::span<const std::int64_t> b);
/// Queries both oracles on every example ([N, C, H, W]) as kind x.
double label_matching_rate(LabelOracle& a, LabelOracle& b, const torch::Tensor& examples);

nlohmann::json to_json(const ARDReport& r);
ARDReport ard_report_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ARUCResult& r);
/// threshold,robustness,uniqueness rows with a header line.
void write_curves_csv(const std::filesystem::path& path, const ARUCResult& r);

}  // namespace ganfinger
