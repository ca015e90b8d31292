#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "ganfinger/model_zoo.hpp"

namespace ganfinger {

enum class AttackKind { ftll, ftal, rtll, rtal, prune, extract_label, extract_prob, adv_train };

std::string_view attack_kind_name(AttackKind kind);
AttackKind parse_attack_kind(std::string_view name);

/// One attacker post-processing step. Parameter presence is tied to kind:
/// prune_rate iff prune; fgsm_eps and rounds iff adv_train; target_arch iff
/// extract_label / extract_prob. epochs applies to every kind but prune.
struct AttackDescriptor {
  AttackKind kind = AttackKind::ftll;
  std::optional<int> epochs;
  std::optional<double> prune_rate;
  std::optional<double> fgsm_eps;
  std::optional<int> rounds;
  std::optional<Arch> target_arch;

  bool operator==(const AttackDescriptor&) const = default;

  /// Short stable name for model ids and plots, e.g. "prune-0.3".
  std::string label() const;
};

/// Throws ValidationError on a parameter/kind mismatch or out-of-range value.
void validate(const AttackDescriptor& attack);
nlohmann::json to_json(const AttackDescriptor& attack);
AttackDescriptor attack_from_json(const nlohmann::json& j);

/// Exactly floor(p * n) for p in [0, 1], robust to representation error
/// (0.3 * 10 is 3, not 2).
std::int64_t prune_count(std::int64_t n, double p);

/// Zeroes the prune_count(numel, p) smallest-magnitude entries of `weights`
/// in place; ties go to the lower flat index.
void prune_tensor_(torch::Tensor& weights, double p);

/// Magnitude pruning of every conv/linear weight tensor, layer by layer.
NetworkPtr prune(Network& source, double p);

enum class FinetuneMode { ftll, ftal, rtll, rtal };

/// FTLL/RTLL update only the final affine layer (RTLL re-initializes it
/// first) and leave all other tensors bit-identical; FTAL/RTAL update every
/// layer (RTAL re-initializes the final layer first).
NetworkPtr finetune(Network& source, FinetuneMode mode, const torch::Tensor& inputs, const torch::Tensor& labels,
                    TrainConfig cfg, std::uint64_t seed);

enum class ExtractionMode { label, prob };

/// Trains a fresh `target` network on the victim's answers: hard labels with
/// cross-entropy, or probabilities with KL(victim || extracted).
NetworkPtr extract(const VictimQueries& queries, const torch::Tensor& inputs, const ArchSpec& target,
                   ExtractionMode mode, const TrainConfig& cfg, std::uint64_t seed);

/// Single-step untargeted FGSM with L-infinity budget eps, clipped to [0, 1].
torch::Tensor fgsm(Network& net, const torch::Tensor& inputs, const torch::Tensor& labels, double eps);
double fgsm_robust_accuracy(Network& net, const torch::Tensor& inputs, const torch::Tensor& labels, double eps);

/// `rounds` rounds of: craft FGSM examples on `inputs` against the current
/// network, then train cfg.epochs epochs on clean + adversarial examples.
NetworkPtr adversarial_train(Network& source, const torch::Tensor& inputs, const torch::Tensor& labels, double eps,
                             int rounds, const TrainConfig& cfg, std::uint64_t seed);

/// Data and recipes shared by every attack in a matrix.
struct AttackContext {
  const Dataset& data;
  const DataSplit& split;
  const TrainedModel& victim;
  const VictimQueries& queries;
  TrainConfig finetune_cfg;
  TrainConfig extract_cfg;
};

/// Runs one attack against `parent` and returns a role=pirated record with
/// lineage to `parent`. adv_train requires a label-extraction parent;
/// extraction attacks read the victim's cached answers, never `parent`'s.
TrainedModel apply_attack(const AttackContext& ctx, const TrainedModel& parent, const AttackDescriptor& attack,
                          std::uint64_t seed, const std::string& model_id);

}  // namespace ganfinger
