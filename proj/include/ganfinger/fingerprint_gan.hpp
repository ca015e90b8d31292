#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "ganfinger/dataset.hpp"
#include "ganfinger/networks.hpp"
#include "ganfinger/training.hpp"

namespace ganfinger {

/// How the targeted-attack class t is chosen for each training example.
enum class TargetPolicy { least_likely, fixed };
/// Adversarial term: cross-entropy toward t, or a CW-style logit margin.
enum class AdvLossKind { cross_entropy, cw_margin };

struct GanConfig {
  // Generator loss weights: total = eta*adv + alpha*gan + beta*hinge + gamma*conf.
  double eta = 1.0;
  double alpha = 5.0;
  double beta = 5.0;
  double gamma = 10.0;
  /// Soft hinge bound on the per-example L2 norm of the perturbation.
  double c = 0.05;
  TargetPolicy target_policy = TargetPolicy::least_likely;
  std::int64_t target_class = 0;
  AdvLossKind adv_loss = AdvLossKind::cross_entropy;
  double cw_kappa = 0.0;
  /// Pool sizes M and N taking part in the conferrability term.
  std::size_t m = 20;
  std::size_t n = 20;
  int epochs = 60;
  std::int64_t batch_size = 128;
  double lr = 0.001;
  OptimizerKind optimizer = OptimizerKind::sgd;
  double momentum = 0.9;
  /// Number of fingerprint pairs K.
  std::size_t k = 100;
  double confer_threshold = 0.9;
  /// Generator output is perturbation_scale * tanh(.), an L-infinity cap.
  double perturbation_scale = 0.1;
  std::int64_t generator_width = 16;
  std::uint64_t seed = 0;

  bool operator==(const GanConfig&) const = default;
};

/// Throws ValidationError for out-of-range fields.
void validate(const GanConfig& cfg);
nlohmann::json to_json(const GanConfig& cfg);
GanConfig gan_config_from_json(const nlohmann::json& j, GanConfig defaults = {});
/// FNV-1a 64 of the canonical JSON form, as 16 hex digits.
std::string config_hash(const GanConfig& cfg);

/// Per-term generator/discriminator losses for one batch or one epoch mean.
struct LossBreakdown {
  double l_d = 0.0;
  double l_gan = 0.0;
  double l_adv = 0.0;
  double l_hinge = 0.0;
  double l_conf = 0.0;
  double l_p = 0.0;
  double l_n = 0.0;
  double l_total = 0.0;
};

/// eta*l_adv + alpha*l_gan + beta*l_hinge + gamma*l_conf.
double weighted_generator_loss(double l_adv, double l_gan, double l_hinge, double l_conf, const GanConfig& cfg);
/// Fills l_conf = l_p - l_n and l_total from the weighted sum.
LossBreakdown make_breakdown(double l_d, double l_gan, double l_adv, double l_hinge, double l_p, double l_n,
                             const GanConfig& cfg);
nlohmann::json to_json(const LossBreakdown& b);

/// KL(p || q) = sum p_i log(p_i / q_i), q floored at 1e-12. Both inputs
/// must be probability vectors of equal length (sum 1 within 1e-6).
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// -[log d_real + log(1 - d_fake)] averaged over the batch; scores are
/// clamped to [1e-7, 1 - 1e-7]. Throws ValidationError outside [0, 1].
double discriminator_loss(std::span<const double> d_real, std::span<const double> d_fake);
double discriminator_loss(double d_real, double d_fake);

// Differentiable batch forms used in training. Discriminator outputs are logits.
torch::Tensor discriminator_loss_from_logits(const torch::Tensor& real_logits, const torch::Tensor& fake_logits);
/// Non-saturating generator guidance term, mean of -log D(x').
torch::Tensor gan_guidance_loss(const torch::Tensor& fake_logits);
/// Mean over examples of max(0, ||perturbation||_2 - c).
torch::Tensor hinge_loss(const torch::Tensor& perturbation, double c);
/// Batch mean of KL(softmax(p_logits) || softmax(q_logits)).
torch::Tensor batch_kl(const torch::Tensor& p_logits, const torch::Tensor& q_logits);
torch::Tensor adversarial_loss(const torch::Tensor& victim_logits, const torch::Tensor& targets,
                               const GanConfig& cfg);
/// Target classes for a batch according to cfg.target_policy.
torch::Tensor choose_targets(Network& victim, const torch::Tensor& x, const GanConfig& cfg);

/// Encoder-decoder perturbation generator: x -> G(x) in
/// [-perturbation_scale, perturbation_scale].
class GeneratorImpl : public torch::nn::Module {
 public:
  GeneratorImpl(std::int64_t channels, std::int64_t width, double perturbation_scale);
  torch::Tensor forward(const torch::Tensor& x);
  /// clip(x + G(x), 0, 1).
  torch::Tensor perturb(const torch::Tensor& x);

 private:
  torch::nn::Sequential body_;
  double scale_;
};
TORCH_MODULE(Generator);

/// Small convolutional real/perturbed classifier returning one logit per input.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  DiscriminatorImpl(std::int64_t channels, std::int64_t height, std::int64_t width);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential body_;
};
TORCH_MODULE(Discriminator);

Generator make_generator(const ArchSpec& input, const GanConfig& cfg);

/// Frozen networks participating in the generator objective.
struct GanNetworks {
  Network& victim;
  std::span<const NetworkPtr> positives;
  std::span<const NetworkPtr> negatives;
};

/// Generator objective on one batch. `total` keeps its autograd graph.
struct GeneratorObjective {
  torch::Tensor total;
  LossBreakdown parts;
};

/// Throws ConfigError on an empty pool.
GeneratorObjective generator_loss(const torch::Tensor& x, Generator& generator, const GanNetworks& nets,
                                  Discriminator& discriminator, const GanConfig& cfg);

struct GanEpochLog {
  int epoch = 0;
  LossBreakdown mean;
};

struct GanTrainResult {
  Generator generator{nullptr};
  Discriminator discriminator{nullptr};
  std::vector<GanEpochLog> log;
};

/// Alternating discriminator/generator updates over `train_inputs`. The
/// victim and pool networks are never updated. Throws TrainingError with
/// epoch and step on a non-finite loss.
GanTrainResult train_gan(const GanNetworks& nets, const torch::Tensor& train_inputs, const GanConfig& cfg);

/// A correctly classified original x and its misclassified perturbed x'.
struct FingerprintPair {
  std::int64_t source_index = -1;
  torch::Tensor x;        ///< [C, H, W]
  torch::Tensor x_prime;  ///< [C, H, W], within [0, 1]
  std::int64_t y_v_x = -1;
  std::int64_t y_v_xp = -1;
  double perturbation_norm = 0.0;  ///< ||x' - x||_2
};

struct FingerprintSet {
  std::vector<FingerprintPair> pairs;
  std::string victim_id;
  GanConfig gan_config;
  std::string created_at;
  std::string generator_ref;

  std::size_t size() const noexcept { return pairs.size(); }
};

/// Throws InvariantError if a pair is not adversarial for the victim
/// (y_v_xp == y_v_x), leaves [0, 1], or the shapes disagree.
void validate_pair(const FingerprintPair& pair);
/// Validates every pair; the only way sets are built by this library.
FingerprintSet make_fingerprint_set(std::vector<FingerprintPair> pairs, std::string victim_id, GanConfig cfg,
                                    std::string generator_ref);

/// Perturbs every item the victim classifies correctly and keeps those whose
/// victim label changes.
std::vector<FingerprintPair> generate_candidates(Generator& generator, Network& victim, const Dataset& data,
                                                 std::span<const std::int64_t> indices);

struct ScoredCandidate {
  FingerprintPair pair;
  std::size_t positive_matches = 0;
  std::size_t negative_matches = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;

  double positive_rate() const { return positives ? static_cast<double>(positive_matches) / positives : 0.0; }
  double negative_rate() const { return negatives ? static_cast<double>(negative_matches) / negatives : 0.0; }
};

/// Counts, per candidate, the validation networks whose label on x' equals y_v_xp.
std::vector<ScoredCandidate> score_candidates(std::vector<FingerprintPair> candidates,
                                              std::span<const NetworkPtr> positives,
                                              std::span<const NetworkPtr> negatives);

/// Candidates with positive rate >= threshold and negative rate <=
/// 1 - threshold, ordered by descending positive rate, then ascending
/// perturbation norm, then source index.
std::vector<ScoredCandidate> select_conferrable(std::span<const ScoredCandidate> scored, double threshold);

/// The first K conferrable pairs as a set. Throws ShortfallError carrying the
/// accepted count when fewer than K pass.
FingerprintSet filter_conferrable(std::vector<FingerprintPair> candidates, std::span<const NetworkPtr> positives,
                                  std::span<const NetworkPtr> negatives, double threshold, std::size_t k,
                                  const std::string& victim_id, const GanConfig& cfg,
                                  const std::string& generator_ref);

/// Binary tensor container plus JSON sidecar; layout in docs/FORMATS.md.
void save_fingerprints(const FingerprintSet& set, const std::filesystem::path& bin_path);
FingerprintSet load_fingerprints(const std::filesystem::path& bin_path);
std::filesystem::path sidecar_path(const std::filesystem::path& bin_path);

}  // namespace ganfinger
