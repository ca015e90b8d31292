#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "ganfinger/networks.hpp"

namespace ganfinger {

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
  int epochs = 60;
  std::int64_t batch_size = 128;
  double lr = 0.001;
  double momentum = 0.9;
  double weight_decay = 0.0;
  OptimizerKind optimizer = OptimizerKind::sgd;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig defaults = {});
OptimizerKind parse_optimizer(const std::string& name);

/// Supervision for a training run: exactly one of `labels` ([N] int64, hard
/// targets, cross-entropy) or `probs` ([N, C] float, soft targets,
/// KL(probs || softmax(logits))) is defined.
struct Targets {
  torch::Tensor labels;
  torch::Tensor probs;

  static Targets hard(torch::Tensor labels) { return {std::move(labels), {}}; }
  static Targets soft(torch::Tensor probs) { return {{}, std::move(probs)}; }
};

enum class TrainScope { all_layers, final_layer_only };

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
};

/// Mini-batch training with per-epoch shuffling drawn from `shuffle_seed`.
/// With TrainScope::final_layer_only the network stays in eval mode and only
/// the final affine layer receives updates, so every other parameter and
/// buffer is left bit-identical. Throws TrainingError on a non-finite loss.
std::vector<EpochStats> train_classifier(Network& net, const torch::Tensor& inputs, const Targets& targets,
                                         const TrainConfig& cfg, std::uint64_t shuffle_seed,
                                         TrainScope scope = TrainScope::all_layers);

/// Eval-mode inference without autograd.
torch::Tensor predict_logits(Network& net, const torch::Tensor& inputs, std::int64_t batch_size = 512);
torch::Tensor predict_labels(Network& net, const torch::Tensor& inputs, std::int64_t batch_size = 512);
torch::Tensor predict_probs(Network& net, const torch::Tensor& inputs, std::int64_t batch_size = 512);

/// Fraction of inputs whose top-1 prediction equals `labels`.
double accuracy(Network& net, const torch::Tensor& inputs, const torch::Tensor& labels);
/// Fraction of entries where two label vectors agree.
double agreement(const torch::Tensor& a, const torch::Tensor& b);

/// Restores requires_grad flags and train/eval mode on scope exit.
class FrozenScope {
 public:
  explicit FrozenScope(torch::nn::Module& module);
  ~FrozenScope();
  FrozenScope(const FrozenScope&) = delete;
  FrozenScope& operator=(const FrozenScope&) = delete;

 private:
  torch::nn::Module& module_;
  std::vector<bool> flags_;
  bool was_training_;
};

}  // namespace ganfinger
