#include "ganfinger/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ganfinger/error.hpp"

namespace ganfinger {

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"lr", cfg.lr},
          {"momentum", cfg.momentum},
          {"weight_decay", cfg.weight_decay},
          {"optimizer", cfg.optimizer == OptimizerKind::sgd ? "sgd" : "adam"}};
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + name + "'");
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig cfg) {
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.lr = j.value("lr", cfg.lr);
  cfg.momentum = j.value("momentum", cfg.momentum);
  cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
  if (j.contains("optimizer")) cfg.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  return cfg;
}

namespace {

std::unique_ptr<torch::optim::Optimizer> make_optimizer(std::vector<torch::Tensor> params, const TrainConfig& cfg) {
  if (cfg.optimizer == OptimizerKind::adam) {
    return std::make_unique<torch::optim::Adam>(
        std::move(params), torch::optim::AdamOptions(cfg.lr).weight_decay(cfg.weight_decay));
  }
  return std::make_unique<torch::optim::SGD>(
      std::move(params), torch::optim::SGDOptions(cfg.lr).momentum(cfg.momentum).weight_decay(cfg.weight_decay));
}

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw ValidationError("epochs must be non-negative");
  if (cfg.batch_size < 1) throw ValidationError("batch_size must be positive");
  if (!(cfg.lr > 0.0)) throw ValidationError("learning rate must be positive");
}

}  // namespace

std::vector<EpochStats> train_classifier(Network& net, const torch::Tensor& inputs, const Targets& targets,
                                         const TrainConfig& cfg, std::uint64_t shuffle_seed, TrainScope scope) {
  validate(cfg);
  const bool soft = targets.probs.defined();
  if (soft == targets.labels.defined()) throw ValidationError("exactly one of hard or soft targets is required");
  const auto n = inputs.size(0);
  if ((soft ? targets.probs.size(0) : targets.labels.size(0)) != n) {
    throw ValidationError("targets and inputs differ in length");
  }

  FrozenScope restore(net);
  std::vector<torch::Tensor> params;
  if (scope == TrainScope::final_layer_only) {
    set_trainable(net, false);
    net.eval();
    for (auto& p : net.final_layer()->parameters()) {
      p.set_requires_grad(true);
      params.push_back(p);
    }
  } else {
    set_trainable(net, true);
    net.train();
    params = net.parameters();
  }
  auto optimizer = make_optimizer(params, cfg);

  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(shuffle_seed);
  std::vector<EpochStats> log;
  log.reserve(static_cast<std::size_t>(cfg.epochs));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    auto perm = torch::from_blob(order.data(), {n}, torch::kInt64);
    double total = 0.0;
    long steps = 0;
    for (std::int64_t start = 0; start < n; start += cfg.batch_size) {
      const auto idx = perm.slice(0, start, std::min(n, start + cfg.batch_size));
      const auto x = inputs.index_select(0, idx);
      optimizer->zero_grad();
      const auto logits = net.forward(x);
      torch::Tensor loss;
      if (soft) {
        const auto teacher = targets.probs.index_select(0, idx);
        loss = torch::kl_div(torch::log_softmax(logits, 1), teacher, at::Reduction::None).sum(1).mean();
      } else {
        loss = torch::cross_entropy_loss(logits, targets.labels.index_select(0, idx));
      }
      const double value = loss.item<double>();
      if (!std::isfinite(value)) throw TrainingError("non-finite training loss", epoch, steps);
      loss.backward();
      optimizer->step();
      total += value;
      ++steps;
    }
    log.push_back({epoch, steps > 0 ? total / static_cast<double>(steps) : 0.0});
  }
  return log;
}

torch::Tensor predict_logits(Network& net, const torch::Tensor& inputs, std::int64_t batch_size) {
  torch::NoGradGuard no_grad;
  const bool was_training = net.is_training();
  net.eval();
  std::vector<torch::Tensor> chunks;
  for (std::int64_t start = 0; start < inputs.size(0); start += batch_size) {
    chunks.push_back(net.forward(inputs.slice(0, start, std::min(inputs.size(0), start + batch_size))));
  }
  net.train(was_training);
  if (chunks.empty()) return torch::empty({0, net.spec().num_classes});
  return torch::cat(chunks, 0);
}

torch::Tensor predict_labels(Network& net, const torch::Tensor& inputs, std::int64_t batch_size) {
  return predict_logits(net, inputs, batch_size).argmax(1);
}

torch::Tensor predict_probs(Network& net, const torch::Tensor& inputs, std::int64_t batch_size) {
  return torch::softmax(predict_logits(net, inputs, batch_size), 1);
}

double accuracy(Network& net, const torch::Tensor& inputs, const torch::Tensor& labels) {
  if (inputs.size(0) == 0) throw ValidationError("accuracy over an empty set");
  return agreement(predict_labels(net, inputs), labels);
}

double agreement(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.numel() != b.numel()) throw ValidationError("label vectors differ in length");
  if (a.numel() == 0) throw ValidationError("agreement over an empty set");
  return a.eq(b).sum().item<double>() / static_cast<double>(a.numel());
}

FrozenScope::FrozenScope(torch::nn::Module& module) : module_(module), was_training_(module.is_training()) {
  for (const auto& p : module_.parameters(true)) flags_.push_back(p.requires_grad());
}

FrozenScope::~FrozenScope() {
  auto params = module_.parameters(true);
  for (std::size_t i = 0; i < params.size() && i < flags_.size(); ++i) params[i].set_requires_grad(flags_[i]);
  module_.train(was_training_);
}

}  // namespace ganfinger
