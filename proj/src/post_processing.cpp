#include "ganfinger/post_processing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ganfinger/error.hpp"
#include "ganfinger/tensor_io.hpp"

namespace ganfinger {

namespace {

constexpr int kDefaultFinetuneEpochs = 10;
constexpr int kDefaultAdvEpochsPerRound = 2;

struct KindName {
  AttackKind kind;
  std::string_view name;
};

constexpr KindName kKindNames[] = {
    {AttackKind::ftll, "FTLL"},   {AttackKind::ftal, "FTAL"},
    {AttackKind::rtll, "RTLL"},   {AttackKind::rtal, "RTAL"},
    {AttackKind::prune, "prune"}, {AttackKind::extract_label, "extract_label"},
    {AttackKind::extract_prob, "extract_prob"}, {AttackKind::adv_train, "adv_train"},
};

bool is_extraction(AttackKind k) { return k == AttackKind::extract_label || k == AttackKind::extract_prob; }
bool is_finetune(AttackKind k) {
  return k == AttackKind::ftll || k == AttackKind::ftal || k == AttackKind::rtll || k == AttackKind::rtal;
}

FinetuneMode finetune_mode(AttackKind k) {
  switch (k) {
    case AttackKind::ftll: return FinetuneMode::ftll;
    case AttackKind::ftal: return FinetuneMode::ftal;
    case AttackKind::rtll: return FinetuneMode::rtll;
    default: return FinetuneMode::rtal;
  }
}

}  // namespace

std::string_view attack_kind_name(AttackKind kind) {
  for (const auto& k : kKindNames) {
    if (k.kind == kind) return k.name;
  }
  return "FTLL";
}

AttackKind parse_attack_kind(std::string_view name) {
  for (const auto& k : kKindNames) {
    if (k.name == name) return k.kind;
  }
  throw ConfigError("unknown attack kind '" + std::string(name) + "'");
}

std::string AttackDescriptor::label() const {
  std::ostringstream out;
  out << attack_kind_name(kind);
  if (prune_rate) out << '-' << *prune_rate;
  if (target_arch) out << '-' << arch_tag(*target_arch);
  if (fgsm_eps) out << "-eps" << *fgsm_eps;
  return out.str();
}

void validate(const AttackDescriptor& a) {
  const auto name = std::string(attack_kind_name(a.kind));
  if (a.prune_rate.has_value() != (a.kind == AttackKind::prune)) {
    throw ValidationError("prune_rate must be given exactly for prune attacks (" + name + ")");
  }
  const bool adv = a.kind == AttackKind::adv_train;
  if (a.fgsm_eps.has_value() != adv || a.rounds.has_value() != adv) {
    throw ValidationError("fgsm_eps and rounds must be given exactly for adv_train attacks (" + name + ")");
  }
  if (a.target_arch.has_value() != is_extraction(a.kind)) {
    throw ValidationError("target_arch must be given exactly for extraction attacks (" + name + ")");
  }
  if (a.kind == AttackKind::prune && a.epochs) throw ValidationError("prune takes no epochs");
  if (a.epochs && *a.epochs < 0) throw ValidationError("epochs must be non-negative");
  if (a.prune_rate && !(*a.prune_rate >= 0.0 && *a.prune_rate <= 1.0)) {
    throw ValidationError("prune rate must lie in [0, 1]");
  }
  if (a.fgsm_eps && !(*a.fgsm_eps >= 0.0)) throw ValidationError("fgsm_eps must be non-negative");
  if (a.rounds && *a.rounds < 0) throw ValidationError("rounds must be non-negative");
}

nlohmann::json to_json(const AttackDescriptor& a) {
  nlohmann::json params = nlohmann::json::object();
  if (a.epochs) params["epochs"] = *a.epochs;
  if (a.prune_rate) params["prune_rate"] = *a.prune_rate;
  if (a.fgsm_eps) params["fgsm_eps"] = *a.fgsm_eps;
  if (a.rounds) params["rounds"] = *a.rounds;
  if (a.target_arch) params["target_arch"] = arch_tag(*a.target_arch);
  return {{"kind", attack_kind_name(a.kind)}, {"params", params}};
}

AttackDescriptor attack_from_json(const nlohmann::json& j) {
  AttackDescriptor a;
  a.kind = parse_attack_kind(j.at("kind").get<std::string>());
  // Parameters sit under "params", or next to "kind" in the flat YAML form.
  const auto& params = j.contains("params") ? j.at("params") : j;
  if (params.contains("epochs")) a.epochs = params.at("epochs").get<int>();
  if (params.contains("prune_rate")) a.prune_rate = params.at("prune_rate").get<double>();
  if (params.contains("fgsm_eps")) a.fgsm_eps = params.at("fgsm_eps").get<double>();
  if (params.contains("rounds")) a.rounds = params.at("rounds").get<int>();
  if (params.contains("target_arch")) a.target_arch = parse_arch(params.at("target_arch").get<std::string>());
  validate(a);
  return a;
}

std::int64_t prune_count(std::int64_t n, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("prune rate must lie in [0, 1]");
  return std::min<std::int64_t>(n, static_cast<std::int64_t>(std::floor(p * static_cast<double>(n) + 1e-9)));
}

void prune_tensor_(torch::Tensor& weights, double p) {
  const auto n = weights.numel();
  const auto count = prune_count(n, p);
  if (count == 0) return;
  torch::NoGradGuard no_grad;
  auto flat = weights.detach().contiguous().view({-1});
  auto magnitude = flat.abs();
  const float* mag = magnitude.data_ptr<float>();
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [mag](std::int64_t a, std::int64_t b) { return mag[a] < mag[b]; });
  auto zeroed = flat.clone();
  float* out = zeroed.data_ptr<float>();
  for (std::int64_t i = 0; i < count; ++i) out[order[static_cast<std::size_t>(i)]] = 0.0F;
  weights.copy_(zeroed.view(weights.sizes()));
}

NetworkPtr prune(Network& source, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("prune rate must lie in [0, 1]");
  auto net = clone_network(source);
  for (auto& param : net->named_parameters(true)) {
    if (is_prunable(param.key(), param.value())) prune_tensor_(param.value(), p);
  }
  return net;
}

NetworkPtr finetune(Network& source, FinetuneMode mode, const torch::Tensor& inputs, const torch::Tensor& labels,
                    TrainConfig cfg, std::uint64_t seed) {
  if (cfg.epochs < 0) throw ValidationError("fine-tuning epochs must be non-negative");
  auto net = clone_network(source);
  if (mode == FinetuneMode::rtll || mode == FinetuneMode::rtal) reinitialize_final_layer(*net, seed);
  const auto scope = (mode == FinetuneMode::ftll || mode == FinetuneMode::rtll) ? TrainScope::final_layer_only
                                                                                 : TrainScope::all_layers;
  train_classifier(*net, inputs, Targets::hard(labels), cfg, seed, scope);
  return net;
}

NetworkPtr extract(const VictimQueries& queries, const torch::Tensor& inputs, const ArchSpec& target,
                   ExtractionMode mode, const TrainConfig& cfg, std::uint64_t seed) {
  auto net = make_network(target, seed);
  const auto targets = mode == ExtractionMode::label ? Targets::hard(queries.labels) : Targets::soft(queries.probs);
  train_classifier(*net, inputs, targets, cfg, seed);
  return net;
}

torch::Tensor fgsm(Network& net, const torch::Tensor& inputs, const torch::Tensor& labels, double eps) {
  if (!(eps >= 0.0)) throw ValidationError("fgsm eps must be non-negative");
  FrozenScope restore(net);
  set_trainable(net, false);
  net.eval();
  std::vector<torch::Tensor> chunks;
  constexpr std::int64_t kBatch = 256;
  for (std::int64_t start = 0; start < inputs.size(0); start += kBatch) {
    const auto end = std::min(inputs.size(0), start + kBatch);
    auto x = inputs.slice(0, start, end).clone().set_requires_grad(true);
    auto loss = torch::cross_entropy_loss(net.forward(x), labels.slice(0, start, end), {}, at::Reduction::Sum);
    auto grad = torch::autograd::grad({loss}, {x})[0];
    chunks.push_back((x.detach() + eps * grad.sign()).clamp(0.0, 1.0));
  }
  if (chunks.empty()) return inputs.clone();
  return torch::cat(chunks, 0);
}

double fgsm_robust_accuracy(Network& net, const torch::Tensor& inputs, const torch::Tensor& labels, double eps) {
  return accuracy(net, fgsm(net, inputs, labels, eps), labels);
}

NetworkPtr adversarial_train(Network& source, const torch::Tensor& inputs, const torch::Tensor& labels, double eps,
                             int rounds, const TrainConfig& cfg, std::uint64_t seed) {
  if (!(eps >= 0.0)) throw ValidationError("fgsm eps must be non-negative");
  if (rounds < 0) throw ValidationError("adversarial training rounds must be non-negative");
  auto net = clone_network(source);
  const auto doubled_labels = torch::cat({labels, labels}, 0);
  for (int round = 0; round < rounds; ++round) {
    const auto adversarial = fgsm(*net, inputs, labels, eps);
    train_classifier(*net, torch::cat({inputs, adversarial}, 0), Targets::hard(doubled_labels), cfg,
                     seed + static_cast<std::uint64_t>(round));
  }
  return net;
}

TrainedModel apply_attack(const AttackContext& ctx, const TrainedModel& parent, const AttackDescriptor& attack,
                          std::uint64_t seed, const std::string& model_id) {
  validate(attack);
  const auto dp_inputs = ctx.data.images_at(ctx.split.d_p);
  NetworkPtr net;
  std::string lineage_tag;
  nlohmann::json training = nlohmann::json::object();

  if (is_finetune(attack.kind)) {
    auto cfg = ctx.finetune_cfg;
    cfg.epochs = attack.epochs.value_or(kDefaultFinetuneEpochs);
    net = finetune(*parent.net, finetune_mode(attack.kind), dp_inputs, ctx.data.labels_at(ctx.split.d_p), cfg, seed);
    lineage_tag = std::string(attack_kind_name(attack.kind));
    training = {{"data", "d_p"}, {"label_source", "ground_truth"}, {"config", to_json(cfg)}};
  } else if (attack.kind == AttackKind::prune) {
    net = prune(*parent.net, *attack.prune_rate);
    lineage_tag = "prune";
  } else if (is_extraction(attack.kind)) {
    auto cfg = ctx.extract_cfg;
    if (attack.epochs) cfg.epochs = *attack.epochs;
    ArchSpec target = ctx.victim.net->spec();
    target.arch = *attack.target_arch;
    target.base_width = 0;
    const auto mode = attack.kind == AttackKind::extract_label ? ExtractionMode::label : ExtractionMode::prob;
    net = extract(ctx.queries, dp_inputs, target, mode, cfg, seed);
    lineage_tag = mode == ExtractionMode::label ? "extract-label" : "extract-prob";
    training = {{"data", "d_p"},
                {"label_source", mode == ExtractionMode::label ? "victim_labels" : "victim_probs"},
                {"config", to_json(cfg)}};
  } else {
    if (!parent.record.lineage || parent.record.lineage->attack != "extract-label") {
      throw ValidationError("adversarial training requires a label-extraction parent, got " + parent.record.model_id);
    }
    auto cfg = ctx.extract_cfg;
    cfg.epochs = attack.epochs.value_or(kDefaultAdvEpochsPerRound);
    const auto eval_x = ctx.data.images_at(ctx.split.eval_set);
    const auto eval_y = ctx.data.labels_at(ctx.split.eval_set);
    const double before = fgsm_robust_accuracy(*parent.net, eval_x, eval_y, *attack.fgsm_eps);
    net = adversarial_train(*parent.net, dp_inputs, ctx.queries.labels, *attack.fgsm_eps, *attack.rounds, cfg, seed);
    lineage_tag = "extract-label->adv-train";
    training = {{"data", "d_p"},
                {"label_source", "victim_labels"},
                {"config", to_json(cfg)},
                {"fgsm_robust_accuracy_before", before},
                {"fgsm_robust_accuracy_after", fgsm_robust_accuracy(*net, eval_x, eval_y, *attack.fgsm_eps)}};
  }

  ModelRecord record;
  record.model_id = model_id;
  record.role = Role::pirated;
  record.arch = net->spec();
  record.seed = seed;
  record.lineage = Lineage{parent.record.model_id, lineage_tag, to_json(attack)};
  const auto eval_inputs = ctx.data.images_at(ctx.split.eval_set);
  record.test_accuracy = accuracy(*net, eval_inputs, ctx.data.labels_at(ctx.split.eval_set));
  record.metadata["victim_agreement"] =
      agreement(predict_labels(*net, eval_inputs), predict_labels(*ctx.victim.net, eval_inputs));
  if (!training.empty()) record.metadata["training"] = training;
  return {std::move(record), std::move(net)};
}

}  // namespace ganfinger
