#include "ganfinger/fingerprint_gan.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <numeric>
#include <random>

#include "ganfinger/error.hpp"

namespace ganfinger {

namespace nn = torch::nn;

void validate(const GanConfig& cfg) {
  for (double w : {cfg.eta, cfg.alpha, cfg.beta, cfg.gamma}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("generator loss weights must be finite and >= 0");
  }
  if (!(cfg.c > 0.0)) throw ValidationError("hinge bound c must be positive");
  if (cfg.epochs < 0) throw ValidationError("GAN epochs must be non-negative");
  if (cfg.batch_size < 1) throw ValidationError("GAN batch size must be positive");
  if (!(cfg.lr > 0.0)) throw ValidationError("GAN learning rate must be positive");
  if (cfg.k < 1) throw ValidationError("fingerprint count K must be positive");
  if (!(cfg.confer_threshold > 0.0 && cfg.confer_threshold <= 1.0)) {
    throw ValidationError("conferrability threshold must lie in (0, 1]");
  }
  if (!(cfg.perturbation_scale > 0.0 && cfg.perturbation_scale <= 1.0)) {
    throw ValidationError("perturbation scale must lie in (0, 1]");
  }
  if (cfg.target_class < 0) throw ValidationError("target class must be a class index");
  if (cfg.m < 1 || cfg.n < 1) throw ValidationError("pool sizes M and N must be positive");
  if (cfg.generator_width < 1) throw ValidationError("generator width must be positive");
}

nlohmann::json to_json(const GanConfig& cfg) {
  return {{"eta", cfg.eta},
          {"alpha", cfg.alpha},
          {"beta", cfg.beta},
          {"gamma", cfg.gamma},
          {"c", cfg.c},
          {"target_policy", cfg.target_policy == TargetPolicy::least_likely ? "least_likely" : "fixed"},
          {"target_class", cfg.target_class},
          {"adv_loss", cfg.adv_loss == AdvLossKind::cross_entropy ? "cross_entropy" : "cw_margin"},
          {"cw_kappa", cfg.cw_kappa},
          {"m", cfg.m},
          {"n", cfg.n},
          {"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"lr", cfg.lr},
          {"optimizer", cfg.optimizer == OptimizerKind::sgd ? "sgd" : "adam"},
          {"momentum", cfg.momentum},
          {"k", cfg.k},
          {"confer_threshold", cfg.confer_threshold},
          {"perturbation_scale", cfg.perturbation_scale},
          {"generator_width", cfg.generator_width},
          {"seed", cfg.seed}};
}

GanConfig gan_config_from_json(const nlohmann::json& j, GanConfig cfg) {
  cfg.eta = j.value("eta", cfg.eta);
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.beta = j.value("beta", cfg.beta);
  cfg.gamma = j.value("gamma", cfg.gamma);
  cfg.c = j.value("c", cfg.c);
  if (j.contains("target_policy")) {
    const auto p = j.at("target_policy").get<std::string>();
    if (p == "least_likely") {
      cfg.target_policy = TargetPolicy::least_likely;
    } else if (p == "fixed") {
      cfg.target_policy = TargetPolicy::fixed;
    } else {
      throw ConfigError("unknown target policy '" + p + "'");
    }
  }
  cfg.target_class = j.value("target_class", cfg.target_class);
  if (j.contains("adv_loss")) {
    const auto a = j.at("adv_loss").get<std::string>();
    if (a == "cross_entropy") {
      cfg.adv_loss = AdvLossKind::cross_entropy;
    } else if (a == "cw_margin") {
      cfg.adv_loss = AdvLossKind::cw_margin;
    } else {
      throw ConfigError("unknown adversarial loss '" + a + "'");
    }
  }
  cfg.cw_kappa = j.value("cw_kappa", cfg.cw_kappa);
  cfg.m = j.value("m", cfg.m);
  cfg.n = j.value("n", cfg.n);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.lr = j.value("lr", cfg.lr);
  if (j.contains("optimizer")) cfg.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  cfg.momentum = j.value("momentum", cfg.momentum);
  cfg.k = j.value("k", cfg.k);
  cfg.confer_threshold = j.value("confer_threshold", cfg.confer_threshold);
  cfg.perturbation_scale = j.value("perturbation_scale", cfg.perturbation_scale);
  cfg.generator_width = j.value("generator_width", cfg.generator_width);
  cfg.seed = j.value("seed", cfg.seed);
  validate(cfg);
  return cfg;
}

std::string config_hash(const GanConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_json(cfg).dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double weighted_generator_loss(double l_adv, double l_gan, double l_hinge, double l_conf, const GanConfig& cfg) {
  return cfg.eta * l_adv + cfg.alpha * l_gan + cfg.beta * l_hinge + cfg.gamma * l_conf;
}

LossBreakdown make_breakdown(double l_d, double l_gan, double l_adv, double l_hinge, double l_p, double l_n,
                             const GanConfig& cfg) {
  LossBreakdown b{l_d, l_gan, l_adv, l_hinge, l_p - l_n, l_p, l_n, 0.0};
  b.l_total = weighted_generator_loss(b.l_adv, b.l_gan, b.l_hinge, b.l_conf, cfg);
  return b;
}

nlohmann::json to_json(const LossBreakdown& b) {
  return {{"l_d", b.l_d},       {"l_gan", b.l_gan}, {"l_adv", b.l_adv}, {"l_hinge", b.l_hinge},
          {"l_conf", b.l_conf}, {"l_p", b.l_p},     {"l_n", b.l_n},     {"l_total", b.l_total}};
}

namespace {

constexpr double kProbFloor = 1e-12;
constexpr double kScoreMargin = 1e-7;

void check_distribution(std::span<const double> v, const char* name) {
  double sum = 0.0;
  for (double x : v) {
    if (!(x >= 0.0)) throw ValidationError(std::string(name) + " has a negative or NaN entry");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw ValidationError(std::string(name) + " does not sum to 1");
}

double clamp_score(double s) {
  if (!(s >= 0.0 && s <= 1.0)) throw ValidationError("discriminator score outside [0, 1]");
  return std::clamp(s, kScoreMargin, 1.0 - kScoreMargin);
}

}  // namespace

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ValidationError("KL divergence of vectors with different lengths");
  check_distribution(p, "p");
  check_distribution(q, "q");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * std::log(p[i] / std::max(q[i], kProbFloor));
  }
  return std::max(kl, 0.0);
}

double discriminator_loss(std::span<const double> d_real, std::span<const double> d_fake) {
  if (d_real.size() != d_fake.size() || d_real.empty()) {
    throw ValidationError("discriminator loss needs equally sized non-empty batches");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < d_real.size(); ++i) {
    total -= std::log(clamp_score(d_real[i])) + std::log(1.0 - clamp_score(d_fake[i]));
  }
  return total / static_cast<double>(d_real.size());
}

double discriminator_loss(double d_real, double d_fake) {
  return discriminator_loss(std::span<const double>(&d_real, 1), std::span<const double>(&d_fake, 1));
}

torch::Tensor discriminator_loss_from_logits(const torch::Tensor& real_logits, const torch::Tensor& fake_logits) {
  return -(torch::log_sigmoid(real_logits) + torch::log_sigmoid(-fake_logits)).mean();
}

torch::Tensor gan_guidance_loss(const torch::Tensor& fake_logits) { return -torch::log_sigmoid(fake_logits).mean(); }

torch::Tensor hinge_loss(const torch::Tensor& perturbation, double c) {
  const auto norms = (perturbation.flatten(1).pow(2).sum(1) + 1e-12).sqrt();
  return torch::relu(norms - c).mean();
}

torch::Tensor batch_kl(const torch::Tensor& p_logits, const torch::Tensor& q_logits) {
  const auto log_p = torch::log_softmax(p_logits, 1);
  const auto log_q = torch::log_softmax(q_logits, 1);
  return (log_p.exp() * (log_p - log_q)).sum(1).mean();
}

torch::Tensor adversarial_loss(const torch::Tensor& victim_logits, const torch::Tensor& targets,
                               const GanConfig& cfg) {
  if (cfg.adv_loss == AdvLossKind::cross_entropy) return torch::cross_entropy_loss(victim_logits, targets);
  const auto target_logit = victim_logits.gather(1, targets.unsqueeze(1)).squeeze(1);
  const auto others = victim_logits.scatter(1, targets.unsqueeze(1), -1e9);
  const auto best_other = std::get<0>(others.max(1));
  return torch::clamp_min(best_other - target_logit, -cfg.cw_kappa).mean();
}

torch::Tensor choose_targets(Network& victim, const torch::Tensor& x, const GanConfig& cfg) {
  if (cfg.target_policy == TargetPolicy::fixed) {
    if (cfg.target_class >= victim.spec().num_classes) throw ValidationError("fixed target class out of range");
    return torch::full({x.size(0)}, cfg.target_class, torch::kInt64);
  }
  torch::NoGradGuard no_grad;
  return victim.forward(x).argmin(1);
}

GeneratorImpl::GeneratorImpl(std::int64_t channels, std::int64_t width, double perturbation_scale)
    : scale_(perturbation_scale) {
  body_ = register_module(
      "body",
      nn::Sequential(nn::Conv2d(nn::Conv2dOptions(channels, width, 3).padding(1)), nn::BatchNorm2d(width), nn::ReLU(),
                     nn::Conv2d(nn::Conv2dOptions(width, 2 * width, 4).stride(2).padding(1)),
                     nn::BatchNorm2d(2 * width), nn::ReLU(),
                     nn::Conv2d(nn::Conv2dOptions(2 * width, 2 * width, 3).padding(1)), nn::BatchNorm2d(2 * width),
                     nn::ReLU(),
                     nn::ConvTranspose2d(nn::ConvTranspose2dOptions(2 * width, width, 4).stride(2).padding(1)),
                     nn::BatchNorm2d(width), nn::ReLU(), nn::Conv2d(nn::Conv2dOptions(width, channels, 3).padding(1))));
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& x) { return scale_ * torch::tanh(body_->forward(x)); }

torch::Tensor GeneratorImpl::perturb(const torch::Tensor& x) { return (x + forward(x)).clamp(0.0, 1.0); }

DiscriminatorImpl::DiscriminatorImpl(std::int64_t channels, std::int64_t height, std::int64_t width) {
  body_ = register_module(
      "body", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(channels, 16, 4).stride(2).padding(1)),
                             nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)),
                             nn::Conv2d(nn::Conv2dOptions(16, 32, 4).stride(2).padding(1)), nn::BatchNorm2d(32),
                             nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)), nn::Flatten(),
                             nn::Linear(32 * (height / 4) * (width / 4), 1)));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& x) { return body_->forward(x).squeeze(1); }

Generator make_generator(const ArchSpec& input, const GanConfig& cfg) {
  if (input.height % 4 != 0 || input.width % 4 != 0) {
    throw ValidationError("generator needs input sides divisible by 4");
  }
  Generator g{nullptr};
  with_seed(cfg.seed, [&] { g = Generator(input.in_channels, cfg.generator_width, cfg.perturbation_scale); });
  return g;
}

GeneratorObjective generator_loss(const torch::Tensor& x, Generator& generator, const GanNetworks& nets,
                                  Discriminator& discriminator, const GanConfig& cfg) {
  if (nets.positives.empty() || nets.negatives.empty()) {
    throw ConfigError("generator loss needs non-empty positive and negative pools");
  }
  const auto targets = choose_targets(nets.victim, x, cfg);
  const auto perturbation = generator->forward(x);
  const auto x_prime = (x + perturbation).clamp(0.0, 1.0);

  const auto l_gan = gan_guidance_loss(discriminator->forward(x_prime));
  const auto victim_logits = nets.victim.forward(x_prime);
  const auto l_adv = adversarial_loss(victim_logits, targets, cfg);
  const auto l_hinge = hinge_loss(perturbation, cfg.c);

  auto l_p = torch::zeros({}, x.options());
  for (const auto& net : nets.positives) l_p = l_p + batch_kl(victim_logits, net->forward(x_prime));
  l_p = l_p / static_cast<double>(nets.positives.size());
  auto l_n = torch::zeros({}, x.options());
  for (const auto& net : nets.negatives) l_n = l_n + batch_kl(victim_logits, net->forward(x_prime));
  l_n = l_n / static_cast<double>(nets.negatives.size());
  const auto l_conf = l_p - l_n;

  GeneratorObjective out;
  out.total = cfg.eta * l_adv + cfg.alpha * l_gan + cfg.beta * l_hinge + cfg.gamma * l_conf;
  out.parts = make_breakdown(0.0, l_gan.item<double>(), l_adv.item<double>(), l_hinge.item<double>(),
                             l_p.item<double>(), l_n.item<double>(), cfg);
  return out;
}

namespace {

std::unique_ptr<torch::optim::Optimizer> gan_optimizer(std::vector<torch::Tensor> params, const GanConfig& cfg) {
  if (cfg.optimizer == OptimizerKind::adam) {
    return std::make_unique<torch::optim::Adam>(std::move(params),
                                                torch::optim::AdamOptions(cfg.lr).betas({0.5, 0.999}));
  }
  return std::make_unique<torch::optim::SGD>(std::move(params),
                                             torch::optim::SGDOptions(cfg.lr).momentum(cfg.momentum));
}

}  // namespace

GanTrainResult train_gan(const GanNetworks& nets, const torch::Tensor& train_inputs, const GanConfig& cfg) {
  validate(cfg);
  if (nets.positives.empty() || nets.negatives.empty()) {
    throw ConfigError("GAN training needs non-empty positive and negative pools");
  }
  std::vector<std::unique_ptr<FrozenScope>> frozen;
  auto freeze = [&](Network& net) {
    frozen.push_back(std::make_unique<FrozenScope>(net));
    set_trainable(net, false);
    net.eval();
  };
  freeze(nets.victim);
  for (const auto& net : nets.positives) freeze(*net);
  for (const auto& net : nets.negatives) freeze(*net);

  const auto& spec = nets.victim.spec();
  GanTrainResult result;
  result.generator = make_generator(spec, cfg);
  with_seed(cfg.seed + 1, [&] { result.discriminator = Discriminator(spec.in_channels, spec.height, spec.width); });
  auto& generator = result.generator;
  auto& discriminator = result.discriminator;
  generator->train();
  discriminator->train();
  auto g_opt = gan_optimizer(generator->parameters(), cfg);
  auto d_opt = gan_optimizer(discriminator->parameters(), cfg);

  const auto n = train_inputs.size(0);
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    auto perm = torch::from_blob(order.data(), {n}, torch::kInt64);
    LossBreakdown sum;
    long steps = 0;
    for (std::int64_t start = 0; start < n; start += cfg.batch_size) {
      const auto x = train_inputs.index_select(0, perm.slice(0, start, std::min(n, start + cfg.batch_size)));

      d_opt->zero_grad();
      torch::Tensor x_prime;
      {
        torch::NoGradGuard no_grad;
        x_prime = generator->perturb(x);
      }
      const auto l_d = discriminator_loss_from_logits(discriminator->forward(x), discriminator->forward(x_prime));
      const double l_d_value = l_d.item<double>();
      if (!std::isfinite(l_d_value)) throw TrainingError("non-finite discriminator loss", epoch, steps);
      l_d.backward();
      d_opt->step();

      g_opt->zero_grad();
      auto objective = generator_loss(x, generator, nets, discriminator, cfg);
      if (!std::isfinite(objective.parts.l_total)) throw TrainingError("non-finite generator loss", epoch, steps);
      objective.total.backward();
      g_opt->step();

      const auto& p = objective.parts;
      sum.l_d += l_d_value;
      sum.l_gan += p.l_gan;
      sum.l_adv += p.l_adv;
      sum.l_hinge += p.l_hinge;
      sum.l_p += p.l_p;
      sum.l_n += p.l_n;
      ++steps;
    }
    const double s = steps > 0 ? static_cast<double>(steps) : 1.0;
    result.log.push_back(
        {epoch, make_breakdown(sum.l_d / s, sum.l_gan / s, sum.l_adv / s, sum.l_hinge / s, sum.l_p / s, sum.l_n / s, cfg)});
  }
  generator->eval();
  discriminator->eval();
  return result;
}

void validate_pair(const FingerprintPair& pair) {
  if (!pair.x.defined() || !pair.x_prime.defined() || pair.x.sizes() != pair.x_prime.sizes()) {
    throw InvariantError("fingerprint pair has missing or mismatched tensors");
  }
  if (pair.y_v_x == pair.y_v_xp) {
    throw InvariantError("fingerprint pair " + std::to_string(pair.source_index) +
                         " is not adversarial for the victim (same label on x and x')");
  }
  if (pair.x_prime.min().item<float>() < 0.0F || pair.x_prime.max().item<float>() > 1.0F) {
    throw InvariantError("fingerprint pair " + std::to_string(pair.source_index) + " leaves the input domain");
  }
}

FingerprintSet make_fingerprint_set(std::vector<FingerprintPair> pairs, std::string victim_id, GanConfig cfg,
                                    std::string generator_ref) {
  for (const auto& p : pairs) validate_pair(p);
  FingerprintSet set;
  set.pairs = std::move(pairs);
  set.victim_id = std::move(victim_id);
  set.gan_config = cfg;
  set.generator_ref = std::move(generator_ref);
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
  set.created_at = buf;
  return set;
}

std::vector<FingerprintPair> generate_candidates(Generator& generator, Network& victim, const Dataset& data,
                                                 std::span<const std::int64_t> indices) {
  const auto x = data.images_at(indices);
  const auto y = data.labels_at(indices);
  torch::Tensor x_prime;
  {
    torch::NoGradGuard no_grad;
    const bool was_training = generator->is_training();
    generator->eval();
    std::vector<torch::Tensor> chunks;
    for (std::int64_t s = 0; s < x.size(0); s += 512) chunks.push_back(generator->perturb(x.slice(0, s, s + 512)));
    x_prime = chunks.empty() ? x.clone() : torch::cat(chunks, 0);
    generator->train(was_training);
  }
  const auto y_x = predict_labels(victim, x);
  const auto y_xp = predict_labels(victim, x_prime);
  const auto norms = (x_prime - x).flatten(1).to(torch::kFloat64).pow(2).sum(1).sqrt();

  std::vector<FingerprintPair> out;
  for (std::int64_t i = 0; i < x.size(0); ++i) {
    const auto truth = y[i].item<std::int64_t>();
    const auto on_x = y_x[i].item<std::int64_t>();
    const auto on_xp = y_xp[i].item<std::int64_t>();
    if (on_x != truth || on_xp == on_x) continue;
    out.push_back({indices[static_cast<std::size_t>(i)], x[i].clone(), x_prime[i].clone(), on_x, on_xp,
                   norms[i].item<double>()});
  }
  return out;
}

std::vector<ScoredCandidate> score_candidates(std::vector<FingerprintPair> candidates,
                                              std::span<const NetworkPtr> positives,
                                              std::span<const NetworkPtr> negatives) {
  std::vector<ScoredCandidate> scored;
  scored.reserve(candidates.size());
  if (candidates.empty()) return scored;
  std::vector<torch::Tensor> xs;
  std::vector<std::int64_t> targets;
  for (const auto& c : candidates) {
    xs.push_back(c.x_prime);
    targets.push_back(c.y_v_xp);
  }
  const auto batch = torch::stack(xs);
  const auto target = torch::tensor(targets, torch::kInt64);
  auto count = [&](std::span<const NetworkPtr> nets) {
    auto matches = torch::zeros({batch.size(0)}, torch::kInt64);
    for (const auto& net : nets) matches += predict_labels(*net, batch).eq(target).to(torch::kInt64);
    return matches;
  };
  const auto pos = count(positives);
  const auto neg = count(negatives);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto row = static_cast<std::int64_t>(i);
    scored.push_back({std::move(candidates[i]), static_cast<std::size_t>(pos[row].item<std::int64_t>()),
                      static_cast<std::size_t>(neg[row].item<std::int64_t>()), positives.size(), negatives.size()});
  }
  return scored;
}

std::vector<ScoredCandidate> select_conferrable(std::span<const ScoredCandidate> scored, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ValidationError("conferrability threshold must lie in (0, 1]");
  constexpr double kSlack = 1e-9;
  std::vector<ScoredCandidate> accepted;
  for (const auto& s : scored) {
    const bool positive_ok = static_cast<double>(s.positive_matches) >= threshold * static_cast<double>(s.positives) - kSlack;
    const bool negative_ok =
        static_cast<double>(s.negative_matches) <= (1.0 - threshold) * static_cast<double>(s.negatives) + kSlack;
    if (positive_ok && negative_ok) accepted.push_back(s);
  }
  std::stable_sort(accepted.begin(), accepted.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
    // Cross-multiplied so equal rates compare equal exactly.
    const auto lhs = a.positive_matches * b.positives;
    const auto rhs = b.positive_matches * a.positives;
    if (lhs != rhs) return lhs > rhs;
    if (a.pair.perturbation_norm != b.pair.perturbation_norm) return a.pair.perturbation_norm < b.pair.perturbation_norm;
    return a.pair.source_index < b.pair.source_index;
  });
  return accepted;
}

FingerprintSet filter_conferrable(std::vector<FingerprintPair> candidates, std::span<const NetworkPtr> positives,
                                  std::span<const NetworkPtr> negatives, double threshold, std::size_t k,
                                  const std::string& victim_id, const GanConfig& cfg,
                                  const std::string& generator_ref) {
  if (positives.empty() || negatives.empty()) throw ConfigError("conferrability filter needs both validation pools");
  const auto scored = score_candidates(std::move(candidates), positives, negatives);
  auto accepted = select_conferrable(scored, threshold);
  if (accepted.size() < k) throw ShortfallError(accepted.size(), k);
  std::vector<FingerprintPair> pairs;
  pairs.reserve(k);
  for (std::size_t i = 0; i < k; ++i) pairs.push_back(std::move(accepted[i].pair));
  return make_fingerprint_set(std::move(pairs), victim_id, cfg, generator_ref);
}

}  // namespace ganfinger
