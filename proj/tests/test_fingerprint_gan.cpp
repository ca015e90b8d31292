#include "doctest_torch.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <random>

#include "ganfinger/data_splits.hpp"
#include "ganfinger/error.hpp"
#include "ganfinger/fingerprint_gan.hpp"
#include "ganfinger/tensor_io.hpp"
#include "helpers.hpp"

using namespace ganfinger;

namespace {

const Dataset& mini() {
  static const Dataset data = load_dataset("shapes10-mini");
  return data;
}

const DataSplit& mini_split() {
  static const DataSplit split = split_dataset(mini(), 0);
  return split;
}

std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t n) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> v(n);
  double s = 0;
  for (auto& x : v) s += (x = e(rng));
  for (auto& x : v) x /= s;
  return v;
}

FingerprintPair pair_with(std::int64_t src, std::int64_t yx, std::int64_t yxp, double norm = 0.1) {
  auto x = torch::full({3, 4, 4}, 0.5F);
  return {src, x, x + 0.01F, yx, yxp, norm};
}

ScoredCandidate scored(std::size_t pos, std::size_t p_total, std::size_t neg, std::size_t n_total,
                       std::int64_t src = 0, double norm = 0.1) {
  return {pair_with(src, 1, 2, norm), pos, neg, p_total, n_total};
}

}  // namespace

TEST_SUITE("fingerprint_gan") {
  TEST_CASE("KL divergence closed forms") {
    const std::vector<double> p{0.5, 0.5};
    const std::vector<double> q{0.25, 0.75};
    CHECK(kl_divergence(p, q) == doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0)).epsilon(1e-12));
    CHECK(kl_divergence(p, q) == doctest::Approx(0.14384).epsilon(1e-4));
    CHECK(kl_divergence(p, p) == 0.0);
    CHECK_THROWS_AS(kl_divergence(p, std::vector<double>{1.0}), ValidationError);
    CHECK_THROWS_AS(kl_divergence(p, std::vector<double>{0.2, 0.2}), ValidationError);
  }

  TEST_CASE("KL is non-negative on random simplex pairs (Gibbs)") {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 200; ++i) {
      const auto p = random_simplex(rng, 10);
      const auto q = random_simplex(rng, 10);
      CHECK(kl_divergence(p, q) >= 0.0);
    }
  }

  TEST_CASE("batch KL on logits agrees with the scalar definition") {
    const auto a = torch::randn({5, 10}, torch::kFloat64);
    const auto b = torch::randn({5, 10}, torch::kFloat64);
    const auto pa = torch::softmax(a, 1);
    const auto pb = torch::softmax(b, 1);
    double mean = 0.0;
    for (int i = 0; i < 5; ++i) {
      std::vector<double> p(10), q(10);
      for (int c = 0; c < 10; ++c) {
        p[c] = pa[i][c].item<double>();
        q[c] = pb[i][c].item<double>();
      }
      mean += kl_divergence(p, q) / 5.0;
    }
    CHECK(batch_kl(a, b).item<double>() == doctest::Approx(mean).epsilon(1e-9));
  }

  TEST_CASE("discriminator loss closed forms") {
    CHECK(discriminator_loss(0.5, 0.5) == doctest::Approx(-2.0 * std::log(0.5)).epsilon(1e-12));
    CHECK(discriminator_loss(0.5, 0.5) == doctest::Approx(1.3863).epsilon(1e-4));
    CHECK(discriminator_loss(0.9, 0.1) == doctest::Approx(-2.0 * std::log(0.9)).epsilon(1e-12));
    CHECK(discriminator_loss(0.9, 0.1) == doctest::Approx(0.2107).epsilon(1e-3));
    CHECK(discriminator_loss(1.0, 0.0) < 1e-6);
    CHECK_THROWS_AS(discriminator_loss(1.2, 0.1), ValidationError);
    CHECK_THROWS_AS(discriminator_loss(0.5, -0.1), ValidationError);
  }

  TEST_CASE("logit-form discriminator loss matches the probability form") {
    const auto real = torch::tensor({0.3, -1.2, 2.0}, torch::kFloat64);
    const auto fake = torch::tensor({-0.4, 0.8, -2.5}, torch::kFloat64);
    std::vector<double> dr, df;
    for (int i = 0; i < 3; ++i) {
      dr.push_back(torch::sigmoid(real[i]).item<double>());
      df.push_back(torch::sigmoid(fake[i]).item<double>());
    }
    CHECK(discriminator_loss_from_logits(real, fake).item<double>() ==
          doctest::Approx(discriminator_loss(dr, df)).epsilon(1e-9));
  }

  TEST_CASE("weighted total: (2, 1, 0.5, 0.3) with default weights is 12.5") {
    GanConfig cfg;
    CHECK(weighted_generator_loss(2.0, 1.0, 0.5, 0.3, cfg) == doctest::Approx(12.5).epsilon(1e-12));
    const auto b = make_breakdown(0.7, 1.0, 2.0, 0.5, 0.9, 0.6, cfg);
    CHECK(b.l_conf == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(b.l_total == doctest::Approx(12.5).epsilon(1e-12));
  }

  TEST_CASE("each weight scales its own term linearly") {
    GanConfig cfg;
    const double base = weighted_generator_loss(2.0, 1.0, 0.5, 0.3, cfg);
    GanConfig scaled = cfg;
    scaled.gamma *= 3.0;
    CHECK(weighted_generator_loss(2.0, 1.0, 0.5, 0.3, scaled) - base == doctest::Approx(2.0 * 10.0 * 0.3));
    scaled = cfg;
    scaled.eta = 0.0;
    CHECK(weighted_generator_loss(2.0, 1.0, 0.5, 0.3, scaled) == doctest::Approx(base - 2.0));
  }

  TEST_CASE("hinge is zero inside the bound and matches finite differences outside") {
    CHECK(hinge_loss(torch::zeros({4, 3, 4, 4}), 0.05).item<double>() == 0.0);
    auto pert = (torch::rand({3, 3, 4, 4}, torch::kFloat64) - 0.5) * 0.2;
    const double c = 0.05;
    pert.set_requires_grad(true);
    auto loss = hinge_loss(pert, c);
    CHECK(loss.item<double>() >= 0.0);
    const auto grad = torch::autograd::grad({loss}, {pert})[0];
    const double h = 1e-6;
    for (std::int64_t flat : {0L, 17L, 55L, 140L}) {
      auto p = pert.detach().clone().view({-1});
      p[flat] += h;
      const double up = hinge_loss(p.view(pert.sizes()), c).item<double>();
      p[flat] -= 2 * h;
      const double down = hinge_loss(p.view(pert.sizes()), c).item<double>();
      const double fd = (up - down) / (2 * h);
      const double an = grad.view({-1})[flat].item<double>();
      CHECK(std::abs(fd - an) <= 1e-3 * std::max(std::abs(an), 1e-8));
    }
  }

  TEST_CASE("generator loss identities on real networks") {
    ArchSpec spec{Arch::tiny_cnn};
    auto victim = make_network(spec, 1);
    GanConfig cfg;
    cfg.generator_width = 4;
    auto generator = make_generator(spec, cfg);
    Discriminator disc(3, 16, 16);
    const auto x = mini().images_at(mini_split().d_v).slice(0, 0, 16);

    SUBCASE("pools made of victim copies give zero conferrability loss") {
      std::vector<NetworkPtr> copies{clone_network(*victim), clone_network(*victim)};
      auto obj = generator_loss(x, generator, GanNetworks{*victim, copies, copies}, disc, cfg);
      CHECK(obj.parts.l_conf == doctest::Approx(0.0).epsilon(1e-9));
      CHECK(obj.parts.l_p == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
      CHECK(obj.parts.l_hinge >= 0.0);
      CHECK(obj.total.item<double>() == doctest::Approx(obj.parts.l_total).epsilon(1e-5));
    }
    SUBCASE("empty pools are a configuration error") {
      std::vector<NetworkPtr> none;
      std::vector<NetworkPtr> one{make_network(spec, 2)};
      CHECK_THROWS_AS(generator_loss(x, generator, GanNetworks{*victim, none, one}, disc, cfg), ConfigError);
      CHECK_THROWS_AS(generator_loss(x, generator, GanNetworks{*victim, one, none}, disc, cfg), ConfigError);
    }
  }

  TEST_CASE("least-likely targets never equal the victim's prediction") {
    ArchSpec spec{Arch::tiny_cnn};
    auto victim = make_network(spec, 1);
    const auto x = mini().images_at(mini_split().d_v).slice(0, 0, 32);
    GanConfig cfg;
    const auto t = choose_targets(*victim, x, cfg);
    CHECK(t.ne(predict_labels(*victim, x)).all().item<bool>());
    cfg.target_policy = TargetPolicy::fixed;
    cfg.target_class = 3;
    CHECK(choose_targets(*victim, x, cfg).eq(3).all().item<bool>());
  }

  TEST_CASE("GAN training leaves victim and pools untouched and logs every epoch") {
    ArchSpec spec{Arch::tiny_cnn};
    auto victim = make_network(spec, 1);
    std::vector<NetworkPtr> pos{make_network(spec, 2)};
    std::vector<NetworkPtr> neg{make_network(spec, 3)};
    const auto before_v = clone_state(module_state(*victim));
    const auto before_p = clone_state(module_state(*pos[0]));
    const auto before_n = clone_state(module_state(*neg[0]));
    GanConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 64;
    cfg.generator_width = 4;
    const auto x = mini().images_at(mini_split().d_v).slice(0, 0, 128);
    const auto result = train_gan(GanNetworks{*victim, pos, neg}, x, cfg);
    CHECK(result.log.size() == 2);
    CHECK(states_equal(module_state(*victim), before_v));
    CHECK(states_equal(module_state(*pos[0]), before_p));
    CHECK(states_equal(module_state(*neg[0]), before_n));
    for (const auto& e : result.log) {
      CHECK(e.mean.l_total == doctest::Approx(weighted_generator_loss(e.mean.l_adv, e.mean.l_gan, e.mean.l_hinge,
                                                                      e.mean.l_conf, cfg)));
      CHECK(e.mean.l_conf == doctest::Approx(e.mean.l_p - e.mean.l_n));
    }
  }

  TEST_CASE("generated candidates are adversarial, correctly classified originals with true norms") {
    ArchSpec spec{Arch::tiny_cnn};
    auto victim = make_network(spec, 1);
    GanConfig cfg;
    cfg.generator_width = 4;
    cfg.perturbation_scale = 0.5;
    auto generator = make_generator(spec, cfg);
    const auto idx = mini_split().eval_set;
    const auto y = mini().labels_at(idx);
    const auto pred = predict_labels(*victim, mini().images_at(idx));
    const auto cands = generate_candidates(generator, *victim, mini(), idx);
    for (const auto& c : cands) {
      CHECK(c.y_v_xp != c.y_v_x);
      const auto pos = std::find(idx.begin(), idx.end(), c.source_index) - idx.begin();
      CHECK(pred[pos].item<std::int64_t>() == y[pos].item<std::int64_t>());
      CHECK(c.y_v_x == y[pos].item<std::int64_t>());
      CHECK(c.x_prime.min().item<float>() >= 0.0F);
      CHECK(c.x_prime.max().item<float>() <= 1.0F);
      CHECK(std::abs(c.perturbation_norm - (c.x_prime - c.x).norm().item<double>()) <= 1e-6);
    }
  }

  TEST_CASE("conferrability filter accepts and rejects by match counts") {
    CHECK(select_conferrable(std::vector{scored(3, 3, 0, 3)}, 0.9).size() == 1);
    CHECK(select_conferrable(std::vector{scored(8, 10, 0, 10)}, 0.9).empty());
    CHECK(select_conferrable(std::vector{scored(9, 10, 1, 10)}, 0.9).size() == 1);
    CHECK(select_conferrable(std::vector{scored(9, 10, 2, 10)}, 0.9).empty());
    // Two of three validation networks at the desk threshold.
    CHECK(select_conferrable(std::vector{scored(2, 3, 1, 3)}, 0.66).size() == 1);
    CHECK(select_conferrable(std::vector{scored(1, 3, 0, 3)}, 0.66).empty());
  }

  TEST_CASE("accepted sets are ordered and shrink as the threshold rises") {
    std::vector<ScoredCandidate> all;
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> d(0, 10);
    std::uniform_real_distribution<double> norm(0.0, 1.0);
    for (int i = 0; i < 300; ++i) {
      all.push_back(scored(static_cast<std::size_t>(d(rng)), 10, static_cast<std::size_t>(d(rng)), 10, i, norm(rng)));
    }
    std::vector<std::set<std::int64_t>> sets;
    for (double t : {0.5, 0.6, 0.7, 0.8, 0.9, 1.0}) {
      const auto acc = select_conferrable(all, t);
      std::set<std::int64_t> ids;
      for (std::size_t i = 0; i < acc.size(); ++i) {
        ids.insert(acc[i].pair.source_index);
        if (i > 0) {
          const auto& a = acc[i - 1];
          const auto& b = acc[i];
          CHECK((a.positive_matches > b.positive_matches ||
                 (a.positive_matches == b.positive_matches && a.pair.perturbation_norm <= b.pair.perturbation_norm)));
        }
      }
      sets.push_back(ids);
    }
    for (std::size_t i = 1; i < sets.size(); ++i) {
      CHECK(std::includes(sets[i - 1].begin(), sets[i - 1].end(), sets[i].begin(), sets[i].end()));
    }
  }

  TEST_CASE("shortfall carries the accepted count") {
    ArchSpec spec{Arch::tiny_cnn, 3, 4, 4, 10};
    std::vector<NetworkPtr> pos{std::make_shared<testing::ConstantNet>(spec, 2)};
    std::vector<NetworkPtr> neg{std::make_shared<testing::ConstantNet>(spec, 7)};
    std::vector<FingerprintPair> cands{pair_with(0, 1, 2), pair_with(1, 1, 2), pair_with(2, 1, 7)};
    try {
      filter_conferrable(cands, pos, neg, 0.9, 3, "victim", GanConfig{}, "g");
      FAIL("expected a shortfall");
    } catch (const ShortfallError& e) {
      CHECK(e.accepted() == 2);
    }
    const auto set = filter_conferrable(cands, pos, neg, 0.9, 2, "victim", GanConfig{}, "g");
    CHECK(set.size() == 2);
  }

  TEST_CASE("pairs must be adversarial for the victim") {
    auto forged = pair_with(0, 4, 4);
    forged.x_prime = forged.x;
    CHECK_THROWS_AS(validate_pair(forged), InvariantError);
    CHECK_THROWS_AS(make_fingerprint_set({forged}, "victim", GanConfig{}, "g"), InvariantError);
    auto outside = pair_with(0, 1, 2);
    outside.x_prime = outside.x + 1.0F;
    CHECK_THROWS_AS(validate_pair(outside), InvariantError);
  }

  TEST_CASE("fingerprint files round-trip bit-exactly") {
    testing::TempDir dir("fp");
    std::vector<FingerprintPair> pairs;
    for (int i = 0; i < 5; ++i) {
      auto x = torch::rand({3, 16, 16});
      auto xp = (x + 0.01F * torch::randn({3, 16, 16})).clamp(0, 1);
      pairs.push_back({i * 3, x, xp, i % 10, (i + 1) % 10, (xp - x).norm().item<double>()});
    }
    GanConfig cfg;
    cfg.gamma = 0.0;
    const auto set = make_fingerprint_set(pairs, "victim", cfg, "fingerprint/generator.bin");
    const auto path = dir.path() / "fingerprints.bin";
    save_fingerprints(set, path);
    const auto back = load_fingerprints(path);
    CHECK(back.victim_id == set.victim_id);
    CHECK(back.created_at == set.created_at);
    CHECK(back.gan_config == set.gan_config);
    REQUIRE(back.size() == set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
      CHECK(torch::equal(back.pairs[i].x, set.pairs[i].x));
      CHECK(torch::equal(back.pairs[i].x_prime, set.pairs[i].x_prime));
      CHECK(back.pairs[i].y_v_xp == set.pairs[i].y_v_xp);
      CHECK(back.pairs[i].perturbation_norm == set.pairs[i].perturbation_norm);
    }
    CHECK(std::filesystem::exists(sidecar_path(path)));
  }

  TEST_CASE("config validation and hashing") {
    GanConfig cfg;
    CHECK(cfg.eta == 1.0);
    CHECK(cfg.alpha == 5.0);
    CHECK(cfg.beta == 5.0);
    CHECK(cfg.gamma == 10.0);
    CHECK(cfg.c == 0.05);
    CHECK(cfg.batch_size == 128);
    CHECK(cfg.lr == 0.001);
    CHECK(cfg.epochs == 60);
    CHECK(cfg.k == 100);
    CHECK(cfg.confer_threshold == 0.9);
    CHECK(gan_config_from_json(to_json(cfg)) == cfg);
    auto other = cfg;
    other.gamma = 0.0;
    CHECK(config_hash(other) != config_hash(cfg));
    other.c = 0.0;
    CHECK_THROWS_AS(validate(other), ValidationError);
  }
}
