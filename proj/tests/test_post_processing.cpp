#include "doctest_torch.hpp"

#include <algorithm>
#include <numeric>

#include "ganfinger/data_splits.hpp"
#include "ganfinger/error.hpp"
#include "ganfinger/post_processing.hpp"
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

TrainConfig quick(int epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.lr = 0.05;
  return cfg;
}

// Independent oracle: indices sorted by (|w|, index), first floor(p*n) zeroed.
torch::Tensor oracle_prune(const torch::Tensor& w, double p) {
  auto flat = w.contiguous().view({-1}).clone();
  const auto n = flat.numel();
  std::int64_t count = 0;
  while (count + 1 <= static_cast<double>(n) * p + 1e-9 && count < n) ++count;
  std::vector<std::pair<float, std::int64_t>> keyed;
  for (std::int64_t i = 0; i < n; ++i) keyed.emplace_back(std::abs(flat[i].item<float>()), i);
  std::sort(keyed.begin(), keyed.end());
  for (std::int64_t i = 0; i < count; ++i) flat[keyed[static_cast<std::size_t>(i)].second] = 0.0F;
  return flat.view(w.sizes());
}

}  // namespace

TEST_SUITE("post_processing") {
  TEST_CASE("hand example: [0.1, -0.05, 0.3, 0.2] at p = 0.5") {
    auto w = torch::tensor({0.1F, -0.05F, 0.3F, 0.2F}).view({2, 2});
    prune_tensor_(w, 0.5);
    CHECK(torch::equal(w, torch::tensor({0.0F, 0.0F, 0.3F, 0.2F}).view({2, 2})));
  }

  TEST_CASE("prune count is floor(p n) without representation drift") {
    CHECK(prune_count(10, 0.3) == 3);
    CHECK(prune_count(7, 0.5) == 3);
    CHECK(prune_count(4, 1.0) == 4);
    CHECK(prune_count(100, 0.0) == 0);
    CHECK_THROWS_AS(prune_count(10, 1.1), ValidationError);
    CHECK_THROWS_AS(prune_count(10, -0.1), ValidationError);
  }

  TEST_CASE("ties go to the lower flat index") {
    auto w = torch::tensor({0.2F, -0.2F, 0.2F, 0.5F}).view({2, 2});
    prune_tensor_(w, 0.5);
    CHECK(torch::equal(w, torch::tensor({0.0F, 0.0F, 0.2F, 0.5F}).view({2, 2})));
  }

  TEST_CASE("prune matches the oracle per layer, exempts biases, and is idempotent") {
    auto net = make_network(ArchSpec{Arch::tiny_cnn}, 4);
    for (double p : {0.0, 0.1, 0.3, 0.5}) {
      auto pruned = prune(*net, p);
      auto source = module_state(*net);
      auto out = module_state(*pruned);
      for (std::size_t i = 0; i < source.size(); ++i) {
        const auto& [name, before] = source[i];
        const auto& after = out[i].second;
        CHECK(after.sizes() == before.sizes());
        if (is_prunable(name, before)) {
          CHECK(torch::equal(after, oracle_prune(before, p)));
        } else {
          CHECK(torch::equal(after, before));
        }
      }
      auto twice = prune(*pruned, p);
      CHECK(states_equal(module_state(*twice), module_state(*pruned)));
    }
    CHECK_THROWS_AS(prune(*net, 1.5), ValidationError);
  }

  TEST_CASE("FTLL with zero epochs is a no-op") {
    auto net = make_network(ArchSpec{Arch::tiny_cnn}, 4);
    const auto x = mini().images_at(mini_split().d_p);
    const auto y = mini().labels_at(mini_split().d_p);
    auto out = finetune(*net, FinetuneMode::ftll, x, y, quick(0), 1);
    CHECK(states_equal(module_state(*out), module_state(*net)));
  }

  TEST_CASE("FTLL and RTLL leave every non-final tensor bit-identical") {
    auto net = make_network(ArchSpec{Arch::small_resnet_20, 3, 16, 16, 10, 4}, 4);
    const auto x = mini().images_at(mini_split().d_p);
    const auto y = mini().labels_at(mini_split().d_p);
    for (auto mode : {FinetuneMode::ftll, FinetuneMode::rtll}) {
      auto out = finetune(*net, mode, x, y, quick(1), 2);
      const auto a = module_state(*net);
      const auto b = module_state(*out);
      bool final_changed = false;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const bool same = torch::equal(a[i].second, b[i].second);
        if (in_final_layer(net->spec(), a[i].first)) {
          final_changed = final_changed || !same;
        } else {
          CHECK_MESSAGE(same, a[i].first);
        }
      }
      CHECK(final_changed);
    }
  }

  TEST_CASE("FTAL updates more than the final layer") {
    auto net = make_network(ArchSpec{Arch::tiny_cnn}, 4);
    const auto x = mini().images_at(mini_split().d_p);
    const auto y = mini().labels_at(mini_split().d_p);
    auto out = finetune(*net, FinetuneMode::ftal, x, y, quick(1), 2);
    const auto a = module_state(*net);
    const auto b = module_state(*out);
    bool inner_changed = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!in_final_layer(net->spec(), a[i].first) && !torch::equal(a[i].second, b[i].second)) inner_changed = true;
    }
    CHECK(inner_changed);
  }

  TEST_CASE("attack descriptors enforce parameter presence") {
    AttackDescriptor a;
    a.kind = AttackKind::prune;
    CHECK_THROWS_AS(validate(a), ValidationError);
    a.prune_rate = 0.3;
    CHECK_NOTHROW(validate(a));
    a.fgsm_eps = 0.1;
    CHECK_THROWS_AS(validate(a), ValidationError);

    AttackDescriptor adv;
    adv.kind = AttackKind::adv_train;
    adv.fgsm_eps = -0.1;
    adv.rounds = 2;
    CHECK_THROWS_AS(validate(adv), ValidationError);
    adv.fgsm_eps = 8.0 / 255.0;
    CHECK_NOTHROW(validate(adv));
    CHECK(attack_from_json(to_json(adv)) == adv);

    AttackDescriptor ext;
    ext.kind = AttackKind::extract_prob;
    CHECK_THROWS_AS(validate(ext), ValidationError);
    ext.target_arch = Arch::vgg_16;
    CHECK(attack_from_json(to_json(ext)) == ext);

    AttackDescriptor ft;
    ft.kind = AttackKind::ftll;
    ft.epochs = -1;
    CHECK_THROWS_AS(validate(ft), ValidationError);
  }

  TEST_CASE("FGSM with eps 0 returns the clean inputs") {
    auto net = make_network(ArchSpec{Arch::tiny_cnn}, 4);
    const auto x = mini().images_at(mini_split().eval_set).slice(0, 0, 32);
    const auto y = mini().labels_at(mini_split().eval_set).slice(0, 0, 32);
    CHECK(torch::equal(fgsm(*net, x, y, 0.0), x));
    const auto adv = fgsm(*net, x, y, 0.05);
    CHECK((adv - x).abs().max().item<float>() <= 0.05F + 1e-6F);
    CHECK(adv.min().item<float>() >= 0.0F);
    CHECK(adv.max().item<float>() <= 1.0F);
    CHECK_THROWS_AS(fgsm(*net, x, y, -1.0), ValidationError);
  }

  TEST_CASE("extraction from a constant teacher predicts the constant everywhere") {
    testing::ConstantNet teacher(ArchSpec{Arch::tiny_cnn}, 3);
    const auto x = mini().images_at(mini_split().d_p);
    const auto queries = query_victim(teacher, x);
    for (auto mode : {ExtractionMode::label, ExtractionMode::prob}) {
      auto student = extract(queries, x, ArchSpec{Arch::tiny_cnn}, mode, quick(2), 5);
      const auto y = predict_labels(*student, mini().images_at(mini_split().eval_set));
      CHECK(y.eq(3).to(torch::kFloat64).mean().item<double>() >= 0.99);
    }
  }

  TEST_CASE("adversarial training requires a label-extraction parent") {
    const auto victim_net = make_network(ArchSpec{Arch::tiny_cnn}, 4);
    TrainedModel victim{ModelRecord{}, victim_net};
    victim.record.model_id = "victim";
    const auto queries = query_victim(*victim_net, mini().images_at(mini_split().d_p));
    AttackContext ctx{mini(), mini_split(), victim, queries, quick(1), quick(1)};
    AttackDescriptor adv;
    adv.kind = AttackKind::adv_train;
    adv.fgsm_eps = 0.03;
    adv.rounds = 1;
    adv.epochs = 1;
    CHECK_THROWS_AS(apply_attack(ctx, victim, adv, 1, "p"), ValidationError);

    AttackDescriptor ftll;
    ftll.kind = AttackKind::ftll;
    ftll.epochs = 1;
    const auto pirate = apply_attack(ctx, victim, ftll, 1, "pirate-00");
    CHECK(pirate.record.role == Role::pirated);
    REQUIRE(pirate.record.lineage.has_value());
    CHECK(pirate.record.lineage->parent_id == "victim");
    CHECK(attack_from_json(pirate.record.lineage->descriptor) == ftll);
  }
}
