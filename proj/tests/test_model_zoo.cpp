#include "doctest_torch.hpp"

#include <set>

#include "ganfinger/data_splits.hpp"
#include "ganfinger/error.hpp"
#include "ganfinger/model_zoo.hpp"
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

ModelRecord record(const std::string& id, Role role) {
  ModelRecord r;
  r.model_id = id;
  r.role = role;
  r.arch = ArchSpec{Arch::tiny_cnn};
  if (role == Role::positive || role == Role::pirated) r.lineage = Lineage{"victim", "extract-label", {}};
  r.test_accuracy = 0.5;
  return r;
}

TrainConfig quick(int epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.lr = 0.05;
  return cfg;
}

}  // namespace

TEST_SUITE("model_zoo") {
  TEST_CASE("registry put/get/list round-trips records and weights") {
    testing::TempDir dir("registry");
    Registry reg(dir.path());
    auto net = make_network(ArchSpec{Arch::tiny_cnn}, 3);
    auto stored = reg.put(record("victim", Role::victim), *net);
    reg.put(record("positive-00", Role::positive), *net);
    reg.put(record("negative-00", Role::negative), *net);

    CHECK(reg.get("victim") == stored);
    CHECK(reg.contains("positive-00"));
    CHECK_THROWS_AS(reg.get("missing"), NotFoundError);

    const auto positives = reg.list(RecordFilter{Role::positive, std::nullopt, std::nullopt});
    REQUIRE(positives.size() == 1);
    CHECK(positives[0].model_id == "positive-00");
    CHECK(reg.list(RecordFilter{std::nullopt, std::nullopt, std::string("victim")}).size() == 1);
    CHECK(reg.list().size() == 3);

    // Replace keyed by id.
    auto changed = record("negative-00", Role::negative);
    changed.test_accuracy = 0.75;
    reg.put(changed, *net);
    CHECK(reg.get("negative-00").test_accuracy == 0.75);
    CHECK(reg.list().size() == 3);

    const auto probe = torch::rand({8, 3, 16, 16});
    const auto loaded = reg.load_network("victim");
    CHECK(torch::equal(predict_logits(*net, probe), predict_logits(*loaded, probe)));
    CHECK(states_equal(module_state(*net), module_state(*loaded)));
    CHECK(reg.lineage_root("positive-00").model_id == "victim");
  }

  TEST_CASE("records enforce the role/lineage invariant") {
    auto pos = record("p", Role::positive);
    pos.lineage.reset();
    CHECK_THROWS_AS(validate_record(pos), InvariantError);
    auto neg = record("n", Role::negative);
    neg.lineage = Lineage{"victim", "x", {}};
    CHECK_THROWS_AS(validate_record(neg), InvariantError);
    auto acc = record("a", Role::victim);
    acc.test_accuracy = 1.5;
    CHECK_THROWS_AS(validate_record(acc), InvariantError);
  }

  TEST_CASE("missing weights surface as a registry error") {
    testing::TempDir dir("registry");
    Registry reg(dir.path());
    auto net = make_network(ArchSpec{Arch::tiny_cnn}, 3);
    reg.put(record("victim", Role::victim), *net);
    std::filesystem::remove(dir.path() / "victim" / "weights.bin");
    CHECK_THROWS_AS(reg.load_network("victim"), NotFoundError);
    CHECK_THROWS_AS(evaluate_accuracy(reg, reg.get("victim"), mini(), mini_split().eval_set), NotFoundError);
  }

  TEST_CASE("build_pools splits 30 positives into disjoint pools of 20 and 10") {
    std::vector<ModelRecord> records;
    for (int i = 0; i < 30; ++i) records.push_back(record("p" + std::to_string(100 + i), Role::positive));
    for (int i = 0; i < 30; ++i) records.push_back(record("n" + std::to_string(100 + i), Role::negative));
    const auto pools = build_pools(records, 20, 10);
    CHECK(pools.positive_train.member_ids.size() == 20);
    CHECK(pools.positive_validation.member_ids.size() == 10);
    std::set<std::string> train(pools.positive_train.member_ids.begin(), pools.positive_train.member_ids.end());
    for (const auto& id : pools.positive_validation.member_ids) CHECK(train.count(id) == 0);
    CHECK(pools.negative_train.role == Role::negative);
    for (const auto& id : pools.negative_train.member_ids) CHECK(id[0] == 'n');
  }

  TEST_CASE("desk pool sizes 5 + 3 are valid and disjoint") {
    std::vector<ModelRecord> records;
    for (int i = 0; i < 8; ++i) {
      records.push_back(record("positive-0" + std::to_string(i), Role::positive));
      records.push_back(record("negative-0" + std::to_string(i), Role::negative));
    }
    const auto pools = build_pools(records, 5, 3);
    CHECK(pools.positive_train.member_ids.size() == 5);
    CHECK(pools.negative_validation.member_ids.size() == 3);
    std::set<std::string> all;
    for (const auto* p : {&pools.positive_train, &pools.positive_validation, &pools.negative_train,
                          &pools.negative_validation}) {
      all.insert(p->member_ids.begin(), p->member_ids.end());
    }
    CHECK(all.size() == 16);
  }

  TEST_CASE("build_pools with 4 positives and m_train 5 is a capacity error") {
    std::vector<ModelRecord> records;
    for (int i = 0; i < 4; ++i) records.push_back(record("p" + std::to_string(i), Role::positive));
    for (int i = 0; i < 10; ++i) records.push_back(record("n" + std::to_string(i), Role::negative));
    try {
      build_pools(records, 5, 0);
      FAIL("expected a capacity error");
    } catch (const CapacityError& e) {
      CHECK(e.available() == 4);
      CHECK(e.required() == 5);
    }
  }

  TEST_CASE("evaluate_accuracy matches hand-counted answers") {
    ArchSpec spec{Arch::tiny_cnn, 3, 16, 16, 10};
    Dataset data;
    data.tag = "hand";
    data.num_classes = 10;
    data.images = torch::stack({testing::coded_input(1, spec), testing::coded_input(2, spec),
                                testing::coded_input(3, spec)});
    data.labels = torch::tensor({1, 2, 4}, torch::kInt64);
    data.train_size = 0;
    testing::PixelCodedNet net(spec);
    const std::vector<std::int64_t> idx{0, 1, 2};
    CHECK(evaluate_accuracy(net, data, idx) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  }

  TEST_CASE("constant predictor on a balanced set scores about one in ten") {
    testing::ConstantNet net(ArchSpec{Arch::tiny_cnn}, 4);
    const auto acc = evaluate_accuracy(net, mini(), mini_split().eval_set);
    CHECK(std::abs(acc - 0.1) <= 0.02);
  }

  TEST_CASE("zero epochs leaves the victim near chance") {
    auto victim = train_victim(mini(), mini_split(), ArchSpec{Arch::tiny_cnn}, quick(0), 5);
    CHECK(victim.record.role == Role::victim);
    CHECK(std::abs(victim.record.test_accuracy - 0.1) <= 0.05);
  }

  TEST_CASE("independent networks with different seeds get different weights and no lineage") {
    auto a = train_negative(mini(), mini_split(), ArchSpec{Arch::tiny_cnn}, quick(1), 1, "negative-a");
    auto b = train_negative(mini(), mini_split(), ArchSpec{Arch::tiny_cnn}, quick(1), 2, "negative-b");
    CHECK_FALSE(a.record.lineage.has_value());
    double max_delta = 0.0;
    const auto sa = module_state(*a.net);
    const auto sb = module_state(*b.net);
    for (std::size_t i = 0; i < sa.size(); ++i) {
      max_delta = std::max(max_delta, (sa[i].second - sb[i].second).abs().max().item<double>());
    }
    CHECK(max_delta > 0.0);
    CHECK_THROWS_AS(train_negative(mini(), mini_split(), ArchSpec{Arch::tiny_cnn}, quick(0), 1, "x", Role::victim),
                    ValidationError);
  }

  TEST_CASE("extraction from a constant teacher predicts that constant") {
    TrainedModel teacher;
    teacher.net = std::make_shared<testing::ConstantNet>(ArchSpec{Arch::tiny_cnn}, 7);
    teacher.record = record("victim", Role::victim);
    const auto queries = query_victim(*teacher.net, mini().images_at(mini_split().d_p));
    auto pos = train_positive_extraction(teacher, queries, mini(), mini_split(), ArchSpec{Arch::tiny_cnn}, quick(2),
                                         9, "positive-00");
    CHECK(pos.record.role == Role::positive);
    REQUIRE(pos.record.lineage.has_value());
    CHECK(pos.record.lineage->parent_id == "victim");
    CHECK(pos.record.lineage->attack == "extract-label");
    CHECK(pos.record.metadata.at("victim_agreement").get<double>() >= 0.99);
    // Audit trail: trained on the victim's labels, never ground truth.
    CHECK(pos.record.metadata.at("training").at("label_source") == "victim_labels");
  }

  TEST_CASE("victim queries are cached on disk") {
    testing::TempDir dir("registry");
    Registry reg(dir.path());
    auto net = make_network(ArchSpec{Arch::tiny_cnn}, 3);
    const auto rec = reg.put(record("victim", Role::victim), *net);
    const auto first = cached_victim_queries(reg, rec, *net, mini(), mini_split());
    CHECK(std::filesystem::exists(reg.cache_dir() / "victim.dp-queries.bin"));
    testing::ConstantNet other(ArchSpec{Arch::tiny_cnn}, 0);
    const auto second = cached_victim_queries(reg, rec, other, mini(), mini_split());
    CHECK(torch::equal(first.labels, second.labels));
  }
}
