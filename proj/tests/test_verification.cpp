#include "doctest_torch.hpp"

#include <random>

#include "ganfinger/error.hpp"
#include "ganfinger/verification.hpp"
#include "helpers.hpp"

using namespace ganfinger;

namespace {

const ArchSpec kSpec{Arch::tiny_cnn, 3, 4, 4, 10};

// Pairs whose x encodes class a and x' encodes class b under PixelCodedNet.
FingerprintSet coded_set(const std::vector<std::pair<std::int64_t, std::int64_t>>& classes) {
  std::vector<FingerprintPair> pairs;
  std::int64_t i = 0;
  for (auto [a, b] : classes) {
    auto x = testing::coded_input(a, kSpec);
    auto xp = testing::coded_input(b, kSpec);
    pairs.push_back({i++, x, xp, a, b, (xp - x).norm().item<double>()});
  }
  return make_fingerprint_set(pairs, "victim", GanConfig{}, "g");
}

/// Answers from a fixed list and counts calls; throws after `fail_after` answers.
class ScriptedOracle : public LabelOracle {
 public:
  explicit ScriptedOracle(std::vector<std::int64_t> answers, std::size_t fail_after = SIZE_MAX)
      : answers_(std::move(answers)), fail_after_(fail_after) {}
  std::string suspect_id() const override { return "scripted"; }
  std::int64_t label(const Query& q) override {
    if (calls >= fail_after_) throw std::runtime_error("suspect unreachable");
    kinds.push_back(q.kind);
    return answers_.at(calls++);
  }
  std::size_t calls = 0;
  std::vector<InputKind> kinds;

 private:
  std::vector<std::int64_t> answers_;
  std::size_t fail_after_;
};

}  // namespace

TEST_SUITE("verification") {
  TEST_CASE("ARD by hand: 4 pairs, 1 original mismatch, 3 conferrable matches") {
    const std::vector<std::int64_t> yx{0, 1, 2, 3}, yxp{5, 6, 7, 8};
    const std::vector<std::int64_t> sx{0, 1, 2, 9}, sxp{5, 6, 7, 3};
    const auto r = ard_from_labels("s", yx, yxp, sx, sxp);
    CHECK(r.ori_mismatches == 1);
    CHECK(r.conf_matches == 3);
    CHECK(r.p_ori == 0.25);
    CHECK(r.p_conf == 0.75);
    CHECK(r.ard == 0.5);
    CHECK(r.per_pair[3] == PairOutcome{true, false});
    CHECK_THROWS_AS(ard_from_labels("s", {}, {}, {}, {}), ValidationError);
    CHECK_THROWS_AS(ard_from_labels("s", yx, yxp, sx, std::vector<std::int64_t>{1}), ValidationError);
  }

  TEST_CASE("the victim itself scores ARD 1") {
    const auto set = coded_set({{0, 1}, {2, 3}, {4, 5}, {6, 9}});
    ModelOracle self("victim", std::make_shared<testing::PixelCodedNet>(kSpec));
    const auto r = compute_ard(set, self);
    CHECK(r.ard == 1.0);
    CHECK(r.k == 4);
  }

  TEST_CASE("uniform random labels give ARD near -0.8") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::int64_t> cls(0, 9);
    const std::size_t k = 20000;
    std::vector<std::int64_t> yx(k), yxp(k), sx(k), sxp(k);
    for (std::size_t i = 0; i < k; ++i) {
      yx[i] = cls(rng);
      yxp[i] = (yx[i] + 1 + cls(rng) % 9) % 10;
      sx[i] = cls(rng);
      sxp[i] = cls(rng);
    }
    CHECK(ard_from_labels("r", yx, yxp, sx, sxp).ard == doctest::Approx(-0.8).epsilon(0.1 / 0.8));
  }

  TEST_CASE("ARD is exact integer arithmetic over K") {
    const std::size_t k = 7;
    std::vector<std::int64_t> yx(k, 0), yxp(k, 1), sx(k, 0), sxp(k, 1);
    sx[0] = 3;
    sxp[1] = 3;
    sxp[2] = 3;
    CHECK(ard_from_labels("s", yx, yxp, sx, sxp).ard == (5.0 - 1.0) / 7.0);
  }

  TEST_CASE("exactly 2K queries, x before x' per pair") {
    const auto set = coded_set({{0, 1}, {2, 3}, {4, 5}});
    ScriptedOracle oracle({0, 1, 2, 3, 4, 5});
    compute_ard(set, oracle);
    CHECK(oracle.calls == 6);
    for (std::size_t i = 0; i < 6; ++i) CHECK(oracle.kinds[i] == (i % 2 ? InputKind::x_prime : InputKind::x));
  }

  TEST_CASE("oracle failure reports the answered count") {
    const auto set = coded_set({{0, 1}, {2, 3}, {4, 5}});
    ScriptedOracle oracle({0, 1, 2, 3, 4, 5}, 3);
    try {
      compute_ard(set, oracle);
      FAIL("expected PartialResultError");
    } catch (const PartialResultError& e) {
      CHECK(e.completed() == 3);
    }
  }

  TEST_CASE("classify is strict at the threshold") {
    ARDReport r;
    r.ard = 0.5;
    CHECK(classify(r, 0.5) == Verdict::irrelevant);
    r.ard = 0.5000001;
    CHECK(classify(r, 0.5) == Verdict::pirated);
    r.ard = 1.0;
    CHECK(classify(r, 0.99) == Verdict::pirated);
    CHECK_THROWS_AS(classify(r, 0.0), ValidationError);
    CHECK_THROWS_AS(classify(r, 1.0), ValidationError);
  }

  TEST_CASE("ARUC of a single pirated/irrelevant pair is the gap between them") {
    const std::vector<double> p{0.8}, n{0.2};
    CHECK(compute_curves(p, n, 1000).aruc == doctest::Approx(0.6).epsilon(2e-3 / 0.6));
    CHECK(compute_curves(p, n, 10000).aruc == doctest::Approx(0.6).epsilon(2e-4 / 0.6));
  }

  TEST_CASE("perfect separation at the extremes gives ARUC near 1, overlap gives 0") {
    const std::vector<double> p{1.0, 1.0, 1.0}, n{-0.5, 0.0, -0.2};
    CHECK(compute_curves(p, n).aruc >= 0.998);
    const std::vector<double> lo{0.0}, hi{1.0};
    CHECK(compute_curves(lo, hi).aruc <= 1e-3);
  }

  TEST_CASE("curves are monotone and ARUC converges as the grid refines") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> p(30), n(30);
    for (auto& v : p) v = 0.3 + 0.7 * std::abs(u(rng));
    for (auto& v : n) v = 0.6 * u(rng);
    const auto coarse = compute_curves(p, n, 100);
    const auto fine = compute_curves(p, n, 1000);
    const auto finest = compute_curves(p, n, 20000);
    for (std::size_t i = 1; i < fine.thresholds.size(); ++i) {
      CHECK(fine.robustness[i] <= fine.robustness[i - 1]);
      CHECK(fine.uniqueness[i] >= fine.uniqueness[i - 1]);
    }
    CHECK(std::abs(fine.aruc - finest.aruc) <= 5e-3);
    CHECK(fine.aruc >= 0.0);
    CHECK(fine.aruc <= 1.0);
  }

  TEST_CASE("label matching rate") {
    const std::vector<std::int64_t> a{1, 2, 3}, b{1, 2, 4};
    CHECK(label_matching_rate(a, b) == doctest::Approx(2.0 / 3.0));
    ModelOracle one("a", std::make_shared<testing::PixelCodedNet>(kSpec));
    ModelOracle two("b", std::make_shared<testing::ConstantNet>(kSpec, 2));
    auto ex = torch::stack({testing::coded_input(2, kSpec), testing::coded_input(5, kSpec),
                            testing::coded_input(2, kSpec), testing::coded_input(7, kSpec)});
    CHECK(label_matching_rate(one, two, ex) == 0.5);
  }

  TEST_CASE("journal replay reproduces the report") {
    testing::TempDir dir("journal");
    const auto set = coded_set({{0, 1}, {2, 3}, {4, 5}, {6, 7}});
    ModelOracle live("suspect", std::make_shared<testing::ConstantNet>(kSpec, 3));
    std::vector<JournalEntry> sink;
    JournalingOracle journaling(live, sink);
    const auto first = compute_ard(set, journaling);
    CHECK(sink.size() == 8);
    const auto path = dir.path() / "suspect.jsonl";
    write_journal(path, sink);
    const auto entries = read_journal(path);
    CHECK(entries.size() == 8);
    TranscriptOracle replay("suspect", entries);
    const auto second = compute_ard(set, replay);
    CHECK(second == first);
    CHECK(to_json(second).dump() == to_json(first).dump());
    CHECK(ard_report_from_json(to_json(first)) == first);

    const auto bigger = coded_set({{0, 1}, {2, 3}, {4, 5}, {6, 7}, {8, 9}});
    CHECK_THROWS_AS(compute_ard(bigger, replay), PartialResultError);
  }
}
