#include "doctest_torch.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "ganfinger/data_splits.hpp"
#include "ganfinger/dataset.hpp"
#include "ganfinger/error.hpp"
#include "helpers.hpp"

using namespace ganfinger;

namespace {

std::vector<std::int64_t> balanced_labels(std::int64_t n, std::int64_t classes) {
  std::vector<std::int64_t> labels(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % classes;
  return labels;
}

std::size_t intersection_size(std::vector<std::int64_t> a, std::vector<std::int64_t> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<std::int64_t> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out.size();
}

}  // namespace

TEST_SUITE("data_splits") {
  TEST_CASE("50000 training items split in half are disjoint and cover the training portion") {
    const auto labels = balanced_labels(60000, 10);
    const auto split = split_labels(labels, 50000, 0, 0.5, "synthetic");
    CHECK(split.d_v.size() == 25000);
    CHECK(split.d_p.size() == 25000);
    CHECK(intersection_size(split.d_v, split.d_p) == 0);
    CHECK(intersection_size(split.d_v, split.eval_set) == 0);
    CHECK(intersection_size(split.d_p, split.eval_set) == 0);
    std::set<std::int64_t> covered(split.d_v.begin(), split.d_v.end());
    covered.insert(split.d_p.begin(), split.d_p.end());
    CHECK(covered.size() == 50000);
    CHECK(*covered.begin() == 0);
    CHECK(*covered.rbegin() == 49999);
    CHECK(split.eval_set.size() == 10000);
  }

  TEST_CASE("same seed reproduces the split, different seeds differ") {
    const auto labels = balanced_labels(3000, 10);
    const auto a = split_labels(labels, 2500, 7, 0.5, "t");
    const auto b = split_labels(labels, 2500, 7, 0.5, "t");
    CHECK(a == b);
    const auto c = split_labels(labels, 2500, 8, 0.5, "t");
    CHECK(c.d_v != a.d_v);
    CHECK_NOTHROW(validate_split(c));
  }

  TEST_CASE("stratification keeps per-class counts within 2% of class size") {
    // Unbalanced classes to exercise rounding.
    std::vector<std::int64_t> labels;
    for (int c = 0; c < 10; ++c) {
      for (int i = 0; i < 101 + 37 * c; ++i) labels.push_back(c);
    }
    const auto n = static_cast<std::int64_t>(labels.size());
    for (double fraction : {0.5, 0.3}) {
      const auto split = split_labels(labels, n, 3, fraction, "t");
      std::map<std::int64_t, double> total, in_v, in_p;
      for (auto l : labels) total[l] += 1;
      for (auto i : split.d_v) in_v[labels[static_cast<std::size_t>(i)]] += 1;
      for (auto i : split.d_p) in_p[labels[static_cast<std::size_t>(i)]] += 1;
      for (const auto& [cls, size] : total) {
        CHECK(std::abs(in_v[cls] - fraction * size) <= 0.02 * size);
        CHECK(std::abs(in_p[cls] - (1 - fraction) * size) <= 0.02 * size);
      }
    }
  }

  TEST_CASE("fraction outside (0, 1) is a validation error") {
    const auto labels = balanced_labels(100, 10);
    CHECK_THROWS_AS(split_labels(labels, 100, 0, 0.0, "t"), ValidationError);
    CHECK_THROWS_AS(split_labels(labels, 100, 0, 1.0, "t"), ValidationError);
    CHECK_THROWS_AS(split_labels(labels, 100, 0, -0.2, "t"), ValidationError);
  }

  TEST_CASE("unknown dataset tag is a configuration error") {
    CHECK_THROWS_AS(split_dataset("imagenet-99", 0), ConfigError);
  }

  TEST_CASE("bundled dataset splits validate against the source") {
    const auto data = load_dataset("shapes10-mini");
    const auto split = split_dataset(data, 0);
    CHECK_NOTHROW(validate_split(split, data));
    CHECK(split.source_dataset == "shapes10-mini");
    CHECK(split.d_v.size() + split.d_p.size() == static_cast<std::size_t>(data.train_size));
  }

  TEST_CASE("shape styles change pixels but not labels") {
    const auto easy = make_shapes_dataset(200, 50, 3, "a");
    ShapeStyle hard;
    hard.noise = 0.08F;
    hard.min_alpha = 0.65;
    const auto noisy = make_shapes_dataset(200, 50, 3, "b", hard);
    CHECK(torch::equal(easy.labels, noisy.labels));
    CHECK_FALSE(torch::equal(easy.images, noisy.images));
    CHECK(noisy.images.min().item<float>() >= 0.0F);
    CHECK(noisy.images.max().item<float>() <= 1.0F);
    CHECK(torch::equal(noisy.images, make_shapes_dataset(200, 50, 3, "b", hard).images));
  }

  TEST_CASE("persist and load round-trip field for field") {
    testing::TempDir dir("split");
    const auto labels = balanced_labels(500, 10);
    const auto split = split_labels(labels, 400, 11, 0.5, "t");
    persist_split(split, dir.path() / "split.json");
    CHECK(load_split(dir.path() / "split.json") == split);
  }

  TEST_CASE("corrupt split files raise integrity errors naming the field") {
    testing::TempDir dir("split");
    const auto labels = balanced_labels(200, 10);
    const auto split = split_labels(labels, 150, 1, 0.5, "t");
    const auto path = dir.path() / "split.json";
    persist_split(split, path);
    std::ifstream in(path);
    auto doc = nlohmann::json::parse(in);
    in.close();

    SUBCASE("overlapping indices") {
      doc["d_p"].push_back(doc["d_v"][0]);
      std::ofstream(path) << doc.dump();
      CHECK_THROWS_AS(load_split(path), IntegrityError);
    }
    SUBCASE("missing seed") {
      doc.erase("seed");
      std::ofstream(path) << doc.dump();
      try {
        load_split(path);
        FAIL("expected an integrity error");
      } catch (const IntegrityError& e) {
        CHECK(e.field() == "seed");
      }
    }
    SUBCASE("not json at all") {
      std::ofstream(path) << "{ truncated";
      CHECK_THROWS_AS(load_split(path), IntegrityError);
    }
  }
}
