#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "flc/data.hpp"
#include "flc/errors.hpp"
#include "test_helpers.hpp"

using namespace flc;

namespace {

Dataset labelled(std::size_t n, std::size_t classes) {
  Dataset d;
  d.input_dim = 1;
  for (std::size_t i = 0; i < n; ++i) {
    d.inputs.push_back(static_cast<double>(i));
    d.labels.push_back(static_cast<double>(i % classes));
  }
  return d;
}

std::vector<std::size_t> sizes(const Partition& p) {
  std::vector<std::size_t> out;
  for (const auto& s : p) out.push_back(s.size());
  return out;
}

void check_disjoint_cover(const Partition& p, std::size_t total) {
  std::set<std::size_t> seen;
  std::size_t count = 0;
  for (const auto& s : p) {
    CHECK_FALSE(s.empty());
    for (auto i : s) {
      CHECK(i < total);
      seen.insert(i);
      ++count;
    }
  }
  CHECK(seen.size() == count);
  CHECK(count == total);
}

}  // namespace

TEST_CASE("blobs are separable by a directly fitted logistic model") {
  const auto data = generate_synthetic({SyntheticKind::kBlobs, 200, 2, 2, 0.1, 7});
  REQUIRE(data.size() == 200);
  // Logistic regression on label in {0,1}, fitted by full-batch gradient descent.
  double w0 = 0.0, w1 = 0.0, b = 0.0;
  for (int step = 0; step < 500; ++step) {
    double g0 = 0.0, g1 = 0.0, gb = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto x = data.row(i);
      const double p = 1.0 / (1.0 + std::exp(-(w0 * x[0] + w1 * x[1] + b)));
      const double r = p - data.labels[i];
      g0 += r * x[0];
      g1 += r * x[1];
      gb += r;
    }
    w0 -= 0.1 * g0 / 200.0;
    w1 -= 0.1 * g1 / 200.0;
    b -= 0.1 * gb / 200.0;
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.row(i);
    const double label = (w0 * x[0] + w1 * x[1] + b) > 0.0 ? 1.0 : 0.0;
    correct += label == data.labels[i] ? 1 : 0;
  }
  CHECK(static_cast<double>(correct) / 200.0 >= 0.99);
}

TEST_CASE("noiseless regression is recovered exactly by normal equations") {
  SyntheticTruth truth;
  const auto data = generate_synthetic({SyntheticKind::kRegression, 50, 4, 1, 0.0, 3}, &truth);
  const auto sol = test::normal_equations(data);
  for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(sol[j] - truth.weights[j]) < 1e-10);
  CHECK(std::abs(sol[4] - truth.bias) < 1e-10);
  double worst = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    double yhat = sol[4];
    for (std::size_t j = 0; j < 4; ++j) yhat += sol[j] * data.row(i)[j];
    worst = std::max(worst, std::abs(yhat - data.labels[i]));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("synthetic data is a pure function of the seed") {
  const SyntheticSpec spec{SyntheticKind::kBlobs, 64, 3, 4, 0.5, 11};
  CHECK(generate_synthetic(spec) == generate_synthetic(spec));
  SyntheticSpec other = spec;
  other.seed = 12;
  CHECK_FALSE(generate_synthetic(spec) == generate_synthetic(other));
}

TEST_CASE("blob centers are at least four noise units apart") {
  SyntheticTruth truth;
  generate_synthetic({SyntheticKind::kBlobs, 50, 2, 5, 3.0, 1}, &truth);
  for (std::size_t a = 0; a < 5; ++a) {
    for (std::size_t c = a + 1; c < 5; ++c) {
      const double dx = truth.centers[a * 2] - truth.centers[c * 2];
      const double dy = truth.centers[a * 2 + 1] - truth.centers[c * 2 + 1];
      CHECK(std::sqrt(dx * dx + dy * dy) >= 12.0 - 1e-9);
    }
  }
}

TEST_CASE("invalid synthetic sizes") {
  CHECK_THROWS_AS(generate_synthetic({SyntheticKind::kBlobs, 2, 2, 3, 0.1, 0}), ConfigError);
  CHECK_THROWS_AS(generate_synthetic({SyntheticKind::kRegression, 0, 2, 1, 0.1, 0}), ConfigError);
}

TEST_CASE("equal partition sizes and remainder rule") {
  CHECK(sizes(partition(labelled(8, 2), 4, {}, 0)) == std::vector<std::size_t>{2, 2, 2, 2});
  CHECK(sizes(partition(labelled(10, 2), 4, {}, 0)) == std::vector<std::size_t>{3, 3, 2, 2});
  const auto p = partition(labelled(10, 2), 4, {}, 0);
  CHECK(p[0] == std::vector<std::size_t>{0, 1, 2});
  CHECK(p[3] == std::vector<std::size_t>{8, 9});
  CHECK_THROWS_AS(partition(labelled(3, 2), 4, {}, 0), ConfigError);
}

TEST_CASE("iid-shuffle keeps equal sizes over a permutation") {
  const auto data = labelled(103, 3);
  const auto p = partition(data, 5, {PartitionScheme::kIidShuffle, 0}, 9);
  CHECK(sizes(p) == equal_block_sizes(103, 5));
  check_disjoint_cover(p, 103);
  CHECK(p == partition(data, 5, {PartitionScheme::kIidShuffle, 0}, 9));
  CHECK(p != partition(data, 5, {PartitionScheme::kEqual, 0}, 9));
}

TEST_CASE("label shards deal whole label-sorted blocks") {
  const auto data = labelled(20, 2);
  // Enumerated shards: stable label sort, then four blocks of five.
  std::vector<std::size_t> order(20);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return data.labels[a] < data.labels[b]; });
  std::vector<std::set<std::size_t>> shards(4);
  for (std::size_t i = 0; i < 20; ++i) shards[i / 5].insert(order[i]);

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = partition(data, 2, {PartitionScheme::kLabelShards, 2}, seed);
    check_disjoint_cover(p, 20);
    for (const auto& client : p) {
      const std::set<std::size_t> held(client.begin(), client.end());
      std::size_t whole = 0;
      for (const auto& s : shards) {
        const bool all = std::includes(held.begin(), held.end(), s.begin(), s.end());
        bool any = false;
        for (auto i : s) any = any || held.contains(i);
        CHECK(all == any);
        whole += all ? 1 : 0;
      }
      CHECK(whole == 2);
      std::set<double> labels;
      for (auto i : client) labels.insert(data.labels[i]);
      CHECK(labels.size() <= 2);
    }
  }
}

TEST_CASE("batches split and cover the shard") {
  const auto data = labelled(50, 2);
  const std::vector<std::size_t> five{3, 9, 14, 20, 41};
  const auto b = batch_indices(five, {2, 7}, 1, 1, 0);
  REQUIRE(b.size() == 3);
  CHECK(b[0].size() == 2);
  CHECK(b[1].size() == 2);
  CHECK(b[2].size() == 1);

  const auto full = batch_indices(five, {64, 7}, 1, 1, 0);
  REQUIRE(full.size() == 1);
  CHECK(full[0] == five);

  CHECK(b == batch_indices(five, {2, 7}, 1, 1, 0));

  std::vector<std::size_t> shard(37);
  std::iota(shard.begin(), shard.end(), 5);
  for (std::uint64_t epoch = 0; epoch < 5; ++epoch) {
    const auto parts = batch_indices(shard, {8, 1}, 2, 3, epoch);
    CHECK(parts.size() == 5);
    std::multiset<std::size_t> seen;
    for (const auto& part : parts) seen.insert(part.begin(), part.end());
    CHECK(seen == std::multiset<std::size_t>(shard.begin(), shard.end()));
  }
  CHECK(batch_indices(shard, {8, 1}, 2, 3, 0) != batch_indices(shard, {8, 1}, 2, 3, 1));
  CHECK(batches(data, five, {2, 7}, 1, 1, 0).size() == 3);
}

TEST_CASE("IDX parsing") {
  const std::vector<std::uint8_t> images{0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2,
                                         0, 255, 51, 102, 1, 2, 3, 4};
  const std::vector<std::uint8_t> labels{0, 0, 8, 1, 0, 0, 0, 2, 7, 3};
  const auto d = parse_idx(images, labels);
  CHECK(d.size() == 2);
  CHECK(d.input_dim == 4);
  CHECK(d.inputs[1] == 1.0);
  CHECK(d.inputs[2] == doctest::Approx(0.2));
  CHECK(d.labels == std::vector<double>{7.0, 3.0});

  auto bad_magic = images;
  bad_magic[3] = 4;
  CHECK_THROWS_AS(parse_idx(bad_magic, labels), IngestionError);

  auto truncated = images;
  truncated.pop_back();
  try {
    parse_idx(truncated, labels);
    FAIL("expected an ingestion error");
  } catch (const IngestionError& e) {
    CHECK(e.offset() == truncated.size());
  }

  const std::vector<std::uint8_t> three_labels{0, 0, 8, 1, 0, 0, 0, 3, 7, 3, 1};
  CHECK_THROWS_AS(parse_idx(images, three_labels), IngestionError);
  CHECK_THROWS_AS(parse_idx(std::vector<std::uint8_t>{0, 0, 8}, labels), IngestionError);
}

TEST_CASE("IDX files load from disk") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto img = dir / "flc_test_images.idx";
  const auto lab = dir / "flc_test_labels.idx";
  {
    std::ofstream(img, std::ios::binary).write("\0\0\x08\x03\0\0\0\x01\0\0\0\x01\0\0\0\x01\xff", 17);
    std::ofstream(lab, std::ios::binary).write("\0\0\x08\x01\0\0\0\x01\x05", 9);
  }
  const auto d = load_idx(img, lab);
  CHECK(d.inputs == std::vector<double>{1.0});
  CHECK(d.labels == std::vector<double>{5.0});
  CHECK_THROWS_AS(load_idx(dir / "flc_missing.idx", lab), IngestionError);
}

TEST_CASE("CSV parsing") {
  const auto d = parse_csv("1.0,2.0,0\n", 2, false);
  CHECK(d.size() == 1);
  CHECK(d.inputs == std::vector<double>{1.0, 2.0});
  CHECK(d.labels == std::vector<double>{0.0});

  const auto h = parse_csv("a,label,b\r\n1,1,2\r\n3,0,4\r\n", 1, true);
  CHECK(h.inputs == std::vector<double>{1.0, 2.0, 3.0, 4.0});
  CHECK(h.labels == std::vector<double>{1.0, 0.0});

  CHECK_THROWS_AS(parse_csv("1,2,x\n", 2, false), IngestionError);
  CHECK_THROWS_AS(parse_csv("1,2,3\n1,2\n", 2, false), IngestionError);
  CHECK_THROWS_AS(parse_csv("1,2\n", 5, false), IngestionError);
  CHECK_THROWS_AS(parse_csv("", 0, false), IngestionError);
}

TEST_CASE("train/test split keeps both sides nonempty") {
  const auto [train, test] = train_test_split(labelled(10, 2), 0.2);
  CHECK(train.size() == 8);
  CHECK(test.size() == 2);
  CHECK(test.inputs == std::vector<double>{8.0, 9.0});
  CHECK_THROWS_AS(train_test_split(labelled(10, 2), 1.0), ConfigError);
}
