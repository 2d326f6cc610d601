#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"
#include "feddiff/data/image_io.hpp"
#include "feddiff/data/loaders.hpp"
#include "feddiff/data/partition.hpp"
#include "feddiff/data/synthetic.hpp"
#include "helpers.hpp"

using namespace feddiff;
using namespace feddiff::data;

namespace {

std::vector<int> balanced_labels(int k, int per_class) {
  std::vector<int> out;
  for (int i = 0; i < k * per_class; ++i) out.push_back(i % k);
  return out;
}

void check_set_partition(const PartitionResult& r, std::size_t n, int k, std::span<const int> labels) {
  std::vector<int> seen(n, 0);
  for (const auto& s : r.shards) {
    CHECK(std::is_sorted(s.indices.begin(), s.indices.end()));
    std::size_t hist_total = 0;
    for (auto c : s.label_histogram) hist_total += c;
    CHECK(hist_total == s.size());
    CHECK(s.label_histogram.size() == static_cast<std::size_t>(k));
    std::vector<std::size_t> recount(static_cast<std::size_t>(k), 0);
    for (std::size_t i : s.indices) {
      ++seen.at(i);
      ++recount[labels[i]];
    }
    CHECK(recount == s.label_histogram);
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
}

// Independent re-implementation of the documented draw order.
std::vector<std::vector<std::size_t>> replay_partition(std::span<const int> labels, int k, int n,
                                                       double beta, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> hist(n, std::vector<std::size_t>(k, 0));
  for (int c = 0; c < k; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) idx.push_back(i);
    }
    std::shuffle(idx.begin(), idx.end(), rng.engine());
    std::vector<double> g(n);
    double sum = 0;
    for (auto& v : g) sum += (v = rng.gamma(beta));
    // Largest remainder: floor, then +1 to the biggest fractional parts, lower id first on ties.
    std::vector<std::pair<double, int>> rem;
    std::size_t given = 0;
    std::vector<std::size_t> cnt(n);
    for (int i = 0; i < n; ++i) {
      const double exact = g[i] / sum * idx.size();
      cnt[i] = static_cast<std::size_t>(std::floor(exact));
      given += cnt[i];
      rem.push_back({-(exact - std::floor(exact)), i});
    }
    std::sort(rem.begin(), rem.end());
    for (std::size_t j = 0; given < idx.size(); ++j, ++given) ++cnt[rem[j].second];
    for (int i = 0; i < n; ++i) hist[i][c] = cnt[i];
  }
  return hist;
}

}  // namespace

TEST_SUITE("data_partition") {

TEST_CASE("largest remainder rounding") {
  const std::vector<double> p{0.5, 0.25, 0.25};
  CHECK(largest_remainder(p, 4) == std::vector<std::size_t>{2, 1, 1});
  // 10 * (1/3, 1/3, 1/3): one extra unit, goes to the lowest index.
  const std::vector<double> third{1.0 / 3, 1.0 / 3, 1.0 / 3};
  CHECK(largest_remainder(third, 10) == std::vector<std::size_t>{4, 3, 3});
  CHECK(largest_remainder(third, 0) == std::vector<std::size_t>{0, 0, 0});
  const std::vector<double> skew{0.96, 0.02, 0.02};
  const auto c = largest_remainder(skew, 7);
  CHECK(std::accumulate(c.begin(), c.end(), std::size_t{0}) == 7);
}

TEST_CASE("single client gets everything") {
  const auto labels = balanced_labels(3, 20);
  PartitionSpec spec;
  spec.num_clients = 1;
  const auto r = dirichlet_partition(labels, 3, spec);
  REQUIRE(r.shards.size() == 1);
  CHECK(r.shards[0].client_id == 1);
  CHECK(r.shards[0].size() == labels.size());
  const auto heat = partition_heatmap(r.shards, 3);
  CHECK(heat == std::vector<std::vector<std::size_t>>{{20, 20, 20}});
}

TEST_CASE("set partition holds across N, beta and seed") {
  const auto labels = balanced_labels(10, 500);
  for (int n : {1, 2, 10, 30, 50}) {
    for (double beta : {0.1, 0.5, 5.0}) {
      for (std::uint64_t seed : {1u, 2u, 3u}) {
        CAPTURE(n);
        CAPTURE(beta);
        PartitionSpec spec;
        spec.num_clients = n;
        spec.concentration = beta;
        spec.seed = seed;
        const auto r = dirichlet_partition(labels, 10, spec);
        CHECK(r.shards.size() == static_cast<std::size_t>(n));
        check_set_partition(r, labels.size(), 10, labels);
        for (const auto& s : r.shards) CHECK(s.size() >= 1);
        const auto heat = partition_heatmap(r.shards, 10);
        std::size_t total = 0;
        for (std::size_t i = 0; i < heat.size(); ++i) {
          const std::size_t row = std::accumulate(heat[i].begin(), heat[i].end(), std::size_t{0});
          CHECK(row == r.shards[i].size());
          total += row;
        }
        CHECK(total == labels.size());
      }
    }
  }
}

TEST_CASE("partition is deterministic and matches a scripted replay") {
  const auto labels = balanced_labels(10, 100);
  PartitionSpec spec;
  spec.num_clients = 10;
  spec.concentration = 0.5;
  spec.seed = 2024;
  spec.min_samples_per_client = 0;  // no redraws, so the replay is a single pass
  const auto a = dirichlet_partition(labels, 10, spec);
  const auto b = dirichlet_partition(labels, 10, spec);
  for (std::size_t i = 0; i < a.shards.size(); ++i) CHECK(a.shards[i].indices == b.shards[i].indices);
  CHECK(partition_heatmap(a.shards, 10) == replay_partition(labels, 10, 10, 0.5, 2024));
}

TEST_CASE("huge concentration gives near-uniform splits") {
  const auto labels = balanced_labels(4, 1000);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    PartitionSpec spec;
    spec.num_clients = 5;
    spec.concentration = 1e6;
    spec.seed = seed;
    const auto r = dirichlet_partition(labels, 4, spec);
    for (const auto& s : r.shards) {
      for (auto c : s.label_histogram) CHECK(std::abs(static_cast<double>(c) - 200.0) <= 20.0);
    }
  }
}

TEST_CASE("min-size guard redraws and fails when infeasible") {
  const auto labels = balanced_labels(2, 10);
  PartitionSpec spec;
  spec.num_clients = 4;
  spec.concentration = 0.5;
  spec.min_samples_per_client = 2;
  spec.seed = 5;
  spec.max_attempts = 10000;
  const auto r = dirichlet_partition(labels, 2, spec);
  for (const auto& s : r.shards) CHECK(s.size() >= 2);
  CHECK(r.attempts >= 1);

  spec.num_clients = 8;
  spec.min_samples_per_client = 3;  // 8 * 3 > 20
  CHECK_THROWS_AS(dirichlet_partition(labels, 2, spec), std::invalid_argument);

  spec.min_samples_per_client = 2;
  spec.num_clients = 10;  // every client needs exactly 2: practically never drawn
  spec.max_attempts = 3;
  CHECK_THROWS_AS(dirichlet_partition(labels, 2, spec), std::runtime_error);

  PartitionSpec bad;
  bad.concentration = 0.0;
  CHECK_THROWS(dirichlet_partition(labels, 2, bad));
  CHECK_THROWS(dirichlet_partition(std::vector<int>{0, 3}, 2, PartitionSpec{}));
}

TEST_CASE("entropy ordering across concentrations over 20 seeds") {
  const auto labels = balanced_labels(10, 100);
  int ordered = 0;
  double mean[3] = {0, 0, 0};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    double h[3];
    const double betas[3] = {0.1, 0.5, 5.0};
    for (int j = 0; j < 3; ++j) {
      PartitionSpec spec;
      spec.num_clients = 10;
      spec.concentration = betas[j];
      spec.seed = seed;
      const auto r = dirichlet_partition(labels, 10, spec);
      h[j] = mean_normalized_label_entropy(r.shards, 10);
      mean[j] += h[j] / 20;
    }
    if (h[0] < h[1] && h[1] < h[2]) ++ordered;
  }
  CHECK(ordered >= 18);
  CHECK(mean[0] < mean[1]);
  CHECK(mean[1] < mean[2]);
}

TEST_CASE("horizontal flip") {
  const ImageBatch x = testutil::random_batch({6, 2, 3, 4}, 1);
  Rng r0(1);
  const ImageBatch same = augment_hflip(x, r0, 0.0);
  CHECK(std::equal(same.values().begin(), same.values().end(), x.values().begin()));

  Rng r1(1);
  const ImageBatch flipped = augment_hflip(x, r1, 1.0);
  for (std::size_t n = 0; n < 6; ++n)
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t w = 0; w < 4; ++w) CHECK(flipped.at(n, c, y, w) == x.at(n, c, y, 3 - w));
  Rng r2(1);
  const ImageBatch twice = augment_hflip(flipped, r2, 1.0);
  CHECK(std::equal(twice.values().begin(), twice.values().end(), x.values().begin()));

  Rng a(9), b(9);
  const ImageBatch fa = augment_hflip(x, a, 0.5);
  const ImageBatch fb = augment_hflip(x, b, 0.5);
  CHECK(std::equal(fa.values().begin(), fa.values().end(), fb.values().begin()));
  // One draw per image regardless of outcome.
  CHECK(a.uniform() == b.uniform());
  Rng c(3);
  CHECK_THROWS(augment_hflip(x, c, 1.5));
}

TEST_CASE("image folder loader") {
  const auto root = testutil::scratch_dir("folder");
  Rng rng(4);
  std::vector<RawImage> written;
  for (const char* cls : {"b_second", "a_first"}) {
    std::filesystem::create_directories(root / cls);
    for (int i = 0; i < 3; ++i) {
      RawImage img{5, 5, 1, std::vector<std::uint8_t>(25)};
      for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
      write_png(root / cls / ("img" + std::to_string(i) + ".png"), img);
      if (std::string(cls) == "a_first" && i == 0) written.push_back(img);
    }
  }
  const LabeledDataset d = load_image_folder(root, 5, 1);
  CHECK(d.size() == 6);
  CHECK(d.num_classes() == 2);
  // Sorted class folders: a_first -> 0.
  CHECK(d.class_histogram() == std::vector<std::size_t>{3, 3});
  CHECK(d.labels()[0] == 0);
  const auto px = d.image(0);
  for (std::size_t i = 0; i < 25; ++i) {
    CHECK(px[i] >= -1.0f);
    CHECK(px[i] <= 1.0f);
    CHECK(std::abs((px[i] + 1.0) * 127.5 - written[0].pixels[i]) <= 1.0);
  }

  const auto black = testutil::scratch_dir("folder_black");
  std::filesystem::create_directories(black / "only");
  write_png(black / "only" / "x.png", RawImage{4, 4, 3, std::vector<std::uint8_t>(48, 0)});
  const LabeledDataset db = load_image_folder(black, 4, 3);
  for (float v : db.image(0)) CHECK(v == -1.0f);

  std::filesystem::create_directories(black / "empty");
  CHECK_THROWS(load_image_folder(black, 4, 3));
  CHECK_THROWS(load_image_folder(root / "does_not_exist", 4, 1));
  const auto broken = testutil::scratch_dir("folder_broken");
  std::filesystem::create_directories(broken / "c");
  { std::ofstream(broken / "c" / "bad.png") << "not a png"; }
  CHECK_THROWS_WITH(load_image_folder(broken, 4, 1), doctest::Contains("bad.png"));
}

TEST_CASE("pixel byte mapping round trip") {
  CHECK(to_byte(-1.0) == 0);
  CHECK(to_byte(1.0) == 255);
  CHECK(to_byte(5.0) == 255);
  CHECK(to_byte(-3.0) == 0);
  for (int b = 0; b < 256; ++b) CHECK(to_byte(from_byte(static_cast<std::uint8_t>(b))) == b);
}

TEST_CASE("synthetic shapes dataset") {
  SyntheticSpec s;
  s.num_samples = 100;
  s.num_classes = 3;
  s.channels = 3;
  const auto train = make_synthetic_shapes(s, Split::kTrain);
  const auto again = make_synthetic_shapes(s, Split::kTrain);
  const auto test = make_synthetic_shapes(s, Split::kTest);
  CHECK(train.size() == 100);
  CHECK(train.num_classes() == 3);
  CHECK(train.all().in_data_range());
  CHECK(std::equal(train.image(5).begin(), train.image(5).end(), again.image(5).begin()));
  CHECK(!std::equal(train.image(5).begin(), train.image(5).end(), test.image(5).begin()));
  CHECK(train.class_histogram() == std::vector<std::size_t>{34, 33, 33});
}

}  // TEST_SUITE
