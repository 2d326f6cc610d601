#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <array>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "doctest.h"
#include "feddiff/data/image_io.hpp"
#include "feddiff/experiment/artifacts.hpp"
#include "feddiff/experiment/compare.hpp"
#include "feddiff/experiment/config.hpp"
#include "feddiff/experiment/runner.hpp"
#include "helpers.hpp"

using namespace feddiff;
using namespace feddiff::experiment;
namespace fs = std::filesystem;

namespace {

std::string tiny_yaml(const std::string& run_id, const std::string& mode = "federated",
                      int rounds = 3, int epochs = 1, int clients = 4) {
  std::ostringstream os;
  os << "run_id: " << run_id << "\n"
     << "mode: " << mode << "\n"
     << "dataset:\n  name: synthetic\n  image_size: 8\n  train_samples: 64\n"
     << "  test_samples: 32\n  num_classes: 2\n"
     << "fl:\n  rounds: " << rounds << "\n  local_epochs: " << epochs
     << "\n  num_clients: " << clients << "\n  batch_size: 16\n  learning_rate: 0.002\n"
     << "  timesteps: 10\n  beta_end: 0.2\n  seed: 5\n  eval_every: 2\n"
     << "denoiser:\n  base_channels: 4\n  channel_multipliers: [1]\n  time_embed_dim: 8\n"
     << "evaluation:\n  sample_count: 16\n  color_clusters: 2\n"
     << "artifacts:\n  grid_samples: 16\n  grid_per_row: 4\n";
  return os.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

RunOptions quiet(const fs::path& root) {
  RunOptions o;
  o.output_root = root;
  o.verbose = false;
  return o;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FEDDIFF_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("experiment_cli") {

TEST_CASE("config parsing rejects unknown keys with the field path") {
  CHECK_THROWS_WITH_AS(parse_config(tiny_yaml("x") + "fl2: 1\n"), doctest::Contains("fl2: unknown key"),
                       ConfigError);
  std::string typo = tiny_yaml("x");
  typo.replace(typo.find("local_epochs"), 12, "local_epoch");
  CHECK_THROWS_WITH_AS(parse_config(typo), doctest::Contains("fl.local_epoch"), ConfigError);
  std::string bad = tiny_yaml("x");
  bad.replace(bad.find("rounds: 3"), 9, "rounds: many");
  CHECK_THROWS_WITH_AS(parse_config(bad), doctest::Contains("fl.rounds"), ConfigError);
  CHECK_THROWS_AS(parse_config(tiny_yaml("x", "sideways")), ConfigError);
  CHECK_THROWS_AS(parse_config(tiny_yaml("")), ConfigError);
  // Centralized runs need one client.
  CHECK_THROWS_AS(parse_config(tiny_yaml("x", "centralized", 1, 2, 4)), ConfigError);
  std::string m_gt_n = tiny_yaml("x");
  m_gt_n.replace(m_gt_n.find("  batch_size"), 0, "  participants_per_round: 9\n");
  CHECK_THROWS_WITH_AS(parse_config(m_gt_n), doctest::Contains("participants_per_round"), ConfigError);
}

TEST_CASE("config defaults and round trip") {
  const ExperimentConfig c = parse_config(tiny_yaml("rt"));
  CHECK(c.fl.participants_per_round == 4);
  CHECK(c.partition.num_clients == 4);
  CHECK(c.partition.seed == 5);
  CHECK(c.denoiser.in_channels == 1);
  CHECK(c.denoiser.image_size == 8);
  const std::string once = emit_config(c);
  const ExperimentConfig back = parse_config(once);
  CHECK(emit_config(back) == once);
  CHECK(back.fl.learning_rate == c.fl.learning_rate);
  CHECK(back.denoiser == c.denoiser);
}

TEST_CASE("sample grid") {
  ImageBatch one({1, 3, 5, 7});
  for (double& v : one.values()) v = -1.0;
  one.at(0, 0, 0, 0) = 1.0;
  const auto img1 = render_sample_grid(one, 8);
  CHECK(img1.width == 7);
  CHECK(img1.height == 5);
  CHECK(img1.channels == 3);
  CHECK(img1.pixels[0] == 255);
  CHECK(img1.pixels[1] == 0);

  ImageBatch sixteen = testutil::random_batch({16, 1, 4, 6}, 3, 0.5);
  const auto grid = render_sample_grid(sixteen, 4);
  CHECK(grid.width == 24);
  CHECK(grid.height == 16);
  // Sample 5 sits at tile row 1, column 1.
  CHECK(grid.pixels[static_cast<std::size_t>((4 + 2) * 24 + 6 + 3)] ==
        data::to_byte(sixteen.at(5, 0, 2, 3)));
  const auto dir = testutil::scratch_dir("grid");
  emit_sample_grid(sixteen, 4, dir / "g.png");
  const auto back = data::read_image(dir / "g.png");
  CHECK(back.pixels == grid.pixels);
  CHECK_THROWS(render_sample_grid(ImageBatch({0, 1, 4, 4}), 4));

  ImageBatch labeled = testutil::random_batch({4, 1, 2, 2}, 1);
  const std::vector<int> labels{1, 0, 1, 0};
  const ImageBatch sorted = sort_by_label(labeled, labels);
  CHECK(sorted.at(0, 0, 0, 0) == labeled.at(1, 0, 0, 0));
  CHECK(sorted.at(1, 0, 0, 0) == labeled.at(3, 0, 0, 0));
  CHECK(sorted.at(2, 0, 0, 0) == labeled.at(0, 0, 0, 0));
}

TEST_CASE("color clusters") {
  ImageBatch flat({3, 3, 2, 2});
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t y = 0; y < 2; ++y)
      for (std::size_t x = 0; x < 2; ++x) {
        flat.at(n, 0, y, x) = 0.5;
        flat.at(n, 1, y, x) = -0.25;
        flat.at(n, 2, y, x) = 0.0;
      }
  const auto one = color_cluster_summary(flat, 1, 0);
  REQUIRE(one.clusters.size() == 1);
  CHECK(one.clusters[0].mass == 1.0);
  CHECK(one.clusters[0].centroid == std::vector<double>{0.5, -0.25, 0.0});

  const auto degraded = color_cluster_summary(flat, 4, 0);
  CHECK(degraded.requested_k == 4);
  CHECK(degraded.effective_k == 1);

  // Three red pixels for every blue one.
  ImageBatch two({1, 3, 2, 8});
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t x = 0; x < 8; ++x) {
      const bool red = x % 4 != 0;
      two.at(0, 0, y, x) = red ? 1.0 : -1.0;
      two.at(0, 1, y, x) = -1.0;
      two.at(0, 2, y, x) = red ? -1.0 : 1.0;
    }
  const auto s2 = color_cluster_summary(two, 2, 9);
  REQUIRE(s2.clusters.size() == 2);
  CHECK(s2.clusters[0].mass == doctest::Approx(0.75));
  CHECK(s2.clusters[1].mass == doctest::Approx(0.25));
  CHECK(s2.clusters[0].centroid == std::vector<double>{1.0, -1.0, -1.0});
  CHECK(s2.clusters[1].centroid == std::vector<double>{-1.0, -1.0, 1.0});

  // Random fixture versus random assignments.
  const ImageBatch rnd = testutil::random_batch({8, 3, 4, 4}, 12, 0.4);
  const auto s = color_cluster_summary(rnd, 5, 3);
  double mass = 0;
  for (const auto& c : s.clusters) mass += c.mass;
  CHECK(mass == doctest::Approx(1.0));
  for (std::size_t i = 1; i < s.clusters.size(); ++i) CHECK(s.clusters[i - 1].mass >= s.clusters[i].mass);
  const auto again = color_cluster_summary(rnd, 5, 3);
  CHECK(again.within_ss == s.within_ss);
  Rng rng(44);
  const std::size_t pixels = 8 * 16;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::array<double, 3>> sum(5, {0, 0, 0});
    std::vector<int> cnt(5, 0);
    std::vector<int> assign(pixels);
    for (std::size_t p = 0; p < pixels; ++p) {
      assign[p] = rng.uniform_int(0, 4);
      ++cnt[assign[p]];
      for (std::size_t c = 0; c < 3; ++c) sum[assign[p]][c] += rnd.at(p / 16, c, (p % 16) / 4, p % 4);
    }
    double ss = 0;
    for (std::size_t p = 0; p < pixels; ++p)
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = rnd.at(p / 16, c, (p % 16) / 4, p % 4) - sum[assign[p]][c] / cnt[assign[p]];
        ss += d * d;
      }
    CHECK(s.within_ss <= ss);
  }
  CHECK_THROWS(color_cluster_summary(rnd, 0, 1));
}

TEST_CASE("output root precedence") {
  ExperimentConfig c = parse_config(tiny_yaml("p"));
  ::setenv("FEDDIFF_OUTPUT_ROOT", "/tmp/from_env", 1);
  CHECK(resolve_output_root("/tmp/explicit", c) == fs::path("/tmp/explicit"));
  CHECK(resolve_output_root("", c) == fs::path("/tmp/from_env"));
  c.output_root = "/tmp/from_config";
  CHECK(resolve_output_root("", c) == fs::path("/tmp/from_config"));
  ::unsetenv("FEDDIFF_OUTPUT_ROOT");
  CHECK(resolve_output_root("") == fs::path("runs"));
}

TEST_CASE("centralized smoke run writes the artifact tree") {
  const auto root = testutil::scratch_dir("exp_central");
  const auto cfg = parse_config(tiny_yaml("cen", "centralized", 1, 2, 1));
  const RunOutcome out = run_experiment(cfg, quiet(root));
  CHECK(out.completed);
  CHECK(out.last_round == 1);
  const fs::path dir = root / "cen";
  for (const char* f : {kManifestFile, kConfigFile, kMetricsFile, kPartitionFile, kEvalCsvFile,
                        kEvalJsonFile, kSamplesFile, kClustersFile}) {
    CAPTURE(f);
    CHECK(fs::exists(dir / f));
  }
  CHECK(list_checkpoints(dir).size() == 1);
  const auto manifest = nlohmann::json::parse(slurp(dir / kManifestFile));
  CHECK(manifest["status"] == "completed");
  std::set<std::string> indexed;
  for (const auto& a : manifest["artifacts"]) indexed.insert(a["path"].get<std::string>());
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    CAPTURE(e.path());
    CHECK(indexed.count(fs::relative(e.path(), dir).generic_string()) == 1);
  }
  const auto report = nlohmann::json::parse(slurp(dir / kEvalJsonFile));
  CHECK(report.contains("baselines"));
  CHECK_THROWS(run_experiment(cfg, quiet(root)));
}

TEST_CASE("federated toy run is reproducible and resumable") {
  const auto a = testutil::scratch_dir("exp_fed_a");
  const auto b = testutil::scratch_dir("exp_fed_b");
  const auto cfg = parse_config(tiny_yaml("fed"));
  run_experiment(cfg, quiet(a));
  run_experiment(cfg, quiet(b));
  for (const char* f : {kMetricsFile, kEvalCsvFile, kPartitionFile, kClustersFile, kSamplesFile})
    CHECK(slurp(a / "fed" / f) == slurp(b / "fed" / f));
  CHECK(slurp(list_checkpoints(a / "fed").back()) == slurp(list_checkpoints(b / "fed").back()));

  // Interrupt after round 1, resume.
  const auto c = testutil::scratch_dir("exp_fed_c");
  RunOptions stop = quiet(c);
  stop.stop_after_round = 1;
  const RunOutcome half = run_experiment(cfg, stop);
  CHECK_FALSE(half.completed);
  CHECK(nlohmann::json::parse(slurp(c / "fed" / kManifestFile))["status"] == "interrupted");
  const RunOutcome rest = resume_experiment("fed", quiet(c));
  CHECK(rest.completed);
  CHECK(rest.last_round == 3);
  CHECK(slurp(c / "fed" / kMetricsFile) == slurp(a / "fed" / kMetricsFile));
  CHECK(slurp(c / "fed" / kEvalCsvFile) == slurp(a / "fed" / kEvalCsvFile));
  CHECK(slurp(list_checkpoints(c / "fed").back()) == slurp(list_checkpoints(a / "fed").back()));
  CHECK_THROWS(resume_experiment("missing", quiet(c)));
}

TEST_CASE("compare runs") {
  const auto root = testutil::scratch_dir("exp_cmp");
  auto c1 = parse_config(tiny_yaml("r1"));
  auto c2 = parse_config(tiny_yaml("r2"));
  c2.fl.learning_rate = 1e-9;  // effectively untrained
  c1.fl.rounds = c2.fl.rounds = 2;
  run_experiment(c1, quiet(root));
  run_experiment(c2, quiet(root));

  const std::vector<std::string> one{"r2"};
  CHECK(compare_runs(root, one).size() == 1);
  const std::vector<std::string> both{"r2", "r1"};
  const auto rows = compare_runs(root, both);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].report.fid_train <= rows[1].report.fid_train);
  CHECK(render_compare_table(rows).find("r1") != std::string::npos);

  auto c3 = parse_config(tiny_yaml("r3"));
  c3.fl.rounds = 1;
  c3.evaluation.backend_seed = 99;
  run_experiment(c3, quiet(root));
  const std::vector<std::string> cross{"r1", "r3"};
  CHECK_THROWS_AS(compare_runs(root, cross), CompareError);
}

TEST_CASE("cli exit codes") {
  const auto root = testutil::scratch_dir("exp_cli");
  {
    std::ofstream(root / "good.yaml") << tiny_yaml("clirun", "federated", 1, 1, 2);
    std::ofstream(root / "bad.yaml") << tiny_yaml("x") << "nonsense: 1\n";
  }
  const std::string r = "--output-root " + root.string() + " ";
  CHECK(run_cli(r + "run " + (root / "bad.yaml").string()) == 1);
  CHECK(run_cli(r + "run " + (root / "missing.yaml").string()) == 1);
  CHECK(run_cli(r + "run -q " + (root / "good.yaml").string()) == 0);
  CHECK(run_cli(r + "run -q " + (root / "good.yaml").string()) == 1);  // run id already taken
  CHECK(run_cli(r + "compare clirun") == 0);
  CHECK(run_cli(r + "resume nope") == 1);
  for (const auto& ck : list_checkpoints(root / "clirun")) std::ofstream(ck) << "garbage";
  CHECK(run_cli(r + "resume clirun") == 2);
  CHECK(run_cli(r + "partition-preview " + (root / "good.yaml").string() + " -o " +
                (root / "heat.csv").string()) == 0);
  CHECK(fs::exists(root / "heat.csv"));
  CHECK(run_cli("--no-such-flag") == 1);
}

}  // TEST_SUITE
