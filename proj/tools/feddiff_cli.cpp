// feddiff: run, resume and compare federated diffusion experiments.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "feddiff/data/partition.hpp"
#include "feddiff/experiment/compare.hpp"
#include "feddiff/experiment/config.hpp"
#include "feddiff/experiment/runner.hpp"
#include "feddiff/simd/kernels.hpp"

namespace fs = std::filesystem;
using namespace feddiff;

namespace {

constexpr int kOk = 0;
constexpr int kConfigFailure = 1;
constexpr int kRuntimeFailure = 2;

void print_outcome(const experiment::RunOutcome& out) {
  std::cout << (out.completed ? "completed" : "interrupted") << " at round " << out.last_round
            << ": " << out.run_dir.string() << '\n';
}

int partition_preview(const std::string& config_path, const std::string& out_path) {
  const experiment::ExperimentConfig cfg = experiment::load_config(config_path);
  const experiment::Datasets data = experiment::load_datasets(cfg.dataset);
  int attempts = 0;
  const auto shards = experiment::make_shards(cfg, data.train, &attempts);
  const int k = data.train.num_classes();
  if (out_path.empty()) {
    std::cout << "client_id,class,count\n";
    for (const auto& s : shards) {
      for (int c = 0; c < k; ++c) std::cout << s.client_id << ',' << c << ',' << s.label_histogram[c] << '\n';
    }
  } else {
    data::write_partition_csv(out_path, shards, k);
  }
  std::cerr << "clients " << shards.size() << ", attempts " << attempts
            << ", mean normalized label entropy "
            << data::mean_normalized_label_entropy(shards, k) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated DDPM training and evaluation"};
  app.require_subcommand(1);
  std::string output_root;
  std::string isa;
  app.add_option("--output-root", output_root,
                 "Directory holding run directories (default: $FEDDIFF_OUTPUT_ROOT or ./runs)");
  app.add_option("--isa", isa, "Force a kernel set: scalar, avx2 or neon");

  std::string config_path;
  int stop_after = 0;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Start a new run from a config file");
  run->add_option("config", config_path, "YAML experiment config")->required();
  run->add_option("--stop-after-round", stop_after, "Stop (resumably) after this round");
  run->add_flag("-q,--quiet", quiet, "No per-round progress");

  std::string run_id;
  auto* resume = app.add_subcommand("resume", "Continue a run from its latest checkpoint");
  resume->add_option("run_id", run_id, "Run directory name")->required();
  resume->add_option("--stop-after-round", stop_after, "Stop (resumably) after this round");
  resume->add_flag("-q,--quiet", quiet, "No per-round progress");

  std::vector<std::string> run_ids;
  auto* compare = app.add_subcommand("compare", "Tabulate IS/FID of completed runs");
  compare->add_option("run_ids", run_ids, "Run directory names")->required();

  std::string preview_config;
  std::string preview_out;
  auto* preview = app.add_subcommand("partition-preview", "Write the client x class count table");
  preview->add_option("config", preview_config, "YAML experiment config")->required();
  preview->add_option("-o,--out", preview_out, "CSV path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigFailure;
  }

  try {
    if (!isa.empty()) {
      if (isa == "scalar") simd::set_active_isa(simd::Isa::kScalar);
      else if (isa == "avx2") simd::set_active_isa(simd::Isa::kAvx2);
      else if (isa == "neon") simd::set_active_isa(simd::Isa::kNeon);
      else throw experiment::ConfigError("--isa: expected scalar, avx2 or neon");
    }
    experiment::RunOptions opts;
    opts.output_root = output_root;
    opts.stop_after_round = stop_after;
    opts.verbose = !quiet;
    if (*run) {
      print_outcome(experiment::run_experiment(experiment::load_config(config_path), opts));
    } else if (*resume) {
      print_outcome(experiment::resume_experiment(run_id, opts));
    } else if (*compare) {
      const auto rows =
          experiment::compare_runs(experiment::resolve_output_root(output_root), run_ids);
      std::cout << experiment::render_compare_table(rows);
    } else if (*preview) {
      return partition_preview(preview_config, preview_out);
    }
    return kOk;
  } catch (const experiment::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigFailure;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
}
