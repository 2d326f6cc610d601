#include "feddiff/experiment/compare.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "feddiff/experiment/config.hpp"
#include "feddiff/experiment/runner.hpp"

namespace feddiff::experiment {

std::vector<CompareRow> compare_runs(const std::filesystem::path& root,
                                     std::span<const std::string> run_ids) {
  if (run_ids.empty()) throw CompareError("compare: no runs given");
  std::vector<CompareRow> rows;
  for (const auto& id : run_ids) {
    const auto dir = root / id;
    const auto report_path = dir / kEvalJsonFile;
    std::ifstream is(report_path);
    if (!is) throw CompareError("compare: " + id + " has no " + kEvalJsonFile + " (not completed?)");
    std::stringstream ss;
    ss << is.rdbuf();
    const ExperimentConfig cfg = load_config(dir / kConfigFile);
    CompareRow row{id, mode_name(cfg.mode), cfg.dataset.name, eval::eval_report_from_json(ss.str())};
    if (!rows.empty()) {
      if (row.report.backend_id != rows.front().report.backend_id) {
        throw CompareError("compare: refusing to compare across feature backends (" +
                           rows.front().run_id + ": " + rows.front().report.backend_id + ", " +
                           id + ": " + row.report.backend_id + ")");
      }
      if (row.dataset != rows.front().dataset) {
        throw CompareError("compare: runs use different datasets (" + rows.front().dataset +
                           " vs " + row.dataset + ")");
      }
    }
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const CompareRow& a, const CompareRow& b) {
    return a.report.fid_train < b.report.fid_train;
  });
  return rows;
}

std::string render_compare_table(std::span<const CompareRow> rows) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-24s %-12s %16s %10s %10s %8s\n", "run_id", "mode",
                "IS", "FID(train)", "FID(test)", "samples");
  os << buf;
  for (const auto& r : rows) {
    char is[64];
    std::snprintf(is, sizeof is, "%.3f +- %.3f", r.report.is_mean, r.report.is_std);
    std::snprintf(buf, sizeof buf, "%-24s %-12s %16s %10.3f %10.3f %8zu\n", r.run_id.c_str(),
                  r.mode.c_str(), is, r.report.fid_train, r.report.fid_test, r.report.n_samples);
    os << buf;
  }
  if (!rows.empty()) os << "backend: " << rows.front().report.backend_id << '\n';
  return os.str();
}

}  // namespace feddiff::experiment
