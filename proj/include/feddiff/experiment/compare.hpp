#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "feddiff/eval/evaluate.hpp"

namespace feddiff::experiment {

/// Raised when runs cannot be put in one table (different backend or dataset).
class CompareError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CompareRow {
  std::string run_id;
  std::string mode;
  std::string dataset;
  eval::EvalReport report;
};

/// Final reports of completed runs under `root`, sorted by fid_train ascending.
std::vector<CompareRow> compare_runs(const std::filesystem::path& root,
                                     std::span<const std::string> run_ids);

std::string render_compare_table(std::span<const CompareRow> rows);

}  // namespace feddiff::experiment
