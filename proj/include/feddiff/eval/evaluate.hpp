#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "feddiff/data/dataset.hpp"
#include "feddiff/eval/backend.hpp"
#include "feddiff/eval/metrics.hpp"
#include "feddiff/image_batch.hpp"

namespace feddiff::eval {

struct EvalReport {
  int round = 0;
  double is_mean = 0.0;
  double is_std = 0.0;
  double fid_train = 0.0;
  double fid_test = 0.0;
  std::size_t n_samples = 0;
  std::string backend_id;
  double clipped_fraction = 0.0;  // generated values outside [-1, 1] before clipping

  bool operator==(const EvalReport&) const = default;
};

/// Produces n images in [-1, 1] (values outside are clipped by the caller).
using SampleGenerator = std::function<ImageBatch(std::size_t n)>;

struct ReferenceStats {
  GaussianStats train;
  GaussianStats test;
};

ReferenceStats reference_stats(const FeatureBackend& backend, const data::LabeledDataset& train,
                               const data::LabeledDataset& test);

/// IS over `samples` and FID against both reference sets. The IS split count
/// is capped at the sample count.
EvalReport evaluate_samples(const ImageBatch& samples, const ReferenceStats& refs,
                            const FeatureBackend& backend, int is_splits = 10);

EvalReport evaluate_model(const SampleGenerator& generator, const data::LabeledDataset& train,
                          const data::LabeledDataset& test, const FeatureBackend& backend,
                          std::size_t sample_count, int is_splits = 10);

/// Clips in place to [-1, 1]; returns the fraction of values that were outside.
double clip_to_data_range(ImageBatch& images);

inline constexpr const char* kEvalCsvHeader =
    "round,is_mean,is_std,fid_train,fid_test,n_samples,backend_id";

std::string eval_csv_row(const EvalReport& r);
void write_eval_csv(const std::filesystem::path& path, std::span<const EvalReport> reports);
std::vector<EvalReport> read_eval_csv(const std::filesystem::path& path);

std::string eval_report_json(const EvalReport& r);
EvalReport eval_report_from_json(const std::string& text);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace feddiff::eval
