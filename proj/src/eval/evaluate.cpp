#include "feddiff/eval/evaluate.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace feddiff::eval {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

ReferenceStats reference_stats(const FeatureBackend& backend, const data::LabeledDataset& train,
                               const data::LabeledDataset& test) {
  return ReferenceStats{gaussian_stats(backend.embed(train.all())),
                        gaussian_stats(backend.embed(test.all()))};
}

double clip_to_data_range(ImageBatch& images) {
  std::size_t clipped = 0;
  for (double& v : images.values()) {
    if (v < -1.0 || v > 1.0) {
      ++clipped;
      v = std::clamp(v, -1.0, 1.0);
    }
  }
  const std::size_t n = images.values().size();
  return n == 0 ? 0.0 : static_cast<double>(clipped) / static_cast<double>(n);
}

EvalReport evaluate_samples(const ImageBatch& samples, const ReferenceStats& refs,
                            const FeatureBackend& backend, int is_splits) {
  const std::size_t n = samples.batch_size();
  if (n < 2) throw std::invalid_argument("evaluate: need at least 2 samples");
  ImageBatch clipped = samples;
  EvalReport r;
  r.clipped_fraction = clip_to_data_range(clipped);
  const ScoreSummary is =
      inception_score(backend.classify(clipped), std::min<int>(is_splits, static_cast<int>(n)));
  r.is_mean = is.mean;
  r.is_std = is.std;
  const GaussianStats gen = gaussian_stats(backend.embed(clipped));
  r.fid_train = fid(gen, refs.train);
  r.fid_test = fid(gen, refs.test);
  r.n_samples = n;
  r.backend_id = backend.id();
  return r;
}

EvalReport evaluate_model(const SampleGenerator& generator, const data::LabeledDataset& train,
                          const data::LabeledDataset& test, const FeatureBackend& backend,
                          std::size_t sample_count, int is_splits) {
  if (sample_count < 2) throw std::invalid_argument("evaluate_model: sample_count must be >= 2");
  const ImageBatch samples = generator(sample_count);
  if (samples.batch_size() != sample_count) {
    throw std::runtime_error("evaluate_model: generator returned the wrong number of samples");
  }
  return evaluate_samples(samples, reference_stats(backend, train, test), backend, is_splits);
}

std::string eval_csv_row(const EvalReport& r) {
  if (r.backend_id.find_first_of(",\n\"") != std::string::npos) {
    throw std::invalid_argument("eval csv: backend id contains a reserved character");
  }
  std::ostringstream os;
  os << r.round << ',' << format_double(r.is_mean) << ',' << format_double(r.is_std) << ','
     << format_double(r.fid_train) << ',' << format_double(r.fid_test) << ',' << r.n_samples
     << ',' << r.backend_id;
  return os.str();
}

void write_eval_csv(const std::filesystem::path& path, std::span<const EvalReport> reports) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << kEvalCsvHeader << '\n';
  for (const auto& r : reports) os << eval_csv_row(r) << '\n';
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

std::vector<EvalReport> read_eval_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != kEvalCsvHeader) {
    throw std::runtime_error(path.string() + ": unexpected eval csv header");
  }
  std::vector<EvalReport> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 7) throw std::runtime_error(path.string() + ": malformed row: " + line);
    EvalReport r;
    r.round = std::stoi(f[0]);
    r.is_mean = std::stod(f[1]);
    r.is_std = std::stod(f[2]);
    r.fid_train = std::stod(f[3]);
    r.fid_test = std::stod(f[4]);
    r.n_samples = std::stoul(f[5]);
    r.backend_id = f[6];
    out.push_back(r);
  }
  return out;
}

std::string eval_report_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["round"] = r.round;
  j["is_mean"] = r.is_mean;
  j["is_std"] = r.is_std;
  j["fid_train"] = r.fid_train;
  j["fid_test"] = r.fid_test;
  j["n_samples"] = r.n_samples;
  j["backend_id"] = r.backend_id;
  j["clipped_fraction"] = r.clipped_fraction;
  return j.dump(2);
}

EvalReport eval_report_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  EvalReport r;
  r.round = j.at("round").get<int>();
  r.is_mean = j.at("is_mean").get<double>();
  r.is_std = j.at("is_std").get<double>();
  r.fid_train = j.at("fid_train").get<double>();
  r.fid_test = j.at("fid_test").get<double>();
  r.n_samples = j.at("n_samples").get<std::size_t>();
  r.backend_id = j.at("backend_id").get<std::string>();
  r.clipped_fraction = j.value("clipped_fraction", 0.0);
  return r;
}

}  // namespace feddiff::eval
