#include "feddiff/nn/parameters.hpp"

#include <functional>
#include <numeric>
#include <stdexcept>

namespace feddiff::nn {

std::size_t ManifestEntry::size() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t manifest_total(const Manifest& manifest) {
  std::size_t total = 0;
  for (const auto& e : manifest) total += e.size();
  return total;
}

void ParameterVector::validate() const {
  if (values.size() != manifest_total(manifest)) {
    throw std::invalid_argument("ParameterVector: " + std::to_string(values.size()) +
                                " values but manifest describes " +
                                std::to_string(manifest_total(manifest)));
  }
}

ParameterVector flatten(const StructuredParams& params) {
  ParameterVector out;
  for (const NamedTensor& t : params) {
    ManifestEntry entry{t.name, t.shape};
    if (entry.size() != t.values.size()) {
      throw std::invalid_argument("flatten: tensor '" + t.name + "' size disagrees with shape");
    }
    out.values.insert(out.values.end(), t.values.begin(), t.values.end());
    out.manifest.push_back(std::move(entry));
  }
  return out;
}

StructuredParams unflatten(const std::vector<float>& values, const Manifest& manifest) {
  if (values.size() != manifest_total(manifest)) {
    throw std::invalid_argument("unflatten: value count does not match manifest");
  }
  StructuredParams out;
  out.reserve(manifest.size());
  std::size_t offset = 0;
  for (const ManifestEntry& e : manifest) {
    const std::size_t n = e.size();
    out.push_back({e.name, e.shape,
                   std::vector<float>(values.begin() + static_cast<std::ptrdiff_t>(offset),
                                      values.begin() + static_cast<std::ptrdiff_t>(offset + n))});
    offset += n;
  }
  return out;
}

}  // namespace feddiff::nn
