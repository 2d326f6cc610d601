#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace feddiff::nn {

struct ManifestEntry {
  std::string name;
  std::vector<std::size_t> shape;

  std::size_t size() const;
  bool operator==(const ManifestEntry&) const = default;
};

using Manifest = std::vector<ManifestEntry>;

std::size_t manifest_total(const Manifest& manifest);

/// Flat view of all denoiser weights; the unit that clients send and the
/// server averages. Manifest order is canonical for a given DenoiserConfig.
struct ParameterVector {
  std::vector<float> values;
  Manifest manifest;

  std::size_t total_count() const { return values.size(); }
  bool same_layout(const ParameterVector& other) const { return manifest == other.manifest; }
  /// Throws if values.size() disagrees with the manifest.
  void validate() const;
};

struct NamedTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> values;
};

using StructuredParams = std::vector<NamedTensor>;

ParameterVector flatten(const StructuredParams& params);
StructuredParams unflatten(const std::vector<float>& values, const Manifest& manifest);

}  // namespace feddiff::nn
