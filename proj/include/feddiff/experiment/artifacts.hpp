#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "feddiff/data/image_io.hpp"
#include "feddiff/image_batch.hpp"

namespace feddiff::experiment {

/// Tiles samples row-major, per_row tiles across, no gaps; unused tiles stay
/// black. Values map [-1, 1] -> [0, 255] with round-half-up.
data::RawImage render_sample_grid(const ImageBatch& samples, std::size_t per_row);

void emit_sample_grid(const ImageBatch& samples, std::size_t per_row,
                      const std::filesystem::path& path);

/// Orders samples by label (stable) for class-per-row grids.
ImageBatch sort_by_label(const ImageBatch& samples, std::span<const int> labels);

struct ColorCluster {
  std::vector<double> centroid;  // one entry per channel, in [-1, 1]
  double mass = 0.0;             // fraction of pixels
};

struct ColorClusterSummary {
  int requested_k = 0;
  int effective_k = 0;  // lower than requested when there are fewer distinct colors
  std::vector<ColorCluster> clusters;  // descending mass
  double within_ss = 0.0;
};

/// k-means over per-pixel colors: k-means++ seeding from `seed`, then Lloyd
/// iterations until assignments stop changing (at most 100).
ColorClusterSummary color_cluster_summary(const ImageBatch& samples, int k, std::uint64_t seed);

struct NamedClusters {
  std::string group;  // "global", "client_3", ...
  ColorClusterSummary summary;
};

/// Rows "group,cluster,mass,requested_k,effective_k,hex"; gray centroids are
/// written as equal RGB bytes.
void write_color_clusters_csv(const std::filesystem::path& path,
                              std::span<const NamedClusters> groups);

}  // namespace feddiff::experiment
