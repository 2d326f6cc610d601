#include "feddiff/experiment/artifacts.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include "feddiff/eval/evaluate.hpp"
#include "feddiff/rng.hpp"

namespace feddiff::experiment {

data::RawImage render_sample_grid(const ImageBatch& samples, std::size_t per_row) {
  const Shape4& s = samples.shape();
  if (s.n == 0) throw std::invalid_argument("sample grid: no samples");
  if (per_row == 0) throw std::invalid_argument("sample grid: per_row must be >= 1");
  if (s.c != 1 && s.c != 3) throw std::invalid_argument("sample grid: need 1 or 3 channels");
  const std::size_t cols = std::min(per_row, s.n);
  const std::size_t rows = (s.n + per_row - 1) / per_row;
  data::RawImage img;
  img.width = static_cast<int>(cols * s.w);
  img.height = static_cast<int>(rows * s.h);
  img.channels = static_cast<int>(s.c);
  img.pixels.assign(static_cast<std::size_t>(img.width) * img.height * s.c, 0);
  for (std::size_t i = 0; i < s.n; ++i) {
    const std::size_t oy = (i / per_row) * s.h;
    const std::size_t ox = (i % per_row) * s.w;
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t y = 0; y < s.h; ++y) {
        for (std::size_t x = 0; x < s.w; ++x) {
          const std::size_t at = ((oy + y) * static_cast<std::size_t>(img.width) + ox + x) * s.c + c;
          img.pixels[at] = data::to_byte(samples.at(i, c, y, x));
        }
      }
    }
  }
  return img;
}

void emit_sample_grid(const ImageBatch& samples, std::size_t per_row,
                      const std::filesystem::path& path) {
  data::write_png(path, render_sample_grid(samples, per_row));
}

ImageBatch sort_by_label(const ImageBatch& samples, std::span<const int> labels) {
  if (labels.size() != samples.batch_size()) {
    throw std::invalid_argument("sort_by_label: one label per sample required");
  }
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });
  ImageBatch out(samples.shape());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto src = samples.sample(order[i]);
    std::copy(src.begin(), src.end(), out.sample(i).begin());
  }
  return out;
}

namespace {

double sq_dist(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return s;
}

}  // namespace

ColorClusterSummary color_cluster_summary(const ImageBatch& samples, int k, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("color clusters: k must be >= 1");
  const Shape4& s = samples.shape();
  if (s.size() == 0) throw std::invalid_argument("color clusters: no samples");
  const std::size_t d = s.c;
  const std::size_t plane = s.h * s.w;
  const std::size_t n = s.n * plane;
  std::vector<double> px(n * d);
  for (std::size_t i = 0; i < s.n; ++i) {
    const auto img = samples.sample(i);
    for (std::size_t p = 0; p < plane; ++p) {
      for (std::size_t c = 0; c < d; ++c) px[(i * plane + p) * d + c] = img[c * plane + p];
    }
  }

  std::set<std::vector<double>> distinct;
  for (std::size_t i = 0; i < n && distinct.size() < static_cast<std::size_t>(k); ++i) {
    distinct.emplace(px.begin() + static_cast<std::ptrdiff_t>(i * d),
                     px.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
  }
  ColorClusterSummary out;
  out.requested_k = k;
  out.effective_k = static_cast<int>(distinct.size());
  const auto kk = static_cast<std::size_t>(out.effective_k);

  // k-means++ seeding.
  Rng rng(seed);
  std::vector<double> centers;
  centers.reserve(kk * d);
  const std::size_t first = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(n - 1)));
  centers.insert(centers.end(), px.begin() + first * d, px.begin() + (first + 1) * d);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  while (centers.size() < kk * d) {
    const double* last = &centers[centers.size() - d];
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      best[i] = std::min(best[i], sq_dist(&px[i * d], last, d));
      total += best[i];
    }
    double target = rng.uniform() * total;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (best[i] <= 0.0) continue;
      pick = i;
      target -= best[i];
      if (target < 0.0) break;
    }
    centers.insert(centers.end(), px.begin() + pick * d, px.begin() + (pick + 1) * d);
  }

  std::vector<std::size_t> assign(n, kk);
  std::vector<double> sums(kk * d);
  std::vector<std::size_t> counts(kk);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t arg = 0;
      double dist = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < kk; ++c) {
        const double v = sq_dist(&px[i * d], &centers[c * d], d);
        if (v < dist) {
          dist = v;
          arg = c;
        }
      }
      if (assign[i] != arg) {
        assign[i] = arg;
        changed = true;
      }
    }
    if (!changed) break;
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (std::size_t j = 0; j < d; ++j) sums[assign[i] * d + j] += px[i * d + j];
    }
    for (std::size_t c = 0; c < kk; ++c) {
      if (counts[c] == 0) continue;  // keep an emptied center where it was
      for (std::size_t j = 0; j < d; ++j) centers[c * d + j] = sums[c * d + j] / counts[c];
    }
  }

  std::fill(counts.begin(), counts.end(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    ++counts[assign[i]];
    out.within_ss += sq_dist(&px[i * d], &centers[assign[i] * d], d);
  }
  for (std::size_t c = 0; c < kk; ++c) {
    ColorCluster cl;
    cl.centroid.assign(centers.begin() + c * d, centers.begin() + (c + 1) * d);
    cl.mass = static_cast<double>(counts[c]) / static_cast<double>(n);
    out.clusters.push_back(std::move(cl));
  }
  std::stable_sort(out.clusters.begin(), out.clusters.end(),
                   [](const ColorCluster& a, const ColorCluster& b) { return a.mass > b.mass; });
  return out;
}

void write_color_clusters_csv(const std::filesystem::path& path,
                              std::span<const NamedClusters> groups) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "group,cluster,mass,requested_k,effective_k,hex\n";
  for (const auto& g : groups) {
    for (std::size_t c = 0; c < g.summary.clusters.size(); ++c) {
      const auto& cl = g.summary.clusters[c];
      unsigned rgb[3];
      for (int j = 0; j < 3; ++j) {
        rgb[j] = data::to_byte(cl.centroid.size() == 3 ? cl.centroid[j] : cl.centroid.at(0));
      }
      char hex[8];
      std::snprintf(hex, sizeof hex, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
      os << g.group << ',' << c << ',' << eval::format_double(cl.mass) << ','
         << g.summary.requested_k << ',' << g.summary.effective_k << ',' << hex << '\n';
    }
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace feddiff::experiment
