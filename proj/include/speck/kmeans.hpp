#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "speck/error.hpp"
#include "speck/features.hpp"
#include "speck/rng.hpp"
#include "speck/tensor.hpp"

namespace speck {

struct Codebook {
  Tensor<float> centroids;  // K x D
  std::string feature_kind;

  int64_t k() const { return centroids.rows(); }
  int64_t dim() const { return centroids.cols(); }
};

namespace detail {

inline double sqdist(const float* a, const float* b, int64_t d) {
  double acc = 0.0;
  for (int64_t i = 0; i < d; ++i) {
    double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += diff * diff;
  }
  return acc;
}

// Nearest centroid by squared distance; ties go to the lowest index.
inline int nearest_centroid(const float* x, const Tensor<float>& centroids) {
  const int64_t k = centroids.rows(), d = centroids.cols();
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int64_t c = 0; c < k; ++c) {
    double dist = sqdist(x, centroids.v.data() + c * d, d);
    if (dist < best_d) {
      best_d = dist;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace detail

// Lloyd's algorithm with k-means++ seeding. Stops when assignments no longer
// change or after max_iters. Empty clusters are re-seeded at the point
// farthest from its currently assigned centroid.
inline Codebook kmeans_fit(const Tensor<float>& frames, int k, uint64_t seed,
                           int max_iters = 50,
                           const std::string& feature_kind = "mfcc") {
  const int64_t n = frames.rows(), d = frames.cols();
  if (k < 1) throw DegenerateInputError("kmeans_fit: k must be >= 1");
  if (n < k)
    throw DegenerateInputError("kmeans_fit: fewer points (" + std::to_string(n) +
                               ") than clusters (" + std::to_string(k) + ")");

  Rng rng(seed, "kmeans++");
  Tensor<float> centroids({static_cast<int64_t>(k), d});

  // k-means++ seeding: first centroid uniform, the rest D^2-weighted.
  std::vector<double> min_d2(static_cast<size_t>(n), 0.0);
  int64_t first = rng.uniform_int(n);
  std::copy_n(frames.v.data() + first * d, d, centroids.v.data());
  for (int64_t i = 0; i < n; ++i)
    min_d2[static_cast<size_t>(i)] =
        detail::sqdist(frames.v.data() + i * d, centroids.v.data(), d);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (double x : min_d2) total += x;
    int64_t pick;
    if (total <= 0.0) {
      pick = rng.uniform_int(n);  // all points coincide with chosen centroids
    } else {
      double r = rng.uniform() * total;
      double run = 0.0;
      pick = n - 1;
      for (int64_t i = 0; i < n; ++i) {
        run += min_d2[static_cast<size_t>(i)];
        if (run >= r) {
          pick = i;
          break;
        }
      }
    }
    std::copy_n(frames.v.data() + pick * d, d, centroids.v.data() + c * d);
    for (int64_t i = 0; i < n; ++i) {
      double dist = detail::sqdist(frames.v.data() + i * d, centroids.v.data() + c * d, d);
      if (dist < min_d2[static_cast<size_t>(i)]) min_d2[static_cast<size_t>(i)] = dist;
    }
  }

  std::vector<int> assign(static_cast<size_t>(n), -1);
  std::vector<double> sums;
  std::vector<int64_t> counts;
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (int64_t i = 0; i < n; ++i) {
      int a = detail::nearest_centroid(frames.v.data() + i * d, centroids);
      if (a != assign[static_cast<size_t>(i)]) {
        assign[static_cast<size_t>(i)] = a;
        changed = true;
      }
    }
    if (!changed) break;

    sums.assign(static_cast<size_t>(k) * d, 0.0);
    counts.assign(static_cast<size_t>(k), 0);
    for (int64_t i = 0; i < n; ++i) {
      int a = assign[static_cast<size_t>(i)];
      counts[static_cast<size_t>(a)]++;
      for (int64_t j = 0; j < d; ++j)
        sums[static_cast<size_t>(a) * d + j] += frames.v[static_cast<size_t>(i * d + j)];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<size_t>(c)] == 0) {
        // Re-seed at the point farthest from its own centroid.
        double worst = -1.0;
        int64_t worst_i = 0;
        for (int64_t i = 0; i < n; ++i) {
          int a = assign[static_cast<size_t>(i)];
          double dist = detail::sqdist(frames.v.data() + i * d,
                                       centroids.v.data() + a * d, d);
          if (dist > worst) {
            worst = dist;
            worst_i = i;
          }
        }
        std::copy_n(frames.v.data() + worst_i * d, d, centroids.v.data() + c * d);
      } else {
        for (int64_t j = 0; j < d; ++j)
          centroids.at(c, j) = static_cast<float>(sums[static_cast<size_t>(c) * d + j] /
                                                  counts[static_cast<size_t>(c)]);
      }
    }
  }

  Codebook cb;
  cb.centroids = std::move(centroids);
  cb.feature_kind = feature_kind;
  return cb;
}

inline double kmeans_inertia(const Tensor<float>& frames, const Codebook& cb) {
  const int64_t n = frames.rows(), d = frames.cols();
  if (d != cb.dim()) throw ShapeError("kmeans_inertia: dimension mismatch");
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    int a = detail::nearest_centroid(frames.v.data() + i * d, cb.centroids);
    total += detail::sqdist(frames.v.data() + i * d, cb.centroids.v.data() + a * d, d);
  }
  return total;
}

// Per-frame nearest-centroid labels in [0, K).
inline std::vector<int> kmeans_assign(const FeatureSequence& features, const Codebook& cb) {
  if (features.dim() != cb.dim())
    throw ShapeError("kmeans_assign: feature dim " + std::to_string(features.dim()) +
                     " != codebook dim " + std::to_string(cb.dim()));
  const int64_t t_frames = features.num_frames(), d = features.dim();
  std::vector<int> labels(static_cast<size_t>(t_frames));
  for (int64_t t = 0; t < t_frames; ++t)
    labels[static_cast<size_t>(t)] =
        detail::nearest_centroid(features.data.v.data() + t * d, cb.centroids);
  return labels;
}

}  // namespace speck
