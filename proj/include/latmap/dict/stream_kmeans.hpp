#pragma once

#include <random>

#include "latmap/dict/dictionary.hpp"

namespace latmap {

template <typename T>
struct WeightedKmeansResult {
  MatX<T> centers;  // k x dim
  VecX<T> weights;  // per-cluster total mass (0 for clusters left empty)
  int iterations = 0;
};

// Weighted Lloyd iterations with k-means++ seeding. Optional warm-start
// centers fill the first rows; remaining seeds come from weighted k-means++.
// Empty clusters are re-seeded once at the heaviest still-unclaimed point;
// when every point is claimed the duplicate keeps weight 0. Ties in the
// nearest-center assignment go to the lower center index.
template <typename T>
WeightedKmeansResult<T> weighted_kmeans(const MatX<T>& points, const VecX<T>& point_weights,
                                        Eigen::Index k, std::mt19937_64& rng,
                                        const MatX<T>* warm_start = nullptr, int max_iters = 10);

// One streaming dictionary maintenance step: compresses the batch into
// min(n, K) weighted micro-centers, pools them with the current atoms (old
// mass scaled by `decay`), re-clusters to exactly K atoms warm-started from
// the previous dictionary, and resets the anchor to the result.
template <typename T>
void stream_kmeans_update(const MatX<T>& batch, DictionaryStateT<T>& state, std::mt19937_64& rng,
                          T decay = T(1));

}  // namespace latmap
