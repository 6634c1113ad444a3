#include "latmap/dict/stream_kmeans.hpp"

#include <limits>
#include <stdexcept>
#include <vector>

namespace latmap {
namespace {

// Nearest-center assignment, ties to the lower center index.
template <typename T>
void assign_nearest(const MatX<T>& points, const MatX<T>& centers,
                    std::vector<Eigen::Index>& assignment) {
  const Eigen::Index n = points.rows(), k = centers.rows();
  assignment.assign(size_t(n), 0);
  if (k == 0) return;
  const VecX<T> c2 = centers.rowwise().squaredNorm();
  // Blocked so the n x k score matrix stays small.
  const Eigen::Index block = 512;
  for (Eigen::Index b = 0; b < n; b += block) {
    const Eigen::Index len = std::min(block, n - b);
    MatX<T> score = points.middleRows(b, len) * centers.transpose();  // len x k
    for (Eigen::Index r = 0; r < len; ++r) {
      T best = c2(0) - T(2) * score(r, 0);
      Eigen::Index best_j = 0;
      for (Eigen::Index j = 1; j < k; ++j) {
        T d = c2(j) - T(2) * score(r, j);
        if (d < best) {
          best = d;
          best_j = j;
        }
      }
      assignment[size_t(b + r)] = best_j;
    }
  }
}

template <typename T>
void update_min_dist(const MatX<T>& points, const MatX<T>& centers, Eigen::Index row,
                     VecX<T>& min_d2) {
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    T d = (points.row(i) - centers.row(row)).squaredNorm();
    if (d < min_d2(i)) min_d2(i) = d;
  }
}

// Weighted k-means++ continuation: fills rows [filled, k) of `centers`.
template <typename T>
void kmeanspp_fill(const MatX<T>& points, const VecX<T>& weights, MatX<T>& centers,
                   Eigen::Index filled, std::mt19937_64& rng) {
  const Eigen::Index n = points.rows(), k = centers.rows();
  VecX<T> min_d2 = VecX<T>::Constant(n, std::numeric_limits<T>::max());
  std::vector<uint8_t> used(size_t(n), 0);
  for (Eigen::Index j = 0; j < filled; ++j) update_min_dist(points, centers, j, min_d2);

  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (Eigen::Index j = filled; j < k; ++j) {
    double total = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double p = double(weights(i));
      if (j > 0 || filled > 0) p *= double(min_d2(i));
      total += p;
    }
    Eigen::Index pick = -1;
    if (total > 0) {
      double target = uni(rng) * total, run = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        double p = double(weights(i));
        if (j > 0 || filled > 0) p *= double(min_d2(i));
        run += p;
        if (run >= target) {
          pick = i;
          break;
        }
      }
      if (pick < 0) pick = n - 1;
    } else {
      // All mass exhausted; take the first unused point, then wrap around.
      for (Eigen::Index i = 0; i < n; ++i)
        if (!used[size_t(i)]) {
          pick = i;
          break;
        }
      if (pick < 0) pick = (j - filled) % n;
    }
    used[size_t(pick)] = 1;
    centers.row(j) = points.row(pick);
    update_min_dist(points, centers, j, min_d2);
  }
}

}  // namespace

template <typename T>
WeightedKmeansResult<T> weighted_kmeans(const MatX<T>& points, const VecX<T>& point_weights,
                                        Eigen::Index k, std::mt19937_64& rng,
                                        const MatX<T>* warm_start, int max_iters) {
  const Eigen::Index n = points.rows(), dim = points.cols();
  if (point_weights.size() != n) throw std::invalid_argument("weighted_kmeans: weight count");
  if (k < 1) throw std::invalid_argument("weighted_kmeans: k must be >= 1");

  WeightedKmeansResult<T> res;
  res.centers.setZero(k, dim);
  res.weights.setZero(k);
  if (n == 0) return res;

  Eigen::Index filled = 0;
  if (warm_start) {
    filled = std::min(k, warm_start->rows());
    res.centers.topRows(filled) = warm_start->topRows(filled);
  }
  kmeanspp_fill(points, point_weights, res.centers, filled, rng);

  std::vector<Eigen::Index> assignment, prev;
  std::vector<uint8_t> claimed(size_t(n), 0);
  for (int it = 0; it < max_iters; ++it) {
    assign_nearest(points, res.centers, assignment);

    VecX<T> mass = VecX<T>::Zero(k);
    MatX<T> sums = MatX<T>::Zero(k, dim);
    for (Eigen::Index i = 0; i < n; ++i) {
      mass(assignment[size_t(i)]) += point_weights(i);
      sums.row(assignment[size_t(i)]) += point_weights(i) * points.row(i);
    }
    bool reseeded = false;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (mass(j) > T(0)) {
        res.centers.row(j) = sums.row(j) / mass(j);
      } else {
        // Re-seed at the heaviest unclaimed point; if all are claimed the
        // (duplicate) center is left in place with zero weight.
        Eigen::Index pick = -1;
        T best = T(-1);
        for (Eigen::Index i = 0; i < n; ++i)
          if (!claimed[size_t(i)] && point_weights(i) > best) {
            best = point_weights(i);
            pick = i;
          }
        if (pick >= 0) {
          claimed[size_t(pick)] = 1;
          res.centers.row(j) = points.row(pick);
          reseeded = true;
        }
      }
    }
    res.iterations = it + 1;
    if (!reseeded && it > 0 && assignment == prev) break;
    prev = assignment;
  }

  assign_nearest(points, res.centers, assignment);
  res.weights.setZero();
  for (Eigen::Index i = 0; i < n; ++i) res.weights(assignment[size_t(i)]) += point_weights(i);
  return res;
}

template <typename T>
void stream_kmeans_update(const MatX<T>& batch, DictionaryStateT<T>& state, std::mt19937_64& rng,
                          T decay) {
  const Eigen::Index n = batch.rows();
  if (n == 0) return;
  if (batch.cols() != state.embed_dim())
    throw std::invalid_argument("stream_kmeans_update: embedding dimension mismatch");
  const Eigen::Index k = state.atom_count();

  // Stage 1: compress the batch into weighted micro-centers.
  const Eigen::Index m = std::min(n, k);
  const VecX<T> unit = VecX<T>::Ones(n);
  WeightedKmeansResult<T> local = weighted_kmeans<T>(batch, unit, m, rng, nullptr, 10);

  // Stage 2: pool micro-centers with surviving atoms and re-cluster to K.
  Eigen::Index old_count = 0;
  for (Eigen::Index j = 0; j < k; ++j)
    if (state.weights(j) > T(0)) ++old_count;

  MatX<T> pooled(m + old_count, state.embed_dim());
  VecX<T> pooled_w(m + old_count);
  pooled.topRows(m) = local.centers;
  pooled_w.head(m) = local.weights;
  MatX<T> warm(old_count, state.embed_dim());
  Eigen::Index at = 0;
  for (Eigen::Index j = 0; j < k; ++j) {
    if (state.weights(j) > T(0)) {
      pooled.row(m + at) = state.atoms.row(j);
      pooled_w(m + at) = state.weights(j) * decay;
      warm.row(at) = state.atoms.row(j);
      ++at;
    }
  }

  WeightedKmeansResult<T> merged =
      weighted_kmeans(pooled, pooled_w, k, rng, old_count > 0 ? &warm : nullptr, 10);
  state.atoms = merged.centers;
  state.weights = merged.weights;
  state.anchor = state.atoms;
}

template WeightedKmeansResult<float> weighted_kmeans(const MatX<float>&, const VecX<float>&,
                                                     Eigen::Index, std::mt19937_64&,
                                                     const MatX<float>*, int);
template WeightedKmeansResult<double> weighted_kmeans(const MatX<double>&, const VecX<double>&,
                                                      Eigen::Index, std::mt19937_64&,
                                                      const MatX<double>*, int);
template void stream_kmeans_update(const MatX<float>&, DictionaryStateT<float>&, std::mt19937_64&,
                                   float);
template void stream_kmeans_update(const MatX<double>&, DictionaryStateT<double>&,
                                   std::mt19937_64&, double);

}  // namespace latmap
