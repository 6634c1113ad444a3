#pragma once

#include "latmap/core/types.hpp"

namespace latmap {

// Learned dictionary: K atoms in the target embedding space, the anchor
// snapshot the trust region is measured against, the query projection, and
// per-atom accumulated assignment mass from streaming K-means.
template <typename T>
struct DictionaryStateT {
  MatX<T> atoms;    // K x embed_dim
  MatX<T> anchor;   // K x embed_dim
  MatX<T> proj;     // query_dim x embed_dim
  VecX<T> weights;  // K, >= 0
  T temperature = T(1);

  void init(Eigen::Index k, Eigen::Index query_dim, Eigen::Index embed_dim) {
    atoms.setZero(k, embed_dim);
    anchor.setZero(k, embed_dim);
    proj.setZero(query_dim, embed_dim);
    weights.setZero(k);
  }

  Eigen::Index atom_count() const { return atoms.rows(); }
  Eigen::Index embed_dim() const { return atoms.cols(); }
  Eigen::Index query_dim() const { return proj.rows(); }

  template <typename U>
  DictionaryStateT<U> cast() const {
    DictionaryStateT<U> out;
    out.atoms = atoms.template cast<U>();
    out.anchor = anchor.template cast<U>();
    out.proj = proj.template cast<U>();
    out.weights = weights.template cast<U>();
    out.temperature = U(temperature);
    return out;
  }
};
using DictionaryState = DictionaryStateT<float>;

// Forward cache for reconstruct_backward. The checksum pins the dictionary
// contents the attention was computed from.
template <typename T>
struct AttentionCache {
  MatX<T> attention;  // n x K, rows sum to 1
  MatX<T> queries;    // n x query_dim
  double state_checksum = 0;
};

template <typename T>
struct DictionaryGrads {
  MatX<T> d_queries;
  MatX<T> d_proj;
  MatX<T> d_atoms;
};

double dictionary_checksum(const MatX<float>& atoms, const MatX<float>& proj);
double dictionary_checksum(const MatX<double>& atoms, const MatX<double>& proj);

// Attention reconstruction: row r of the result is
// softmax(queries_r * proj * atoms^T / temperature) * atoms.
template <typename T>
MatX<T> reconstruct(const MatX<T>& queries, const DictionaryStateT<T>& state,
                    AttentionCache<T>* cache = nullptr);

template <typename T>
DictionaryGrads<T> reconstruct_backward(const DictionaryStateT<T>& state,
                                        const AttentionCache<T>& cache,
                                        const MatX<T>& d_reconstructed);

// Hinge penalty on atoms leaving the delta-ball around the anchor:
// sum_j relu(||anchor_j - atoms_j|| - delta). The gradient is the unit
// displacement direction outside the ball and zero at or inside the hinge.
template <typename T>
T trust_region_penalty(const MatX<T>& atoms, const MatX<T>& anchor, T delta,
                       MatX<T>* d_atoms = nullptr);

}  // namespace latmap
