#include "latmap/dict/dictionary.hpp"

#include <cmath>
#include <stdexcept>

namespace latmap {

namespace {
template <typename T>
double checksum_impl(const MatX<T>& atoms, const MatX<T>& proj) {
  double s = 0;
  for (Eigen::Index i = 0; i < atoms.size(); ++i) s += double(atoms.data()[i]);
  for (Eigen::Index i = 0; i < proj.size(); ++i) s += 3.0 * double(proj.data()[i]);
  return s + double(atoms.rows()) + 17.0 * double(proj.rows());
}
}  // namespace

double dictionary_checksum(const MatX<float>& atoms, const MatX<float>& proj) {
  return checksum_impl(atoms, proj);
}
double dictionary_checksum(const MatX<double>& atoms, const MatX<double>& proj) {
  return checksum_impl(atoms, proj);
}

template <typename T>
MatX<T> reconstruct(const MatX<T>& queries, const DictionaryStateT<T>& state,
                    AttentionCache<T>* cache) {
  if (queries.cols() != state.query_dim())
    throw std::invalid_argument("reconstruct: query dimension mismatch");
  if (state.proj.cols() != state.embed_dim())
    throw std::invalid_argument("reconstruct: projection/atom dimension mismatch");
  if (!(state.temperature > T(0)))
    throw std::invalid_argument("reconstruct: temperature must be > 0");

  const Eigen::Index n = queries.rows();
  const Eigen::Index k = state.atom_count();
  MatX<T> logits = (queries * state.proj) * state.atoms.transpose() / state.temperature;
  // Row-wise softmax with max subtraction.
  for (Eigen::Index r = 0; r < n; ++r) {
    T m = logits.row(r).maxCoeff();
    logits.row(r) = (logits.row(r).array() - m).exp();
    T sum = logits.row(r).sum();
    logits.row(r) /= sum;
  }
  MatX<T> reconstructed = logits * state.atoms;
  if (cache) {
    cache->attention = std::move(logits);
    cache->queries = queries;
    cache->state_checksum = checksum_impl(state.atoms, state.proj);
  }
  (void)k;
  return reconstructed;
}

template <typename T>
DictionaryGrads<T> reconstruct_backward(const DictionaryStateT<T>& state,
                                        const AttentionCache<T>& cache,
                                        const MatX<T>& d_reconstructed) {
  if (cache.attention.rows() != d_reconstructed.rows() ||
      d_reconstructed.cols() != state.embed_dim() ||
      cache.attention.cols() != state.atom_count() ||
      cache.queries.cols() != state.query_dim() ||
      cache.state_checksum != checksum_impl(state.atoms, state.proj))
    throw std::runtime_error("reconstruct_backward: stale attention cache");

  const Eigen::Index n = cache.attention.rows();
  // d attention = dF * D^T, then softmax backward row by row.
  MatX<T> d_logits = d_reconstructed * state.atoms.transpose();
  for (Eigen::Index r = 0; r < n; ++r) {
    T dot = cache.attention.row(r).dot(d_logits.row(r));
    d_logits.row(r) =
        cache.attention.row(r).array() * (d_logits.row(r).array() - dot);
  }
  d_logits /= state.temperature;

  DictionaryGrads<T> g;
  const MatX<T> qw = cache.queries * state.proj;  // n x embed_dim
  g.d_atoms = cache.attention.transpose() * d_reconstructed + d_logits.transpose() * qw;
  const MatX<T> d_qw = d_logits * state.atoms;
  g.d_proj = cache.queries.transpose() * d_qw;
  g.d_queries = d_qw * state.proj.transpose();
  return g;
}

template <typename T>
T trust_region_penalty(const MatX<T>& atoms, const MatX<T>& anchor, T delta, MatX<T>* d_atoms) {
  if (atoms.rows() != anchor.rows() || atoms.cols() != anchor.cols())
    throw std::invalid_argument("trust_region_penalty: shape mismatch");
  if (d_atoms) d_atoms->setZero(atoms.rows(), atoms.cols());
  T total = T(0);
  for (Eigen::Index j = 0; j < atoms.rows(); ++j) {
    VecX<T> diff = (atoms.row(j) - anchor.row(j)).transpose();
    T dist = diff.norm();
    T excess = dist - delta;
    if (excess > T(0)) {
      total += excess;
      if (d_atoms) d_atoms->row(j) = (diff / dist).transpose();
    }
  }
  return total;
}

template MatX<float> reconstruct(const MatX<float>&, const DictionaryStateT<float>&,
                                 AttentionCache<float>*);
template MatX<double> reconstruct(const MatX<double>&, const DictionaryStateT<double>&,
                                  AttentionCache<double>*);
template DictionaryGrads<float> reconstruct_backward(const DictionaryStateT<float>&,
                                                     const AttentionCache<float>&,
                                                     const MatX<float>&);
template DictionaryGrads<double> reconstruct_backward(const DictionaryStateT<double>&,
                                                      const AttentionCache<double>&,
                                                      const MatX<double>&);
template float trust_region_penalty(const MatX<float>&, const MatX<float>&, float, MatX<float>*);
template double trust_region_penalty(const MatX<double>&, const MatX<double>&, double,
                                     MatX<double>*);

}  // namespace latmap
