#pragma once

#include <cmath>
#include <cstdint>

#include "latmap/core/types.hpp"

namespace latmap {

// Adam moment buffers for one parameter block. MatT is any Eigen dense type
// with the same shape as the parameter.
template <typename MatT>
struct AdamState {
  MatT m, v;
  int64_t step = 0;
  int64_t skipped = 0;  // steps dropped because of non-finite gradients

  void ensure(Eigen::Index rows, Eigen::Index cols) {
    if (m.rows() == rows && m.cols() == cols) return;
    MatT nm = MatT::Zero(rows, cols);
    MatT nv = MatT::Zero(rows, cols);
    const Eigen::Index r = std::min(rows, m.rows());
    if (r > 0 && m.cols() == cols) {
      nm.topRows(r) = m.topRows(r);
      nv.topRows(r) = v.topRows(r);
    }
    m = std::move(nm);
    v = std::move(nv);
  }

  // Row compression mirroring GaussianMapT::keep.
  void keep_rows(const std::vector<uint8_t>& mask) {
    Eigen::Index out = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (!mask[size_t(i)]) continue;
      if (out != i) {
        m.row(out) = m.row(i);
        v.row(out) = v.row(i);
      }
      ++out;
    }
    m.conservativeResize(out, m.cols());
    v.conservativeResize(out, v.cols());
  }

  void reset() {
    m.setZero();
    v.setZero();
    step = 0;
  }
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One Adam update with bias correction. Returns false (and counts a skipped
// step) when the gradient block contains NaN/Inf.
template <typename MatT>
bool adam_step(MatT& param, const MatT& grad, AdamState<MatT>& st,
               typename MatT::Scalar lr, const AdamHyper& hp = {}) {
  using T = typename MatT::Scalar;
  if (!grad.allFinite()) {
    ++st.skipped;
    return false;
  }
  st.ensure(param.rows(), param.cols());
  ++st.step;
  const T b1 = T(hp.beta1), b2 = T(hp.beta2);
  st.m = b1 * st.m + (T(1) - b1) * grad;
  st.v.array() = b2 * st.v.array() + (T(1) - b2) * grad.array().square();
  const T corr1 = T(1) - T(std::pow(hp.beta1, double(st.step)));
  const T corr2 = T(1) - T(std::pow(hp.beta2, double(st.step)));
  param.array() -=
      lr * (st.m.array() / corr1) / ((st.v.array() / corr2).sqrt() + T(hp.eps));
  return true;
}

}  // namespace latmap
