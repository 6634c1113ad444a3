#pragma once

#include "latmap/core/types.hpp"
#include "latmap/dict/dictionary.hpp"

namespace latmap {

// Mean structural similarity with an 11x11 Gaussian window (sigma 1.5),
// C1=0.01^2, C2=0.03^2 on [0,1] images, reflect padding. Images smaller than
// the window fall back to whole-image statistics. Optional gradient of the
// mean SSIM w.r.t. `a`.
template <typename T>
T ssim(const ImageT<T>& a, const ImageT<T>& b, ImageT<T>* d_a = nullptr);

template <typename T>
struct ScalarLoss {
  T value = T(0);
  ImageT<T> grad;    // w.r.t. the first image argument
  bool flagged = false;
};

// lambda_i1 * mean|a-b| + lambda_i2 * (1 - SSIM(a,b)) / 2, with the L1 and
// SSIM parts also reported separately.
template <typename T>
struct RgbLoss {
  T value = T(0);
  T l1 = T(0);
  T ssim_loss = T(0);
  ImageT<T> grad;
};

template <typename T>
RgbLoss<T> rgb_loss(const ImageT<T>& rendered, const ImageT<T>& observed, T lambda_i1,
                    T lambda_i2, bool want_grad = true);

// Mean L1 over pixels with valid observed depth (> 0) and rendered coverage
// (alpha > 0.5); flagged when no pixel qualifies.
template <typename T>
ScalarLoss<T> depth_loss(const ImageT<T>& rendered, const ImageT<T>& observed,
                         const ImageT<T>& alpha, bool want_grad = true);

// Feature reconstruction loss: lambda_cos * mean(1 - cos) + lambda_l2 *
// mean ||row diff||^2 + lambda_trust * trust_region_penalty.
template <typename T>
struct FeatureLoss {
  T value = T(0);
  T cos_term = T(0);    // mean(1 - cos), unweighted
  T l2_term = T(0);     // mean squared row distance, unweighted
  T trust_term = T(0);  // hinge penalty, unweighted
  MatX<T> d_reconstructed;
  MatX<T> d_atoms_trust;
  bool zero_norm_flagged = false;
};

template <typename T>
FeatureLoss<T> feature_loss(const MatX<T>& reconstructed, const MatX<T>& target,
                            const MatX<T>& atoms, const MatX<T>& anchor, T delta, T lambda_cos,
                            T lambda_l2, T lambda_trust, bool want_grad = true);

}  // namespace latmap
