#pragma once

#include <optional>
#include <vector>

#include "latmap/core/types.hpp"

namespace latmap {

// Renderer constants. cov2d is regularized by +kCovReg pixels^2 on the
// diagonal and footprints are truncated at kSigmaCut standard deviations;
// blending stops once transmittance drops below kTransmitStop.
struct RenderParams {
  static constexpr double kZNear = 0.01;
  static constexpr double kCovReg = 0.3;
  static constexpr double kSigmaCut = 3.0;
  static constexpr double kAlphaMax = 0.999;
  static constexpr double kTransmitStop = 1e-4;
};

template <typename T>
struct Splat2D {
  Vec2<T> mean2d = Vec2<T>::Zero();
  Mat2<T> cov2d = Mat2<T>::Zero();  // regularized, positive definite
  T depth = T(0);                   // camera-frame z
  int32_t source = -1;              // row in the source map
};

// Projection cache kept per surviving splat so the backward pass can replay
// blending without re-projecting.
template <typename T>
struct ProjectedSplat {
  Vec2<T> mean2d = Vec2<T>::Zero();
  Mat2<T> cov_inv = Mat2<T>::Zero();
  T depth = T(0);
  T alpha = T(0);  // decoded opacity
  int32_t source = -1;
  int32_t x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel bounds
};

template <typename T>
struct RenderOutputT {
  ImageT<T> color;  // H x W x 3
  ImageT<T> depth;  // H x W
  ImageT<T> query;  // H x W x query_dim
  ImageT<T> alpha;  // H x W accumulated opacity

  std::vector<ProjectedSplat<T>> splats;
  // Fingerprint of the inputs; render_backward refuses a stale cache.
  Eigen::Index source_count = 0;
  PoseT<T> source_pose;
  Intrinsics source_intr;
};
using RenderOutput = RenderOutputT<float>;

// Gradients with the same SoA layout as GaussianMapT.
template <typename T>
struct MapGradientsT {
  MatX3<T> positions;
  MatX4<T> rotations;
  MatX3<T> colors;
  MatX3<T> log_scales;
  VecX<T> opacity_logits;
  MatX<T> features;

  void resize_like(const GaussianMapT<T>& map) {
    positions.setZero(map.size(), 3);
    rotations.setZero(map.size(), 4);
    colors.setZero(map.size(), 3);
    log_scales.setZero(map.size(), 3);
    opacity_logits.setZero(map.size());
    features.setZero(map.size(), map.feature_dim());
  }

  void add(const MapGradientsT<T>& o) {
    positions += o.positions;
    rotations += o.rotations;
    colors += o.colors;
    log_scales += o.log_scales;
    opacity_logits += o.opacity_logits;
    features += o.features;
  }

  void scale(T s) {
    positions *= s;
    rotations *= s;
    colors *= s;
    log_scales *= s;
    opacity_logits *= s;
    features *= s;
  }
};
using MapGradients = MapGradientsT<float>;

// EWA-style perspective projection of one Gaussian. Returns nullopt when the
// primitive is behind the near plane or its footprint misses the image.
template <typename T>
std::optional<Splat2D<T>> project_gaussian(const GaussianPrimitive& g, const PoseT<T>& pose,
                                           const Intrinsics& intr);

// Depth-ordered alpha blending of color, depth, query features and opacity.
// Deterministic: equal depths break ties by lower source index.
template <typename T>
RenderOutputT<T> render(const GaussianMapT<T>& map, const PoseT<T>& pose, const Intrinsics& intr,
                        int threads = 1);

template <typename T>
struct RenderUpstream {
  const ImageT<T>* d_color = nullptr;  // any of these may be null (= zero)
  const ImageT<T>* d_depth = nullptr;
  const ImageT<T>* d_query = nullptr;
};

// Gradients of a scalar loss w.r.t. every map attribute given upstream image
// gradients. `out` must come from render() on identical inputs.
template <typename T>
MapGradientsT<T> render_backward(const GaussianMapT<T>& map, const PoseT<T>& pose,
                                 const Intrinsics& intr, const RenderOutputT<T>& out,
                                 const RenderUpstream<T>& upstream, int threads = 1);

}  // namespace latmap
