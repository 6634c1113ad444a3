#pragma once

#include <vector>

#include "latmap/core/config.hpp"
#include "latmap/dict/dictionary.hpp"
#include "latmap/obj/losses.hpp"
#include "latmap/splat/render.hpp"

namespace latmap {

template <typename T>
struct LossBreakdown {
  T l_rgb = T(0);    // mean per-pixel L1 (unweighted)
  T l_ssim = T(0);   // (1 - SSIM) / 2 (unweighted)
  T l_depth = T(0);  // masked mean depth L1 (unweighted)
  T l_cos = T(0);    // mean(1 - cos) (unweighted)
  T l_l2 = T(0);     // mean squared row distance (unweighted)
  T l_trust = T(0);  // trust-region hinge (unweighted)
  T total = T(0);    // full weighted objective
  int64_t supervised_rows = 0;
  bool depth_empty = false;
  bool zero_norm_flagged = false;
};

template <typename T>
struct ObjectiveGrads {
  MapGradientsT<T> map;
  MatX<T> d_proj;
  MatX<T> d_atoms;
};

template <typename T>
struct ObjectiveOptions {
  bool map_grads = true;   // gradients w.r.t. Gaussian attributes
  bool dict_grads = true;  // gradients w.r.t. projection and atoms
  int threads = 1;
  // Reuse renders from a previous call with an identical map (dictionary
  // refinement iterations); mutually exclusive with render_sink.
  const std::vector<RenderOutputT<T>>* cached_renders = nullptr;
  // When set, the fresh renders are moved here for reuse.
  std::vector<RenderOutputT<T>>* render_sink = nullptr;
};

// Full mapping objective over a batch of keyframes: renders each keyframe,
// applies the photometric, depth and feature losses, and averages them over
// the batch (the trust term is state-level and enters once). Gradients are
// accumulated into `grads` when non-null.
template <typename T>
LossBreakdown<T> total_objective(const GaussianMapT<T>& map, const DictionaryStateT<T>& dict,
                                 const std::vector<const KeyframeT<T>*>& batch,
                                 const Intrinsics& intr, const Config& cfg,
                                 ObjectiveGrads<T>* grads,
                                 const ObjectiveOptions<T>& opts = {});

// Supervision rows for one rendered keyframe: per-pixel or segment-pooled
// queries plus their target embeddings; used by the objective and by
// evaluation.
template <typename T>
struct SupervisionRows {
  MatX<T> queries;                         // n x query_dim
  MatX<T> targets;                         // n x embed_dim
  std::vector<int64_t> pixel_of_row;       // per-pixel mode: flat pixel index
  std::vector<std::vector<int64_t>> segment_pixels;  // segment mode
};

template <typename T>
SupervisionRows<T> gather_supervision(const RenderOutputT<T>& render,
                                      const EmbeddingSetT<T>& embeddings, bool segment_mode);

}  // namespace latmap
