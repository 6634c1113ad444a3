#include "latmap/obj/objective.hpp"

#include <stdexcept>

namespace latmap {

template <typename T>
SupervisionRows<T> gather_supervision(const RenderOutputT<T>& render,
                                      const EmbeddingSetT<T>& embeddings, bool segment_mode) {
  SupervisionRows<T> sup;
  const int h = render.query.height, w = render.query.width;
  const Eigen::Index ds = render.query.channels;
  const Eigen::Index df = embeddings.features.cols();
  if (embeddings.height != h || embeddings.width != w)
    throw std::invalid_argument("gather_supervision: assignment map size mismatch");

  if (!segment_mode) {
    int64_t n = 0;
    for (int32_t a : embeddings.assignment)
      if (a >= 0) ++n;
    sup.queries.setZero(n, ds);
    sup.targets.setZero(n, df);
    sup.pixel_of_row.reserve(size_t(n));
    Eigen::Index r = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        int32_t a = embeddings.assigned(y, x);
        if (a < 0) continue;
        for (Eigen::Index c = 0; c < ds; ++c) sup.queries(r, c) = render.query.at(y, x, int(c));
        sup.targets.row(r) = embeddings.features.row(a);
        sup.pixel_of_row.push_back(int64_t(y) * w + x);
        ++r;
      }
    return sup;
  }

  // Segment mode: average the rendered queries over each assignment row that
  // appears in the frame.
  const Eigen::Index n_rows = embeddings.features.rows();
  std::vector<std::vector<int64_t>> members(static_cast<size_t>(n_rows));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int32_t a = embeddings.assigned(y, x);
      if (a >= 0) members[size_t(a)].push_back(int64_t(y) * w + x);
    }
  int64_t present = 0;
  for (auto& m : members)
    if (!m.empty()) ++present;
  sup.queries.setZero(present, ds);
  sup.targets.setZero(present, df);
  sup.segment_pixels.reserve(size_t(present));
  Eigen::Index r = 0;
  for (Eigen::Index a = 0; a < n_rows; ++a) {
    if (members[size_t(a)].empty()) continue;
    for (int64_t pix : members[size_t(a)]) {
      const int y = int(pix / w), x = int(pix % w);
      for (Eigen::Index c = 0; c < ds; ++c) sup.queries(r, c) += render.query.at(y, x, int(c));
    }
    sup.queries.row(r) /= T(members[size_t(a)].size());
    sup.targets.row(r) = embeddings.features.row(a);
    sup.segment_pixels.push_back(std::move(members[size_t(a)]));
    ++r;
  }
  return sup;
}

template <typename T>
LossBreakdown<T> total_objective(const GaussianMapT<T>& map, const DictionaryStateT<T>& dict,
                                 const std::vector<const KeyframeT<T>*>& batch,
                                 const Intrinsics& intr, const Config& cfg,
                                 ObjectiveGrads<T>* grads, const ObjectiveOptions<T>& opts) {
  if (batch.empty()) throw std::invalid_argument("total_objective: empty batch");
  if (opts.cached_renders && opts.cached_renders->size() != batch.size())
    throw std::invalid_argument("total_objective: cached render count mismatch");

  LossBreakdown<T> sum;
  const T inv_b = T(1) / T(batch.size());
  const bool segment_mode = cfg.feature_supervision == "segment";
  const bool want_grad = grads != nullptr;

  if (grads) {
    grads->map.resize_like(map);
    grads->d_proj.setZero(dict.proj.rows(), dict.proj.cols());
    grads->d_atoms.setZero(dict.atoms.rows(), dict.atoms.cols());
  }

  std::vector<RenderOutputT<T>> fresh;
  for (size_t b = 0; b < batch.size(); ++b) {
    const KeyframeT<T>& kf = *batch[b];
    const RenderOutputT<T>* rendered = nullptr;
    if (opts.cached_renders) {
      rendered = &(*opts.cached_renders)[b];
    } else {
      fresh.push_back(render(map, kf.pose, intr, opts.threads));
      rendered = &fresh.back();
    }

    const bool want_map_grad = want_grad && opts.map_grads;
    RgbLoss<T> rgb = rgb_loss(rendered->color, kf.rgb, T(cfg.lambda_i1), T(cfg.lambda_i2),
                              want_map_grad);
    ScalarLoss<T> dep = depth_loss(rendered->depth, kf.depth, rendered->alpha, want_map_grad);

    SupervisionRows<T> sup = gather_supervision(*rendered, kf.embeddings, segment_mode);
    AttentionCache<T> cache;
    FeatureLoss<T> feat;
    MatX<T> reconstructed;
    if (sup.queries.rows() > 0) {
      reconstructed = reconstruct(sup.queries, dict, want_grad ? &cache : nullptr);
      feat = feature_loss(reconstructed, sup.targets, dict.atoms, dict.anchor,
                          T(cfg.trust_delta), T(cfg.lambda_cos), T(cfg.lambda_l2),
                          T(cfg.lambda_trust), want_grad);
    } else {
      feat.trust_term =
          trust_region_penalty<T>(dict.atoms, dict.anchor, T(cfg.trust_delta), nullptr);
    }

    sum.l_rgb += rgb.l1 * inv_b;
    sum.l_ssim += rgb.ssim_loss * inv_b;
    sum.l_depth += dep.value * inv_b;
    sum.l_cos += feat.cos_term * inv_b;
    sum.l_l2 += feat.l2_term * inv_b;
    sum.depth_empty = sum.depth_empty || dep.flagged;
    sum.zero_norm_flagged = sum.zero_norm_flagged || feat.zero_norm_flagged;
    sum.supervised_rows += sup.queries.rows();

    if (!want_grad) continue;

    ImageT<T> d_query;
    if (sup.queries.rows() > 0) {
      DictionaryGrads<T> dg =
          reconstruct_backward(dict, cache, feat.d_reconstructed);
      if (opts.dict_grads) {
        grads->d_proj += T(cfg.lambda_feat) * inv_b * dg.d_proj;
        grads->d_atoms += T(cfg.lambda_feat) * inv_b * dg.d_atoms;
      }
      if (opts.map_grads) {
        // Scatter per-row query gradients back onto the rendered query map.
        d_query = ImageT<T>(intr.height, intr.width, int(map.feature_dim()));
        const T scale = T(cfg.lambda_feat) * inv_b;
        if (!segment_mode) {
          for (Eigen::Index r = 0; r < Eigen::Index(sup.pixel_of_row.size()); ++r) {
            const int64_t pix = sup.pixel_of_row[size_t(r)];
            T* dst = &d_query.data[size_t(pix) * size_t(d_query.channels)];
            for (Eigen::Index c = 0; c < map.feature_dim(); ++c)
              dst[c] += scale * dg.d_queries(r, c);
          }
        } else {
          for (Eigen::Index r = 0; r < Eigen::Index(sup.segment_pixels.size()); ++r) {
            const auto& pixels = sup.segment_pixels[size_t(r)];
            const T per_pix = scale / T(pixels.size());
            for (int64_t pix : pixels) {
              T* dst = &d_query.data[size_t(pix) * size_t(d_query.channels)];
              for (Eigen::Index c = 0; c < map.feature_dim(); ++c)
                dst[c] += per_pix * dg.d_queries(r, c);
            }
          }
        }
      }
    }

    if (opts.map_grads) {
      // Fold the objective weights and the batch average into the upstream
      // image gradients, then run one backward pass per keyframe.
      for (auto& v : rgb.grad.data) v *= T(cfg.lambda_rgb) * inv_b;
      if (!dep.flagged)
        for (auto& v : dep.grad.data) v *= T(cfg.lambda_depth) * inv_b;
      RenderUpstream<T> up;
      up.d_color = &rgb.grad;
      up.d_depth = dep.flagged ? nullptr : &dep.grad;
      up.d_query = d_query.size() > 0 ? &d_query : nullptr;
      MapGradientsT<T> mg = render_backward(map, kf.pose, intr, *rendered, up, opts.threads);
      grads->map.add(mg);
    }
  }

  // The trust term is a property of the dictionary state, not of any single
  // keyframe, so it enters the total once.
  const T trust =
      trust_region_penalty<T>(dict.atoms, dict.anchor, T(cfg.trust_delta), nullptr);
  sum.l_trust = trust;
  if (want_grad && opts.dict_grads) {
    MatX<T> trust_grad;
    trust_region_penalty<T>(dict.atoms, dict.anchor, T(cfg.trust_delta), &trust_grad);
    grads->d_atoms += T(cfg.lambda_feat) * T(cfg.lambda_trust) * trust_grad;
  }

  sum.total = T(cfg.lambda_rgb) * (T(cfg.lambda_i1) * sum.l_rgb + T(cfg.lambda_i2) * sum.l_ssim) +
              T(cfg.lambda_depth) * sum.l_depth +
              T(cfg.lambda_feat) * (T(cfg.lambda_cos) * sum.l_cos + T(cfg.lambda_l2) * sum.l_l2 +
                                    T(cfg.lambda_trust) * sum.l_trust);

  if (opts.render_sink && !opts.cached_renders) *opts.render_sink = std::move(fresh);
  return sum;
}

template SupervisionRows<float> gather_supervision(const RenderOutputT<float>&,
                                                   const EmbeddingSetT<float>&, bool);
template SupervisionRows<double> gather_supervision(const RenderOutputT<double>&,
                                                    const EmbeddingSetT<double>&, bool);
template LossBreakdown<float> total_objective(const GaussianMapT<float>&,
                                              const DictionaryStateT<float>&,
                                              const std::vector<const KeyframeT<float>*>&,
                                              const Intrinsics&, const Config&,
                                              ObjectiveGrads<float>*,
                                              const ObjectiveOptions<float>&);
template LossBreakdown<double> total_objective(const GaussianMapT<double>&,
                                               const DictionaryStateT<double>&,
                                               const std::vector<const KeyframeT<double>*>&,
                                               const Intrinsics&, const Config&,
                                               ObjectiveGrads<double>*,
                                               const ObjectiveOptions<double>&);

}  // namespace latmap
