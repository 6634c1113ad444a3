#include "latmap/pipe/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "latmap/core/parallel.hpp"
#include "latmap/core/se3.hpp"
#include "latmap/dict/stream_kmeans.hpp"

namespace latmap {

bool select_keyframe(int frame_index, int stride) {
  if (stride < 1) throw std::invalid_argument("select_keyframe: stride must be >= 1");
  return frame_index % stride == 0;
}

std::vector<KeyframePtr> sample_history(const HistoryBuffer& history, int count,
                                        std::mt19937_64& rng) {
  const size_t n = history.size();
  std::vector<KeyframePtr> out;
  if (n == 0 || count <= 0) return out;
  if (n <= size_t(count)) {
    for (size_t i = 0; i < n; ++i) out.push_back(history.at(i));
    return out;
  }
  // Partial Fisher-Yates over an index vector: uniform without replacement.
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  for (int k = 0; k < count; ++k) {
    std::uniform_int_distribution<size_t> pick(size_t(k), n - 1);
    std::swap(idx[size_t(k)], idx[pick(rng)]);
    out.push_back(history.at(idx[size_t(k)]));
  }
  return out;
}

GaussianMap seed_gaussians(const Keyframe& kf, const RenderOutput& rendered,
                           const Intrinsics& intr, const Config& cfg, std::mt19937_64& rng) {
  constexpr float kAlphaCovered = 0.5f;
  constexpr float kDepthErr = 0.1f;
  constexpr int kStride = 2;
  const Mat3<float> rot_wc = quat_to_rot(kf.pose.rotation);

  std::normal_distribution<float> gauss(0.0f, 0.01f);
  std::vector<GaussianPrimitive> prims;
  for (int y = 0; y < intr.height; y += kStride) {
    for (int x = 0; x < intr.width; x += kStride) {
      const float z = kf.depth.at(y, x);
      if (!(z > 0)) continue;
      const float a = rendered.alpha.at(y, x);
      const float zr = rendered.depth.at(y, x);
      if (!(a < kAlphaCovered || std::abs(zr - z) > kDepthErr)) continue;

      GaussianPrimitive g;
      const Vec3f p_cam((float(x) - intr.cx) / intr.fx * z, (float(y) - intr.cy) / intr.fy * z,
                        z);
      g.position = rot_wc * p_cam + kf.pose.translation;
      g.rotation = Vec4f(1, 0, 0, 0);
      g.color = Vec3f(kf.rgb.at(y, x, 0), kf.rgb.at(y, x, 1), kf.rgb.at(y, x, 2));
      g.log_scale = Vec3f::Constant(std::log(z / intr.fx * 2.0f));  // two-pixel footprint
      g.opacity_logit = 0.0f;                                       // alpha = 0.5
      g.feature = VecX<float>::Zero(cfg.query_dim);
      for (int c = 0; c < cfg.query_dim; ++c) g.feature(c) = gauss(rng);
      prims.push_back(std::move(g));
    }
  }
  GaussianMap out;
  out.resize(Eigen::Index(prims.size()), cfg.query_dim);
  for (size_t i = 0; i < prims.size(); ++i) out.set(Eigen::Index(i), prims[i]);
  return out;
}

void MapOptimizer::step_map(GaussianMap& map, const MapGradientsT<float>& g, const Config& cfg) {
  adam_step(map.positions, g.positions, positions, cfg.lr_position * cfg.scene_extent);
  adam_step(map.rotations, g.rotations, rotations, cfg.lr_rotation);
  for (Eigen::Index i = 0; i < map.rotations.rows(); ++i) {
    const float n = map.rotations.row(i).norm();
    if (n > 1e-12f)
      map.rotations.row(i) /= n;
    else
      map.rotations.row(i) << 1, 0, 0, 0;
  }
  adam_step(map.colors, g.colors, colors, cfg.lr_color);
  adam_step(map.log_scales, g.log_scales, log_scales, cfg.lr_log_scale);
  adam_step(map.opacity_logits, g.opacity_logits, opacity_logits, cfg.lr_opacity);
  adam_step(map.features, g.features, features, cfg.lr_feature);
}

void MapOptimizer::step_dict(DictionaryState& dict, const MatX<float>& d_proj,
                             const MatX<float>& d_atoms, const Config& cfg, bool learn_atoms) {
  adam_step(dict.proj, d_proj, proj, cfg.lr_proj);
  if (learn_atoms) adam_step(dict.atoms, d_atoms, atoms, cfg.lr_dict);
}

void MapOptimizer::keep_map_rows(const std::vector<uint8_t>& mask) {
  positions.keep_rows(mask);
  rotations.keep_rows(mask);
  colors.keep_rows(mask);
  log_scales.keep_rows(mask);
  opacity_logits.keep_rows(mask);
  features.keep_rows(mask);
}

PipelineState::PipelineState(const Config& config, const Intrinsics& intrinsics)
    : cfg(config),
      intr(intrinsics),
      store(config.hash_capacity, config.query_dim),
      dict(),
      history(config.history_capacity),
      rng(config.seed) {
  cfg.validate();
  active.map.resize(0, cfg.query_dim);
  dict.init(cfg.dict_size, cfg.query_dim, cfg.embed_dim);
  dict.temperature = cfg.softmax_temp;
  // Small random projection so attention logits are informative from the
  // first step.
  std::normal_distribution<float> gauss(0.0f, 0.1f);
  for (Eigen::Index i = 0; i < dict.proj.size(); ++i) dict.proj.data()[i] = gauss(rng);
}

namespace {

void normalize_embedding_rows(EmbeddingSet& e) {
  for (Eigen::Index r = 0; r < e.features.rows(); ++r) {
    const float n = e.features.row(r).norm();
    if (n > 1e-12f) e.features.row(r) /= n;
  }
}

// Dictionary maintenance for dict_init = "random": a streaming reservoir of
// observed embeddings. With learning enabled the reservoir only fills empty
// atoms (later refinement must survive); frozen dictionaries keep resampling
// so the atoms stay a uniform draw over everything seen.
void random_dict_update(PipelineState& st, const MatX<float>& batch) {
  const Eigen::Index k = st.dict.atom_count();
  for (Eigen::Index r = 0; r < batch.rows(); ++r) {
    ++st.reservoir_seen;
    Eigen::Index slot = -1;
    if (st.reservoir_seen <= k) {
      slot = st.reservoir_seen - 1;
    } else if (!st.cfg.dict_learn) {
      std::uniform_int_distribution<int64_t> pick(0, st.reservoir_seen - 1);
      const int64_t j = pick(st.rng);
      if (j < k) slot = Eigen::Index(j);
    }
    if (slot >= 0) {
      st.dict.atoms.row(slot) = batch.row(r);
      st.dict.weights(slot) = 1.0f;
    }
  }
}

struct StateSnapshot {
  ActiveSet active;
  DictionaryState dict;
  MapOptimizer opt;
  float traveled;
  bool have_last_pos;
  Vec3f last_pos;
  int keyframes_processed;
  int64_t peak_active;
  int64_t reservoir_seen;
  bool anchor_initialized;
  MatX<float> persistent_anchor;
  std::mt19937_64 rng;
};

StateSnapshot snapshot(const PipelineState& st) {
  return {st.active,       st.dict,     st.opt,
          st.traveled,     st.have_last_pos, st.last_pos,
          st.keyframes_processed, st.peak_active, st.reservoir_seen,
          st.anchor_initialized,  st.persistent_anchor, st.rng};
}

void restore(PipelineState& st, StateSnapshot&& snap) {
  st.active = std::move(snap.active);
  st.dict = std::move(snap.dict);
  st.opt = std::move(snap.opt);
  st.traveled = snap.traveled;
  st.have_last_pos = snap.have_last_pos;
  st.last_pos = snap.last_pos;
  st.keyframes_processed = snap.keyframes_processed;
  st.peak_active = snap.peak_active;
  st.reservoir_seen = snap.reservoir_seen;
  st.anchor_initialized = snap.anchor_initialized;
  st.persistent_anchor = std::move(snap.persistent_anchor);
  st.rng = snap.rng;
}

KeyframeLog process_keyframe_inner(PipelineState& st, Keyframe&& kf_in) {
  const Config& cfg = st.cfg;
  KeyframeLog row;
  row.frame_index = kf_in.frame_index;

  normalize_embedding_rows(kf_in.embeddings);
  KeyframePtr kf = std::make_shared<const Keyframe>(std::move(kf_in));

  // 1. Dictionary maintenance from the new embeddings.
  if (kf->embeddings.features.rows() > 0) {
    if (cfg.dict_init == "kmeans") {
      stream_kmeans_update<float>(kf->embeddings.features, st.dict, st.rng, cfg.dict_decay);
      st.opt.reset_atom_moments();
    } else {
      random_dict_update(st, kf->embeddings.features);
      st.dict.anchor = st.dict.atoms;
    }
    if (cfg.trust_anchor_persistent) {
      if (!st.anchor_initialized) {
        st.persistent_anchor = st.dict.anchor;
        st.anchor_initialized = true;
      }
      st.dict.anchor = st.persistent_anchor;
    }
  }

  // 2. Batch: the new keyframe plus up to B replayed ones.
  std::vector<KeyframePtr> batch_ptrs = sample_history(st.history, cfg.history_sample, st.rng);
  batch_ptrs.insert(batch_ptrs.begin(), kf);
  std::vector<const Keyframe*> batch;
  for (const auto& p : batch_ptrs) batch.push_back(p.get());

  // 3. Seed new Gaussians where the current map fails to explain the view.
  {
    RenderOutput view = render(st.active.map, kf->pose, st.intr, cfg.num_threads);
    GaussianMap newborns = seed_gaussians(*kf, view, st.intr, cfg, st.rng);
    row.seeded = newborns.size();
    st.active.append_newborns(newborns);
  }

  // 4. Stage I: joint optimization of map, projection and atoms.
  ObjectiveOptions<float> opts;
  opts.threads = cfg.num_threads;
  bool have_loss = false;
  for (int it = 0; it < cfg.stage1_iters; ++it) {
    ObjectiveGrads<float> grads;
    opts.map_grads = true;
    opts.cached_renders = nullptr;
    opts.render_sink = nullptr;
    row.loss = total_objective<float>(st.active.map, st.dict, batch, st.intr, cfg, &grads, opts);
    have_loss = true;
    st.opt.step_map(st.active.map, grads.map, cfg);
    st.opt.step_dict(st.dict, grads.d_proj, grads.d_atoms, cfg, cfg.dict_learn);
    st.active.mark_all_dirty();
  }

  // 5. Stage II: dictionary-only refinement; the map is frozen so renders
  // from the first iteration are reused.
  std::vector<RenderOutputT<float>> cached;
  for (int it = 0; it < cfg.stage2_iters; ++it) {
    ObjectiveGrads<float> grads;
    opts.map_grads = false;
    opts.cached_renders = it == 0 ? nullptr : &cached;
    opts.render_sink = it == 0 ? &cached : nullptr;
    row.loss = total_objective<float>(st.active.map, st.dict, batch, st.intr, cfg, &grads, opts);
    have_loss = true;
    st.opt.step_dict(st.dict, grads.d_proj, grads.d_atoms, cfg, cfg.dict_learn);
  }
  if (!have_loss) {
    opts.map_grads = false;
    opts.cached_renders = nullptr;
    opts.render_sink = nullptr;
    row.loss = total_objective<float>(st.active.map, st.dict, batch, st.intr, cfg, nullptr, opts);
  }

  // 6. History push.
  st.history.push(kf);

  // 7. Travel accumulation and periodic synchronization.
  if (st.have_last_pos) st.traveled += (kf->pose.translation - st.last_pos).norm();
  st.last_pos = kf->pose.translation;
  st.have_last_pos = true;
  if (cfg.local_mapping && should_sync(st.traveled, cfg.sync_distance)) {
    std::vector<uint8_t> kept;
    ActiveSet next = sync(st.store, st.active, kf->pose.translation, cfg.local_radius,
                          cfg.voxel_size, &row.sync, &kept);
    st.opt.keep_map_rows(kept);
    st.active = std::move(next);
    st.traveled = 0;
    row.synced = true;
  }

  ++st.keyframes_processed;
  st.peak_active = std::max(st.peak_active, int64_t(st.active.size()));
  row.active_count = st.active.size();
  row.global_count = st.store.size();
  row.dict_weight_mass = double(st.dict.weights.sum());
  return row;
}

}  // namespace

KeyframeLog process_keyframe(PipelineState& state, Keyframe kf) {
  const auto t0 = std::chrono::steady_clock::now();
  StateSnapshot snap = snapshot(state);
  try {
    KeyframeLog row = process_keyframe_inner(state, std::move(kf));
    row.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return row;
  } catch (...) {
    restore(state, std::move(snap));
    throw;
  }
}

RunResult run_pipeline(PipelineState& state, const DatasetManifest& data,
                       const std::function<void(const KeyframeLog&)>& on_keyframe) {
  RunResult res;
  const auto t0 = std::chrono::steady_clock::now();
  for (int f = 0; f < data.frame_count(); ++f) {
    ++res.frames;
    if (!select_keyframe(f, state.cfg.keyframe_stride)) continue;
    Keyframe kf = load_frame(data, f);
    KeyframeLog row = process_keyframe(state, std::move(kf));
    ++res.keyframes;
    if (on_keyframe) on_keyframe(row);
    res.log.push_back(std::move(row));
  }
  // Final flush: write the whole active set back into the global store.
  if (state.active.size() > 0) {
    std::vector<uint8_t> kept;
    SyncStats stats;
    state.active.mark_all_dirty();
    const Vec3f center = state.have_last_pos ? state.last_pos : Vec3f::Zero();
    ActiveSet next = sync(state.store, state.active, center, state.cfg.local_radius,
                          state.cfg.voxel_size, &stats, &kept);
    state.opt.keep_map_rows(kept);
    state.active = std::move(next);
  }
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  res.keyframes_per_second = res.keyframes > 0 ? res.keyframes / res.wall_seconds : 0.0;
  return res;
}

std::string log_csv_header() {
  return "frame_index,l_rgb,l_ssim,l_depth,l_cos,l_l2,l_trust,total,supervised_rows,seeded,"
         "active_count,global_count,dict_weight_mass,synced,wall_ms";
}

std::string log_csv_row(const KeyframeLog& r) {
  std::ostringstream ss;
  ss.precision(9);
  ss << r.frame_index << ',' << r.loss.l_rgb << ',' << r.loss.l_ssim << ',' << r.loss.l_depth
     << ',' << r.loss.l_cos << ',' << r.loss.l_l2 << ',' << r.loss.l_trust << ',' << r.loss.total
     << ',' << r.loss.supervised_rows << ',' << r.seeded << ',' << r.active_count << ','
     << r.global_count << ',' << r.dict_weight_mass << ',' << (r.synced ? 1 : 0) << ','
     << r.wall_ms;
  return ss.str();
}

}  // namespace latmap
