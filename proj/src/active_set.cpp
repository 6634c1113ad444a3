#include "latmap/store/active_set.hpp"

#include <stdexcept>

namespace latmap {

ActiveSet fetch_local(const VoxelHashStore& store, const Vec3f& center, float radius) {
  if (!(radius > 0)) throw std::invalid_argument("fetch_local: radius must be > 0");
  ActiveSet out;
  out.center = center;
  out.radius = radius;
  const GaussianMap& pool = store.records();
  out.map.resize(0, store.query_dim());
  const float r2 = radius * radius;
  std::vector<int64_t> hits;
  for (Eigen::Index i = 0; i < pool.size(); ++i) {
    const float dx = pool.positions(i, 0) - center(0);
    const float dy = pool.positions(i, 1) - center(1);
    const float dz = pool.positions(i, 2) - center(2);
    if (dx * dx + dy * dy + dz * dz <= r2) hits.push_back(i);
  }
  out.map.resize(Eigen::Index(hits.size()), store.query_dim());
  out.origin.resize(hits.size());
  out.dirty.assign(hits.size(), 0);
  for (size_t k = 0; k < hits.size(); ++k) {
    const Eigen::Index i = hits[k];
    out.map.positions.row(Eigen::Index(k)) = pool.positions.row(i);
    out.map.rotations.row(Eigen::Index(k)) = pool.rotations.row(i);
    out.map.colors.row(Eigen::Index(k)) = pool.colors.row(i);
    out.map.log_scales.row(Eigen::Index(k)) = pool.log_scales.row(i);
    out.map.opacity_logits(Eigen::Index(k)) = pool.opacity_logits(i);
    out.map.features.row(Eigen::Index(k)) = pool.features.row(i);
    out.origin[k] = hits[k];
  }
  return out;
}

ActiveSet sync(VoxelHashStore& store, const ActiveSet& active, const Vec3f& center, float radius,
               float voxel_size, SyncStats* stats, std::vector<uint8_t>* kept_mask) {
  SyncStats local;
  if (kept_mask) kept_mask->assign(size_t(active.size()), 0);

  // Step 1: local-to-global writeback.
  std::vector<int64_t> resolved(size_t(active.size()), -1);
  for (Eigen::Index i = 0; i < active.size(); ++i) {
    const GaussianPrimitive g = active.map.get(i);
    if (active.origin[size_t(i)] >= 0) {
      resolved[size_t(i)] = active.origin[size_t(i)];
      if (active.dirty[size_t(i)]) {
        // The record keeps its original voxel even if the position drifted
        // across a boundary during optimization.
        store.set_record(active.origin[size_t(i)], g);
        ++local.written_back;
      }
    } else {
      const int64_t rec = store.insert(voxel_of(g.position, voxel_size), g);
      if (rec >= 0) {
        resolved[size_t(i)] = rec;
        ++local.newborn_inserted;
      } else {
        ++local.newborn_rejected;  // duplicate voxel or chain overflow
      }
    }
  }

  // Step 2: global-to-local. Keep in-radius tracked entries, then fetch the
  // rest of the neighborhood without duplication.
  ActiveSet out;
  out.center = center;
  out.radius = radius;
  out.map.resize(0, store.query_dim());
  std::vector<uint8_t> present(size_t(store.size()), 0);
  const float r2 = radius * radius;

  std::vector<Eigen::Index> kept;
  for (Eigen::Index i = 0; i < active.size(); ++i) {
    if (resolved[size_t(i)] < 0) continue;  // rejected newborn drops out
    const float dx = active.map.positions(i, 0) - center(0);
    const float dy = active.map.positions(i, 1) - center(1);
    const float dz = active.map.positions(i, 2) - center(2);
    if (dx * dx + dy * dy + dz * dz <= r2) {
      kept.push_back(i);
      present[size_t(resolved[size_t(i)])] = 1;
      if (kept_mask) (*kept_mask)[size_t(i)] = 1;
    } else {
      ++local.pruned;
    }
  }

  const GaussianMap& pool = store.records();
  std::vector<int64_t> fetched;
  for (Eigen::Index rec = 0; rec < pool.size(); ++rec) {
    if (present[size_t(rec)]) continue;
    const float dx = pool.positions(rec, 0) - center(0);
    const float dy = pool.positions(rec, 1) - center(1);
    const float dz = pool.positions(rec, 2) - center(2);
    if (dx * dx + dy * dy + dz * dz <= r2) fetched.push_back(rec);
  }
  local.fetched = int64_t(fetched.size());

  out.map.resize(Eigen::Index(kept.size() + fetched.size()), store.query_dim());
  out.origin.resize(kept.size() + fetched.size());
  out.dirty.assign(kept.size() + fetched.size(), 0);
  Eigen::Index w = 0;
  for (Eigen::Index i : kept) {
    out.map.positions.row(w) = active.map.positions.row(i);
    out.map.rotations.row(w) = active.map.rotations.row(i);
    out.map.colors.row(w) = active.map.colors.row(i);
    out.map.log_scales.row(w) = active.map.log_scales.row(i);
    out.map.opacity_logits(w) = active.map.opacity_logits(i);
    out.map.features.row(w) = active.map.features.row(i);
    out.origin[size_t(w)] = resolved[size_t(i)];
    ++w;
  }
  for (int64_t rec : fetched) {
    out.map.positions.row(w) = pool.positions.row(rec);
    out.map.rotations.row(w) = pool.rotations.row(rec);
    out.map.colors.row(w) = pool.colors.row(rec);
    out.map.log_scales.row(w) = pool.log_scales.row(rec);
    out.map.opacity_logits(w) = pool.opacity_logits(rec);
    out.map.features.row(w) = pool.features.row(rec);
    out.origin[size_t(w)] = rec;
    ++w;
  }

  if (stats) *stats = local;
  return out;
}

}  // namespace latmap
