#pragma once

#include "latmap/store/voxel_hash.hpp"

namespace latmap {

// The bounded working subset of the map that optimization touches. Every
// entry either traces back to a store record (origin >= 0) or is a newborn
// awaiting its first writeback.
struct ActiveSet {
  GaussianMap map;
  std::vector<int64_t> origin;  // record index in the store, -1 = newborn
  std::vector<uint8_t> dirty;   // modified since the last writeback
  Vec3f center = Vec3f::Zero();
  float radius = 0;

  Eigen::Index size() const { return map.size(); }

  void append_newborns(const GaussianMap& newborns) {
    map.append(newborns);
    origin.resize(size_t(map.size()), -1);
    dirty.resize(size_t(map.size()), 1);
  }

  void mark_all_dirty() { std::fill(dirty.begin(), dirty.end(), uint8_t(1)); }
};

struct SyncStats {
  int64_t written_back = 0;
  int64_t newborn_inserted = 0;
  int64_t newborn_rejected = 0;
  int64_t pruned = 0;
  int64_t fetched = 0;
};

// All store records within `radius` of `center` as a fresh ActiveSet.
// Equivalent to a linear scan over the stored records.
ActiveSet fetch_local(const VoxelHashStore& store, const Vec3f& center, float radius);

// Two ordered steps: (1) local-to-global writeback — dirty tracked entries
// overwrite their records in place (origin voxel retained), newborns insert
// under the voxel of their optimized position; (2) global-to-local — prune
// out-of-radius entries, then append every in-radius record not already
// present. Returns the new active set, whose rows are the surviving entries
// in their original order followed by the fetched ones; kept_mask (when
// given) marks the surviving input rows.
ActiveSet sync(VoxelHashStore& store, const ActiveSet& active, const Vec3f& center, float radius,
               float voxel_size, SyncStats* stats = nullptr,
               std::vector<uint8_t>* kept_mask = nullptr);

inline bool should_sync(float traveled, float threshold) { return traveled >= threshold; }

}  // namespace latmap
