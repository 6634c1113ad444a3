#pragma once

#include <cstdint>
#include <vector>

#include "latmap/core/types.hpp"

namespace latmap {

struct VoxelKey {
  int32_t ix = 0, iy = 0, iz = 0;
  bool operator==(const VoxelKey& o) const { return ix == o.ix && iy == o.iy && iz == o.iz; }
};

// Componentwise floor(p / voxel_size).
VoxelKey voxel_of(const Vec3f& p, float voxel_size);

// Spatial hash with wrapping 32-bit multiplies; result in [0, capacity).
int64_t hash_voxel(const VoxelKey& v, int64_t capacity);

// Fixed-capacity open-addressing store mapping voxel keys to Gaussian
// records, at most one record per voxel. Probing is linear with a hard limit;
// overflow is a counted rejection, never a resize. Records live in an
// append-only dense pool, so a record index is a stable handle.
class VoxelHashStore {
 public:
  static constexpr int kProbeLimit = 8;

  struct Stats {
    int64_t inserted = 0;
    int64_t updated = 0;
    int64_t rejected_duplicate = 0;  // voxel already holds a record
    int64_t rejected_overflow = 0;   // probe chain exhausted
    int64_t probe_steps = 0;
  };

  VoxelHashStore(int64_t capacity, int query_dim);

  // Insert-if-absent. Returns the record index, or -1 on rejection.
  int64_t insert(const VoxelKey& key, const GaussianPrimitive& g);
  // Keyed overwrite of an existing record; false when the key is absent.
  bool update(const VoxelKey& key, const GaussianPrimitive& g);
  // Record index stored under the key, or -1.
  int64_t find(const VoxelKey& key) const;

  GaussianPrimitive record(int64_t index) const { return pool_.get(index); }
  void set_record(int64_t index, const GaussianPrimitive& g) { pool_.set(index, g); }
  const VoxelKey& record_key(int64_t index) const { return pool_keys_[size_t(index)]; }

  int64_t size() const { return pool_.size(); }
  int64_t capacity() const { return capacity_; }
  int query_dim() const { return query_dim_; }
  const GaussianMap& records() const { return pool_; }
  const std::vector<VoxelKey>& keys() const { return pool_keys_; }
  const Stats& stats() const { return stats_; }

  // Scans all slots and verifies that no two occupied slots share a key.
  bool check_unique_keys() const;

 private:
  struct Slot {
    int64_t record = -1;  // -1 = free
    VoxelKey key;
  };
  int64_t probe(const VoxelKey& key, bool for_insert, int64_t* free_slot) const;

  int64_t capacity_;
  int query_dim_;
  std::vector<Slot> slots_;
  GaussianMap pool_;
  std::vector<VoxelKey> pool_keys_;
  mutable Stats stats_;
};

// Batch insertion of new primitives keyed by their positions.
VoxelHashStore::Stats insert_global(VoxelHashStore& store, const GaussianMap& gaussians,
                                    float voxel_size);

}  // namespace latmap
