#include "latmap/store/voxel_hash.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace latmap {

VoxelKey voxel_of(const Vec3f& p, float voxel_size) {
  if (!(voxel_size > 0)) throw std::invalid_argument("voxel_of: voxel_size must be > 0");
  VoxelKey k;
  k.ix = int32_t(std::floor(double(p(0)) / double(voxel_size)));
  k.iy = int32_t(std::floor(double(p(1)) / double(voxel_size)));
  k.iz = int32_t(std::floor(double(p(2)) / double(voxel_size)));
  return k;
}

int64_t hash_voxel(const VoxelKey& v, int64_t capacity) {
  if (capacity <= 0) throw std::invalid_argument("hash_voxel: capacity must be > 0");
  const uint32_t h = uint32_t(v.ix) * 73856093u ^ uint32_t(v.iy) * 19349663u ^
                     uint32_t(v.iz) * 83492791u;
  return int64_t(uint64_t(h) % uint64_t(capacity));
}

VoxelHashStore::VoxelHashStore(int64_t capacity, int query_dim)
    : capacity_(capacity), query_dim_(query_dim) {
  if (capacity <= 0) throw std::invalid_argument("VoxelHashStore: capacity must be > 0");
  slots_.resize(size_t(capacity));
  pool_.resize(0, query_dim);
}

// Walks the probe chain. Returns the slot holding the key, or -1. When
// for_insert is set, *free_slot receives the first free slot in the chain
// (-1 if the whole chain is occupied by foreign keys).
int64_t VoxelHashStore::probe(const VoxelKey& key, bool for_insert, int64_t* free_slot) const {
  if (free_slot) *free_slot = -1;
  const int64_t start = hash_voxel(key, capacity_);
  const int limit = int(std::min<int64_t>(kProbeLimit, capacity_));
  for (int i = 0; i < limit; ++i) {
    const int64_t s = (start + i) % capacity_;
    const Slot& slot = slots_[size_t(s)];
    ++stats_.probe_steps;
    if (slot.record < 0) {
      if (for_insert && free_slot && *free_slot < 0) *free_slot = s;
      return -1;  // chain ends at the first free slot
    }
    if (slot.key == key) return s;
  }
  return -1;
}

int64_t VoxelHashStore::insert(const VoxelKey& key, const GaussianPrimitive& g) {
  if (g.feature.size() != query_dim_)
    throw std::invalid_argument("VoxelHashStore::insert: feature dimension mismatch");
  int64_t free_slot = -1;
  const int64_t hit = probe(key, true, &free_slot);
  if (hit >= 0) {
    ++stats_.rejected_duplicate;  // one record per voxel
    return -1;
  }
  if (free_slot < 0) {
    ++stats_.rejected_overflow;
    return -1;
  }
  pool_.append(g);
  pool_keys_.push_back(key);
  slots_[size_t(free_slot)].record = pool_.size() - 1;
  slots_[size_t(free_slot)].key = key;
  ++stats_.inserted;
  return pool_.size() - 1;
}

bool VoxelHashStore::update(const VoxelKey& key, const GaussianPrimitive& g) {
  const int64_t hit = probe(key, false, nullptr);
  if (hit < 0) return false;
  pool_.set(slots_[size_t(hit)].record, g);
  ++stats_.updated;
  return true;
}

int64_t VoxelHashStore::find(const VoxelKey& key) const {
  const int64_t hit = probe(key, false, nullptr);
  return hit < 0 ? -1 : slots_[size_t(hit)].record;
}

bool VoxelHashStore::check_unique_keys() const {
  std::vector<VoxelKey> occupied;
  occupied.reserve(size_t(pool_.size()));
  for (const Slot& s : slots_)
    if (s.record >= 0) occupied.push_back(s.key);
  std::sort(occupied.begin(), occupied.end(), [](const VoxelKey& a, const VoxelKey& b) {
    if (a.ix != b.ix) return a.ix < b.ix;
    if (a.iy != b.iy) return a.iy < b.iy;
    return a.iz < b.iz;
  });
  for (size_t i = 1; i < occupied.size(); ++i)
    if (occupied[i] == occupied[i - 1]) return false;
  return true;
}

VoxelHashStore::Stats insert_global(VoxelHashStore& store, const GaussianMap& gaussians,
                                    float voxel_size) {
  const VoxelHashStore::Stats before = store.stats();
  for (Eigen::Index i = 0; i < gaussians.size(); ++i) {
    const GaussianPrimitive g = gaussians.get(i);
    store.insert(voxel_of(g.position, voxel_size), g);
  }
  VoxelHashStore::Stats delta = store.stats();
  delta.inserted -= before.inserted;
  delta.updated -= before.updated;
  delta.rejected_duplicate -= before.rejected_duplicate;
  delta.rejected_overflow -= before.rejected_overflow;
  delta.probe_steps -= before.probe_steps;
  return delta;
}

}  // namespace latmap
