#pragma once

#include <string>

#include "latmap/dict/dictionary.hpp"
#include "latmap/store/voxel_hash.hpp"

namespace latmap {

// Global map dump: the dense record pool as named tensors plus the voxel
// keys. Counters go to a JSON-lines sidecar next to it.
void save_map_store(const VoxelHashStore& store, const std::string& path);

struct LoadedMap {
  GaussianMap map;
  std::vector<VoxelKey> keys;
};
LoadedMap load_map_store(const std::string& path);

void save_store_counters(const VoxelHashStore& store, const std::string& path);

void save_dictionary(const DictionaryState& dict, const std::string& path);
DictionaryState load_dictionary(const std::string& path);

}  // namespace latmap
