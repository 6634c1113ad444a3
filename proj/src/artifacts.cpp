#include "latmap/io/artifacts.hpp"

#include <fstream>

#include "latmap/io/tensor_file.hpp"

namespace latmap {
namespace {

void add_soa(TensorContainer& c, const GaussianMap& m) {
  c.add_f32("positions", m.positions.data(), {uint64_t(m.size()), 3});
  c.add_f32("rotations", m.rotations.data(), {uint64_t(m.size()), 4});
  c.add_f32("colors", m.colors.data(), {uint64_t(m.size()), 3});
  c.add_f32("log_scales", m.log_scales.data(), {uint64_t(m.size()), 3});
  c.add_f32("opacity_logits", m.opacity_logits.data(), {uint64_t(m.size())});
  c.add_f32("features", m.features.data(), {uint64_t(m.size()), uint64_t(m.feature_dim())});
}

GaussianMap read_soa(const TensorContainer& c) {
  GaussianMap m;
  const TensorEntry& feat = c.require("features");
  const Eigen::Index n = Eigen::Index(feat.dims.at(0));
  const Eigen::Index ds = Eigen::Index(feat.dims.at(1));
  m.resize(n, ds);
  auto fill = [&](const std::string& name, float* dst, size_t count) {
    const std::vector<float> v = c.get_f32(name);
    if (v.size() != count) throw std::runtime_error("map artifact: size mismatch in " + name);
    std::copy(v.begin(), v.end(), dst);
  };
  fill("positions", m.positions.data(), size_t(n) * 3);
  fill("rotations", m.rotations.data(), size_t(n) * 4);
  fill("colors", m.colors.data(), size_t(n) * 3);
  fill("log_scales", m.log_scales.data(), size_t(n) * 3);
  fill("opacity_logits", m.opacity_logits.data(), size_t(n));
  fill("features", m.features.data(), size_t(n) * size_t(ds));
  return m;
}

}  // namespace

void save_map_store(const VoxelHashStore& store, const std::string& path) {
  TensorContainer c;
  add_soa(c, store.records());
  std::vector<int32_t> keys(size_t(store.size()) * 3);
  for (int64_t i = 0; i < store.size(); ++i) {
    keys[size_t(i) * 3 + 0] = store.record_key(i).ix;
    keys[size_t(i) * 3 + 1] = store.record_key(i).iy;
    keys[size_t(i) * 3 + 2] = store.record_key(i).iz;
  }
  c.add_i32("voxel_keys", keys.data(), {uint64_t(store.size()), 3});
  save_tensor(c, path);
}

LoadedMap load_map_store(const std::string& path) {
  const TensorContainer c = load_tensor(path);
  LoadedMap out;
  out.map = read_soa(c);
  const std::vector<int32_t> keys = c.get_i32("voxel_keys");
  out.keys.resize(keys.size() / 3);
  for (size_t i = 0; i < out.keys.size(); ++i)
    out.keys[i] = VoxelKey{keys[i * 3], keys[i * 3 + 1], keys[i * 3 + 2]};
  return out;
}

void save_store_counters(const VoxelHashStore& store, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const auto& s = store.stats();
  out << "{\"records\":" << store.size() << ",\"capacity\":" << store.capacity()
      << ",\"inserted\":" << s.inserted << ",\"updated\":" << s.updated
      << ",\"rejected_duplicate\":" << s.rejected_duplicate
      << ",\"rejected_overflow\":" << s.rejected_overflow << ",\"probe_steps\":" << s.probe_steps
      << "}\n";
}

void save_dictionary(const DictionaryState& dict, const std::string& path) {
  TensorContainer c;
  c.add_matrix("atoms", dict.atoms);
  c.add_matrix("anchor", dict.anchor);
  c.add_matrix("projection", dict.proj);
  c.add_vector("weights", dict.weights);
  const float temp = dict.temperature;
  c.add_f32("temperature", &temp, {1});
  save_tensor(c, path);
}

DictionaryState load_dictionary(const std::string& path) {
  const TensorContainer c = load_tensor(path);
  DictionaryState d;
  d.atoms = c.get_matrix("atoms");
  d.anchor = c.get_matrix("anchor");
  d.proj = c.get_matrix("projection");
  d.weights = c.get_vector("weights");
  d.temperature = c.get_f32("temperature").at(0);
  return d;
}

}  // namespace latmap
