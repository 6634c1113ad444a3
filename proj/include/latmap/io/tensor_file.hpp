#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "latmap/core/types.hpp"

namespace latmap {

// Parse/serialize failure; `offset` is the byte position the reader was at.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  size_t offset() const { return offset_; }

 private:
  size_t offset_;
};

enum class Dtype : uint8_t { kF32 = 1, kU16 = 2, kI32 = 3 };

inline size_t dtype_size(Dtype d) {
  switch (d) {
    case Dtype::kF32: return 4;
    case Dtype::kU16: return 2;
    case Dtype::kI32: return 4;
  }
  throw std::invalid_argument("unknown dtype");
}

struct TensorEntry {
  std::string name;
  Dtype dtype = Dtype::kF32;
  std::vector<uint64_t> dims;
  std::vector<uint8_t> payload;  // little-endian, row-major

  uint64_t element_count() const {
    uint64_t n = 1;
    for (uint64_t d : dims) n *= d;
    return n;
  }
};

// Named-tensor container, "LAMT" magic, version 1, little-endian throughout.
// Layout: magic[4] | version u32 | count u32 | entries. Entry: name_len u32 |
// name bytes | dtype u8 | ndim u8 | dims u64[ndim] | payload.
struct TensorContainer {
  static constexpr uint32_t kVersion = 1;
  std::vector<TensorEntry> entries;

  const TensorEntry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
  const TensorEntry& require(const std::string& name) const {
    const TensorEntry* e = find(name);
    if (!e) throw std::runtime_error("tensor container: missing entry '" + name + "'");
    return *e;
  }

  void add_f32(const std::string& name, const float* data, std::vector<uint64_t> dims);
  void add_u16(const std::string& name, const uint16_t* data, std::vector<uint64_t> dims);
  void add_i32(const std::string& name, const int32_t* data, std::vector<uint64_t> dims);
  void add_matrix(const std::string& name, const MatX<float>& m);
  void add_vector(const std::string& name, const VecX<float>& v);

  std::vector<float> get_f32(const std::string& name) const;
  std::vector<uint16_t> get_u16(const std::string& name) const;
  std::vector<int32_t> get_i32(const std::string& name) const;
  MatX<float> get_matrix(const std::string& name) const;
  VecX<float> get_vector(const std::string& name) const;
};

std::vector<uint8_t> write_tensor(const TensorContainer& container);
TensorContainer read_tensor(const uint8_t* data, size_t size);

void save_tensor(const TensorContainer& container, const std::string& path);
TensorContainer load_tensor(const std::string& path);

}  // namespace latmap
