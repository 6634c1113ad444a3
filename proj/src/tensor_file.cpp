#include "latmap/io/tensor_file.hpp"

#include <cstring>
#include <fstream>
#include <set>

namespace latmap {
namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(uint8_t(v));
  out.push_back(uint8_t(v >> 8));
  out.push_back(uint8_t(v >> 16));
  out.push_back(uint8_t(v >> 24));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

struct Reader {
  const uint8_t* data;
  size_t size;
  size_t pos = 0;

  void need(size_t n, const char* what) const {
    if (pos + n > size) throw FormatError(std::string("truncated: ") + what, pos);
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return data[pos++];
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = uint32_t(data[pos]) | uint32_t(data[pos + 1]) << 8 |
                 uint32_t(data[pos + 2]) << 16 | uint32_t(data[pos + 3]) << 24;
    pos += 4;
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(data[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
};

// Payloads are written value-by-value in little-endian order so containers
// read identically on any host.
template <typename T>
void encode_values(std::vector<uint8_t>& out, const T* data, uint64_t count) {
  for (uint64_t i = 0; i < count; ++i) {
    typename std::conditional<sizeof(T) == 4, uint32_t, uint16_t>::type bits;
    std::memcpy(&bits, &data[i], sizeof(T));
    for (size_t b = 0; b < sizeof(T); ++b) out.push_back(uint8_t(bits >> (8 * b)));
  }
}

template <typename T>
std::vector<T> decode_values(const std::vector<uint8_t>& payload) {
  std::vector<T> out(payload.size() / sizeof(T));
  for (size_t i = 0; i < out.size(); ++i) {
    typename std::conditional<sizeof(T) == 4, uint32_t, uint16_t>::type bits = 0;
    for (size_t b = 0; b < sizeof(T); ++b)
      bits |= decltype(bits)(payload[i * sizeof(T) + b]) << (8 * b);
    std::memcpy(&out[i], &bits, sizeof(T));
  }
  return out;
}

}  // namespace

void TensorContainer::add_f32(const std::string& name, const float* data,
                              std::vector<uint64_t> dims) {
  TensorEntry e;
  e.name = name;
  e.dtype = Dtype::kF32;
  e.dims = std::move(dims);
  encode_values(e.payload, data, e.element_count());
  entries.push_back(std::move(e));
}

void TensorContainer::add_u16(const std::string& name, const uint16_t* data,
                              std::vector<uint64_t> dims) {
  TensorEntry e;
  e.name = name;
  e.dtype = Dtype::kU16;
  e.dims = std::move(dims);
  encode_values(e.payload, data, e.element_count());
  entries.push_back(std::move(e));
}

void TensorContainer::add_i32(const std::string& name, const int32_t* data,
                              std::vector<uint64_t> dims) {
  TensorEntry e;
  e.name = name;
  e.dtype = Dtype::kI32;
  e.dims = std::move(dims);
  encode_values(e.payload, data, e.element_count());
  entries.push_back(std::move(e));
}

void TensorContainer::add_matrix(const std::string& name, const MatX<float>& m) {
  add_f32(name, m.data(), {uint64_t(m.rows()), uint64_t(m.cols())});
}

void TensorContainer::add_vector(const std::string& name, const VecX<float>& v) {
  add_f32(name, v.data(), {uint64_t(v.size())});
}

std::vector<float> TensorContainer::get_f32(const std::string& name) const {
  const TensorEntry& e = require(name);
  if (e.dtype != Dtype::kF32) throw std::runtime_error("entry '" + name + "' is not f32");
  return decode_values<float>(e.payload);
}

std::vector<uint16_t> TensorContainer::get_u16(const std::string& name) const {
  const TensorEntry& e = require(name);
  if (e.dtype != Dtype::kU16) throw std::runtime_error("entry '" + name + "' is not u16");
  return decode_values<uint16_t>(e.payload);
}

std::vector<int32_t> TensorContainer::get_i32(const std::string& name) const {
  const TensorEntry& e = require(name);
  if (e.dtype != Dtype::kI32) throw std::runtime_error("entry '" + name + "' is not i32");
  return decode_values<int32_t>(e.payload);
}

MatX<float> TensorContainer::get_matrix(const std::string& name) const {
  const TensorEntry& e = require(name);
  if (e.dims.size() != 2) throw std::runtime_error("entry '" + name + "' is not 2-D");
  const std::vector<float> v = get_f32(name);
  MatX<float> m(Eigen::Index(e.dims[0]), Eigen::Index(e.dims[1]));
  std::memcpy(m.data(), v.data(), v.size() * sizeof(float));
  return m;
}

VecX<float> TensorContainer::get_vector(const std::string& name) const {
  const std::vector<float> v = get_f32(name);
  return Eigen::Map<const VecX<float>>(v.data(), Eigen::Index(v.size()));
}

std::vector<uint8_t> write_tensor(const TensorContainer& container) {
  std::set<std::string> names;
  for (const auto& e : container.entries)
    if (!names.insert(e.name).second)
      throw std::invalid_argument("tensor container: duplicate entry name '" + e.name + "'");

  std::vector<uint8_t> out;
  out.insert(out.end(), {'L', 'A', 'M', 'T'});
  put_u32(out, TensorContainer::kVersion);
  put_u32(out, uint32_t(container.entries.size()));
  for (const auto& e : container.entries) {
    if (e.payload.size() != e.element_count() * dtype_size(e.dtype))
      throw std::invalid_argument("tensor container: payload size mismatch for '" + e.name + "'");
    put_u32(out, uint32_t(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    out.push_back(uint8_t(e.dtype));
    out.push_back(uint8_t(e.dims.size()));
    for (uint64_t d : e.dims) put_u64(out, d);
    out.insert(out.end(), e.payload.begin(), e.payload.end());
  }
  return out;
}

TensorContainer read_tensor(const uint8_t* data, size_t size) {
  Reader r{data, size};
  r.need(4, "magic");
  if (std::memcmp(data, "LAMT", 4) != 0) throw FormatError("bad magic", 0);
  r.pos = 4;
  const uint32_t version = r.u32("version");
  if (version != TensorContainer::kVersion)
    throw FormatError("unsupported version " + std::to_string(version), 4);
  const uint32_t count = r.u32("entry count");

  TensorContainer c;
  std::set<std::string> names;
  for (uint32_t i = 0; i < count; ++i) {
    TensorEntry e;
    const uint32_t name_len = r.u32("name length");
    r.need(name_len, "name");
    e.name.assign(reinterpret_cast<const char*>(data + r.pos), name_len);
    r.pos += name_len;
    if (!names.insert(e.name).second)
      throw FormatError("duplicate entry name '" + e.name + "'", r.pos);
    const uint8_t dt = r.u8("dtype");
    if (dt < 1 || dt > 3) throw FormatError("bad dtype code " + std::to_string(dt), r.pos - 1);
    e.dtype = Dtype(dt);
    const uint8_t ndim = r.u8("ndim");
    uint64_t elems = 1;
    for (uint8_t d = 0; d < ndim; ++d) {
      const uint64_t dim = r.u64("dim");
      if (dim != 0 && elems > UINT64_MAX / dim)
        throw FormatError("dimension overflow", r.pos - 8);
      elems *= dim;
      e.dims.push_back(dim);
    }
    if (elems > UINT64_MAX / dtype_size(e.dtype))
      throw FormatError("payload size overflow", r.pos);
    const uint64_t bytes = elems * dtype_size(e.dtype);
    if (bytes > size - r.pos) throw FormatError("truncated: payload", r.pos);
    e.payload.assign(data + r.pos, data + r.pos + bytes);
    r.pos += size_t(bytes);
    c.entries.push_back(std::move(e));
  }
  if (r.pos != size) throw FormatError("trailing bytes after last entry", r.pos);
  return c;
}

void save_tensor(const TensorContainer& container, const std::string& path) {
  const std::vector<uint8_t> bytes = write_tensor(container);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path);
}

TensorContainer load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot open " + path);
  const std::streamsize n = in.tellg();
  in.seekg(0);
  std::vector<uint8_t> bytes(static_cast<size_t>(n));
  in.read(reinterpret_cast<char*>(bytes.data()), n);
  if (!in) throw std::runtime_error("short read from " + path);
  return read_tensor(bytes.data(), bytes.size());
}

}  // namespace latmap
