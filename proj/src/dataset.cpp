#include "latmap/io/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "latmap/io/tensor_file.hpp"

namespace latmap {

std::string DatasetManifest::frame_path(int index) const {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "frame_%06d.lamt", index);
  return dir + "/frames/" + buf;
}

DatasetManifest load_manifest(const std::string& dir) {
  DatasetManifest m;
  m.dir = dir;

  std::ifstream intr_in(dir + "/intrinsics.txt");
  if (!intr_in) throw std::runtime_error("dataset: cannot open " + dir + "/intrinsics.txt");
  if (!(intr_in >> m.intrinsics.fx >> m.intrinsics.fy >> m.intrinsics.cx >> m.intrinsics.cy >>
        m.intrinsics.width >> m.intrinsics.height))
    throw std::runtime_error("dataset: malformed intrinsics.txt");
  if (!m.intrinsics.valid()) throw std::runtime_error("dataset: invalid intrinsics");

  std::ifstream pose_in(dir + "/poses.txt");
  if (!pose_in) throw std::runtime_error("dataset: cannot open " + dir + "/poses.txt");
  std::string line;
  int expected = 0;
  while (std::getline(pose_in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    int idx;
    float tx, ty, tz, qx, qy, qz, qw;
    if (!(ss >> idx >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
      throw std::runtime_error("dataset: malformed pose line: " + line);
    if (idx != expected)
      throw std::runtime_error("dataset: non-contiguous frame index " + std::to_string(idx));
    ++expected;
    Pose p;
    p.translation = Vec3f(tx, ty, tz);
    p.rotation = Vec4f(qw, qx, qy, qz);
    float n = p.rotation.norm();
    if (!(n > 0)) throw std::runtime_error("dataset: zero quaternion in poses.txt");
    p.rotation /= n;
    m.poses.push_back(p);
  }
  return m;
}

void save_intrinsics(const Intrinsics& intr, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %.9g %d %d\n", double(intr.fx), double(intr.fy),
                double(intr.cx), double(intr.cy), intr.width, intr.height);
  out << buf;
}

void save_poses(const std::vector<Pose>& poses, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (size_t i = 0; i < poses.size(); ++i) {
    const Pose& p = poses[i];
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%zu %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n", i,
                  double(p.translation(0)), double(p.translation(1)), double(p.translation(2)),
                  double(p.rotation(1)), double(p.rotation(2)), double(p.rotation(3)),
                  double(p.rotation(0)));
    out << buf;
  }
}

Keyframe load_frame(const DatasetManifest& manifest, int index, bool want_embeddings) {
  if (index < 0 || index >= manifest.frame_count())
    throw std::out_of_range("dataset: frame index out of range");
  TensorContainer c;
  try {
    c = load_tensor(manifest.frame_path(index));
  } catch (const std::exception& e) {
    throw std::runtime_error("dataset: frame " + std::to_string(index) + ": " + e.what());
  }
  const int h = manifest.intrinsics.height, w = manifest.intrinsics.width;

  Keyframe kf;
  kf.frame_index = index;
  kf.pose = manifest.poses[size_t(index)];
  const std::vector<float> ts = c.get_f32("timestamp");
  kf.timestamp = ts.empty() ? 0.0 : double(ts[0]);

  const std::vector<float> rgb = c.get_f32("rgb");
  if (rgb.size() != size_t(h) * w * 3)
    throw std::runtime_error("dataset: rgb size mismatch in frame " + std::to_string(index));
  kf.rgb = Image(h, w, 3);
  kf.rgb.data = rgb;

  const std::vector<uint16_t> depth_q = c.get_u16("depth");
  if (depth_q.size() != size_t(h) * w)
    throw std::runtime_error("dataset: depth size mismatch in frame " + std::to_string(index));
  kf.depth = Image(h, w, 1);
  for (size_t i = 0; i < depth_q.size(); ++i) kf.depth.data[i] = float(depth_q[i]) * kDepthQuantum;

  if (want_embeddings) {
    const TensorEntry& feat = c.require("features");
    if (feat.dims.size() != 2)
      throw std::runtime_error("dataset: features entry must be 2-D");
    kf.embeddings.features = c.get_matrix("features");
    kf.embeddings.assignment = c.get_i32("assignment");
    if (kf.embeddings.assignment.size() != size_t(h) * w)
      throw std::runtime_error("dataset: assignment size mismatch");
    kf.embeddings.height = h;
    kf.embeddings.width = w;
    for (int32_t a : kf.embeddings.assignment)
      if (a >= kf.embeddings.features.rows())
        throw std::runtime_error("dataset: assignment index out of range");
    if (c.find("labels")) kf.labels = c.get_i32("labels");
  } else {
    kf.embeddings.height = h;
    kf.embeddings.width = w;
    kf.embeddings.assignment.assign(size_t(h) * w, -1);
    kf.embeddings.features.resize(0, 0);
  }
  return kf;
}

void save_frame(const Keyframe& frame, const std::string& path) {
  TensorContainer c;
  const float ts = float(frame.timestamp);
  c.add_f32("timestamp", &ts, {1});
  c.add_f32("rgb", frame.rgb.data.data(),
            {uint64_t(frame.rgb.height), uint64_t(frame.rgb.width), 3});
  std::vector<uint16_t> depth_q(frame.depth.data.size());
  for (size_t i = 0; i < depth_q.size(); ++i) {
    float q = std::round(frame.depth.data[i] / kDepthQuantum);
    depth_q[i] = uint16_t(std::min(65535.0f, std::max(0.0f, q)));
  }
  c.add_u16("depth", depth_q.data(), {uint64_t(frame.depth.height), uint64_t(frame.depth.width)});
  c.add_matrix("features", frame.embeddings.features);
  c.add_i32("assignment", frame.embeddings.assignment.data(),
            {uint64_t(frame.embeddings.height), uint64_t(frame.embeddings.width)});
  if (!frame.labels.empty())
    c.add_i32("labels", frame.labels.data(),
              {uint64_t(frame.embeddings.height), uint64_t(frame.embeddings.width)});
  save_tensor(c, path);
}

MatX<float> load_prototypes(const std::string& dir) {
  const std::string path = dir + "/prototypes.lamt";
  if (!std::filesystem::exists(path)) return MatX<float>();
  return load_tensor(path).get_matrix("prototypes");
}

}  // namespace latmap
