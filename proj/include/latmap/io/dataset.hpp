#pragma once

#include <string>
#include <vector>

#include "latmap/core/types.hpp"

namespace latmap {

// On-disk dataset layout:
//   <dir>/intrinsics.txt            fx fy cx cy width height
//   <dir>/poses.txt                 one line per frame: index tx ty tz qx qy qz qw
//   <dir>/prototypes.lamt           optional class prototypes ("prototypes" C x d_f)
//   <dir>/frames/frame_%06d.lamt    rgb, depth (u16, 0.25 mm), features,
//                                   assignment, labels, timestamp
struct DatasetManifest {
  std::string dir;
  Intrinsics intrinsics;
  std::vector<Pose> poses;  // camera-to-world, indexed by frame

  int frame_count() const { return int(poses.size()); }
  std::string frame_path(int index) const;
};

constexpr float kDepthQuantum = 0.00025f;  // 0.25 mm per u16 step

DatasetManifest load_manifest(const std::string& dir);

void save_intrinsics(const Intrinsics& intr, const std::string& path);
void save_poses(const std::vector<Pose>& poses, const std::string& path);

// Reads one frame; embeddings/labels may be skipped for photometric-only use.
Keyframe load_frame(const DatasetManifest& manifest, int index, bool want_embeddings = true);
void save_frame(const Keyframe& frame, const std::string& path);

// Optional class prototypes stored beside the frames; empty matrix when the
// file is absent.
MatX<float> load_prototypes(const std::string& dir);

}  // namespace latmap
