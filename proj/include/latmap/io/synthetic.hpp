#pragma once

#include <string>
#include <vector>

#include "latmap/core/types.hpp"
#include "latmap/dict/dictionary.hpp"

namespace latmap {

struct GenConfig {
  std::string scene = "rooms";  // rooms | corridor | plane
  int frames = 200;
  int width = 64, height = 48;
  int classes = 8;
  int embed_dim = 64;
  float noise = 0.02f;  // embedding noise sigma per component
  float fov_deg = 70.0f;
  uint64_t seed = 1;
};

// Axis-aligned textured rectangle. `axis` is the normal direction; (ua, va)
// are the two in-plane axes.
struct Surface {
  int axis = 2;
  float offset = 0;
  int ua = 0, va = 1;
  float umin = 0, umax = 0, vmin = 0, vmax = 0;
  int class_id = 0;
  Vec3f base_color = Vec3f::Ones();
};

struct SyntheticScene {
  GenConfig cfg;
  std::vector<Surface> surfaces;
  MatX<float> prototypes;  // classes x embed_dim, near-orthogonal rows
  std::vector<Pose> trajectory;
  Intrinsics intr;
};

struct RayHit {
  bool valid = false;
  float t = 0;  // camera-frame depth when dir has unit z
  int surface = -1;
  Vec3f point = Vec3f::Zero();
};

SyntheticScene build_scene(const GenConfig& cfg);

RayHit raycast(const std::vector<Surface>& surfaces, const Vec3f& origin, const Vec3f& dir);

// Procedural texture of a surface at a world point, in [0,1].
Vec3f surface_color(const Surface& s, const Vec3f& point);

// Full supervision render of one frame: rgb, depth, per-pixel embeddings
// (prototype + noise, normalized), assignment, labels.
Keyframe render_ground_truth(const SyntheticScene& scene, int frame_index);

// Writes the dataset (intrinsics, poses, prototypes, frames) to `out_dir`.
// Deterministic for a fixed config.
void gen_synthetic(const GenConfig& cfg, const std::string& out_dir);

// Gaussian map sampled directly from the ground-truth surfaces plus a
// dictionary whose attention reproduces the class prototypes exactly;
// used to evaluate metrics with learning bypassed.
struct GroundTruthModel {
  GaussianMap map;
  DictionaryState dict;
};
GroundTruthModel ground_truth_model(const SyntheticScene& scene, float spacing, int query_dim);

}  // namespace latmap
