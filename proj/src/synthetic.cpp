#include "latmap/io/synthetic.hpp"

#include <cmath>
#include <filesystem>
#include <random>
#include <stdexcept>

#include "latmap/core/se3.hpp"
#include "latmap/io/dataset.hpp"
#include "latmap/io/tensor_file.hpp"

namespace latmap {
namespace {

constexpr float kRayNear = 0.05f;

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

Vec3f palette(int i, int n) {
  // evenly spaced hues, kept away from full saturation
  const float h = float(i) / float(std::max(1, n)) * 6.0f;
  const int k = int(h) % 6;
  const float f = h - std::floor(h);
  const float lo = 0.25f, hi = 0.85f;
  const float q = hi - (hi - lo) * f, t = lo + (hi - lo) * f;
  switch (k) {
    case 0: return {hi, t, lo};
    case 1: return {q, hi, lo};
    case 2: return {lo, hi, t};
    case 3: return {lo, q, hi};
    case 4: return {t, lo, hi};
    default: return {hi, lo, q};
  }
}

void add_box(std::vector<Surface>& out, const Vec3f& lo, const Vec3f& hi, int class_id,
             const Vec3f& color) {
  for (int axis = 0; axis < 3; ++axis) {
    const int ua = (axis + 1) % 3, va = (axis + 2) % 3;
    for (int side = 0; side < 2; ++side) {
      Surface s;
      s.axis = axis;
      s.offset = side ? hi(axis) : lo(axis);
      s.ua = ua;
      s.va = va;
      s.umin = lo(ua);
      s.umax = hi(ua);
      s.vmin = lo(va);
      s.vmax = hi(va);
      s.class_id = class_id;
      s.base_color = color;
      out.push_back(s);
    }
  }
}

Surface make_rect(int axis, float offset, int ua, float umin, float umax, int va, float vmin,
                  float vmax, int class_id, const Vec3f& color) {
  Surface s;
  s.axis = axis;
  s.offset = offset;
  s.ua = ua;
  s.umin = umin;
  s.umax = umax;
  s.va = va;
  s.vmin = vmin;
  s.vmax = vmax;
  s.class_id = class_id;
  s.base_color = color;
  return s;
}

Pose yaw_pose(const Vec3f& position, float yaw) {
  Pose p;
  p.translation = position;
  p.rotation = Vec4f(std::cos(yaw / 2), 0, std::sin(yaw / 2), 0);
  return p;
}

MatX<float> make_prototypes(int classes, int dim, std::mt19937_64& rng) {
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  MatX<float> p(classes, dim);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = gauss(rng);
  // Gram-Schmidt: exactly orthonormal rows (pairwise cosine 0).
  for (int i = 0; i < classes; ++i) {
    for (int j = 0; j < i; ++j) p.row(i) -= p.row(i).dot(p.row(j)) * p.row(j);
    const float n = p.row(i).norm();
    if (n < 1e-6f) throw std::runtime_error("prototype orthogonalization degenerate");
    p.row(i) /= n;
  }
  return p;
}

}  // namespace

Vec3f surface_color(const Surface& s, const Vec3f& point) {
  const float u = point(s.ua), v = point(s.va);
  const int cu = int(std::floor(u / 0.25f)), cv = int(std::floor(v / 0.25f));
  const float checker = ((cu + cv) & 1) ? 1.0f : 0.72f;
  const float ramp = 0.06f * (u - std::floor(u));
  Vec3f c = s.base_color * checker + Vec3f::Constant(ramp);
  return c.cwiseMin(1.0f).cwiseMax(0.0f);
}

RayHit raycast(const std::vector<Surface>& surfaces, const Vec3f& origin, const Vec3f& dir) {
  RayHit best;
  float best_t = std::numeric_limits<float>::max();
  for (size_t i = 0; i < surfaces.size(); ++i) {
    const Surface& s = surfaces[i];
    const float denom = dir(s.axis);
    if (std::abs(denom) < 1e-12f) continue;
    const float t = (s.offset - origin(s.axis)) / denom;
    if (t < kRayNear || t >= best_t) continue;
    const Vec3f p = origin + t * dir;
    if (p(s.ua) < s.umin || p(s.ua) > s.umax || p(s.va) < s.vmin || p(s.va) > s.vmax) continue;
    best.valid = true;
    best.t = t;
    best.surface = int(i);
    best.point = p;
    best_t = t;
  }
  return best;
}

SyntheticScene build_scene(const GenConfig& cfg) {
  if (cfg.classes < 2) throw std::invalid_argument("build_scene: need at least 2 classes");
  SyntheticScene scene;
  scene.cfg = cfg;

  std::mt19937_64 rng(cfg.seed);
  scene.prototypes = make_prototypes(cfg.classes, cfg.embed_dim, rng);

  scene.intr.width = cfg.width;
  scene.intr.height = cfg.height;
  scene.intr.fx = scene.intr.fy =
      0.5f * float(cfg.width) / std::tan(cfg.fov_deg * float(M_PI) / 360.0f);
  scene.intr.cx = float(cfg.width) / 2;
  scene.intr.cy = float(cfg.height) / 2;

  // World axes follow the camera at identity yaw: x right, y down, z forward.
  const int kFloor = 0, kWall = 1;
  const Vec3f floor_color = palette(0, cfg.classes);
  const Vec3f wall_color = palette(1, cfg.classes);

  if (cfg.scene == "plane") {
    scene.surfaces.push_back(
        make_rect(2, 2.0f, 0, -2.0f, 2.0f, 1, -1.5f, 1.5f, kFloor, floor_color));
    for (int f = 0; f < cfg.frames; ++f)
      scene.trajectory.push_back(yaw_pose(Vec3f(0, 0, 0), 0.0f));
    return scene;
  }

  if (cfg.scene == "rooms") {
    const float x_lim = 2.0f, y_floor = 1.0f, y_ceil = -1.0f, z0 = 0.0f, z1 = 8.0f;
    // floor / ceiling
    scene.surfaces.push_back(
        make_rect(1, y_floor, 0, -x_lim, x_lim, 2, z0, z1, kFloor, floor_color));
    scene.surfaces.push_back(
        make_rect(1, y_ceil, 0, -x_lim, x_lim, 2, z0, z1, kWall, wall_color * 0.9f));
    // outer walls
    scene.surfaces.push_back(
        make_rect(0, -x_lim, 2, z0, z1, 1, y_ceil, y_floor, kWall, wall_color));
    scene.surfaces.push_back(
        make_rect(0, x_lim, 2, z0, z1, 1, y_ceil, y_floor, kWall, wall_color));
    scene.surfaces.push_back(
        make_rect(2, z0, 0, -x_lim, x_lim, 1, y_ceil, y_floor, kWall, wall_color));
    scene.surfaces.push_back(
        make_rect(2, z1, 0, -x_lim, x_lim, 1, y_ceil, y_floor, kWall, wall_color));
    // partition with a doorway at x in [-0.6, 0.6]
    scene.surfaces.push_back(
        make_rect(2, 4.0f, 0, -x_lim, -0.6f, 1, y_ceil, y_floor, kWall, wall_color));
    scene.surfaces.push_back(
        make_rect(2, 4.0f, 0, 0.6f, x_lim, 1, y_ceil, y_floor, kWall, wall_color));

    // furniture boxes, one class each
    const int n_boxes = cfg.classes - 2;
    for (int b = 0; b < n_boxes; ++b) {
      const float zc = 1.2f + 5.8f * float(b) / float(std::max(1, n_boxes - 1));
      const float xc = (b % 2 == 0) ? -1.1f : 1.1f;
      const float h = 0.45f + 0.12f * float(b % 3);
      const float half = 0.28f + 0.05f * float(b % 2);
      add_box(scene.surfaces, Vec3f(xc - half, y_floor - h, zc - half),
              Vec3f(xc + half, y_floor, zc + half), 2 + b, palette(2 + b, cfg.classes));
    }

    for (int f = 0; f < cfg.frames; ++f) {
      const float s = float(f) / float(std::max(1, cfg.frames - 1));
      const float z = 0.6f + 6.2f * s;
      const float x = 0.45f * std::sin(s * 4.0f * float(M_PI));
      const float yaw = 0.35f * std::sin(s * 6.0f * float(M_PI));
      scene.trajectory.push_back(yaw_pose(Vec3f(x, 0.0f, z), yaw));
    }
    return scene;
  }

  if (cfg.scene == "corridor") {
    const float x_lim = 1.0f, y_floor = 1.0f, y_ceil = -1.0f, z0 = 0.0f, z1 = 26.0f;
    scene.surfaces.push_back(
        make_rect(1, y_floor, 0, -x_lim, x_lim, 2, z0, z1, kFloor, floor_color));
    scene.surfaces.push_back(
        make_rect(1, y_ceil, 0, -x_lim, x_lim, 2, z0, z1, kWall, wall_color * 0.9f));
    scene.surfaces.push_back(
        make_rect(0, -x_lim, 2, z0, z1, 1, y_ceil, y_floor, kWall, wall_color));
    scene.surfaces.push_back(
        make_rect(0, x_lim, 2, z0, z1, 1, y_ceil, y_floor, kWall, wall_color));
    scene.surfaces.push_back(
        make_rect(2, z0, 0, -x_lim, x_lim, 1, y_ceil, y_floor, kWall, wall_color));
    scene.surfaces.push_back(
        make_rect(2, z1, 0, -x_lim, x_lim, 1, y_ceil, y_floor, kWall, wall_color));
    // partitions with alternating doorways block long sightlines
    for (int p = 1; p <= 4; ++p) {
      const float z = 5.0f * float(p);
      if (p % 2 == 1)
        scene.surfaces.push_back(
            make_rect(2, z, 0, -x_lim, 0.15f, 1, y_ceil, y_floor, kWall, wall_color));
      else
        scene.surfaces.push_back(
            make_rect(2, z, 0, -0.15f, x_lim, 1, y_ceil, y_floor, kWall, wall_color));
    }
    // boxes along the corridor cycle through the remaining classes
    const int n_box_classes = cfg.classes - 2;
    int b = 0;
    for (float zc = 1.4f; zc < z1 - 1.0f; zc += 1.8f, ++b) {
      const float xc = (b % 2 == 0) ? -0.72f : 0.72f;
      if (std::abs(std::fmod(zc, 5.0f)) < 0.6f) continue;  // keep doorways clear
      const float h = 0.4f + 0.1f * float(b % 3);
      add_box(scene.surfaces, Vec3f(xc - 0.2f, y_floor - h, zc - 0.2f),
              Vec3f(xc + 0.2f, y_floor, zc + 0.2f), 2 + (b % n_box_classes),
              palette(2 + (b % n_box_classes), cfg.classes));
    }

    for (int f = 0; f < cfg.frames; ++f) {
      const float s = float(f) / float(std::max(1, cfg.frames - 1));
      const float z = 0.6f + (z1 - 2.2f - 0.6f) * s;
      // weave through the doorways
      const float phase = std::fmod(z, 10.0f);
      float x = 0.0f;
      if (phase > 3.5f && phase < 6.5f) x = 0.45f * std::sin((phase - 3.5f) / 3.0f * float(M_PI));
      if (phase > 8.5f || phase < 1.5f)
        x = -0.45f * std::sin((std::fmod(phase + 1.5f, 10.0f)) / 3.0f * float(M_PI));
      const float yaw = 0.25f * std::sin(s * 10.0f * float(M_PI));
      scene.trajectory.push_back(yaw_pose(Vec3f(x, 0.0f, z), yaw));
    }
    return scene;
  }

  throw std::invalid_argument("build_scene: unknown scene '" + cfg.scene + "'");
}

Keyframe render_ground_truth(const SyntheticScene& scene, int frame_index) {
  const Intrinsics& intr = scene.intr;
  const Pose& pose = scene.trajectory.at(size_t(frame_index));
  const Mat3<float> rot_wc = quat_to_rot(pose.rotation);

  Keyframe kf;
  kf.frame_index = frame_index;
  kf.timestamp = double(frame_index) / 30.0;
  kf.pose = pose;
  kf.rgb = Image(intr.height, intr.width, 3);
  kf.depth = Image(intr.height, intr.width, 1);
  kf.labels.assign(size_t(intr.height) * intr.width, -1);
  kf.embeddings.height = intr.height;
  kf.embeddings.width = intr.width;
  kf.embeddings.assignment.assign(size_t(intr.height) * intr.width, -1);

  std::mt19937_64 rng(splitmix64(scene.cfg.seed ^ (0x517CC1B727220A95ull * uint64_t(frame_index + 1))));
  std::normal_distribution<float> gauss(0.0f, 1.0f);

  struct PixelHit {
    int64_t pix;
    int class_id;
  };
  std::vector<PixelHit> hits;
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      const Vec3f dir_cam((float(x) - intr.cx) / intr.fx, (float(y) - intr.cy) / intr.fy, 1.0f);
      const Vec3f dir = rot_wc * dir_cam;
      const RayHit hit = raycast(scene.surfaces, pose.translation, dir);
      if (!hit.valid) continue;
      const Surface& s = scene.surfaces[size_t(hit.surface)];
      const Vec3f c = surface_color(s, hit.point);
      kf.rgb.at(y, x, 0) = c(0);
      kf.rgb.at(y, x, 1) = c(1);
      kf.rgb.at(y, x, 2) = c(2);
      kf.depth.at(y, x) = hit.t;  // dir has unit camera z, so t is depth
      kf.labels[size_t(y) * intr.width + x] = s.class_id;
      hits.push_back({int64_t(y) * intr.width + x, s.class_id});
    }
  }

  kf.embeddings.features.setZero(Eigen::Index(hits.size()), scene.cfg.embed_dim);
  for (size_t r = 0; r < hits.size(); ++r) {
    kf.embeddings.assignment[size_t(hits[r].pix)] = int32_t(r);
    VecX<float> e = scene.prototypes.row(hits[r].class_id).transpose();
    for (Eigen::Index c = 0; c < e.size(); ++c) e(c) += scene.cfg.noise * gauss(rng);
    const float n = e.norm();
    kf.embeddings.features.row(Eigen::Index(r)) = (e / std::max(n, 1e-8f)).transpose();
  }
  return kf;
}

void gen_synthetic(const GenConfig& cfg, const std::string& out_dir) {
  const SyntheticScene scene = build_scene(cfg);
  namespace fs = std::filesystem;
  fs::create_directories(out_dir + "/frames");

  save_intrinsics(scene.intr, out_dir + "/intrinsics.txt");
  save_poses(scene.trajectory, out_dir + "/poses.txt");

  TensorContainer proto;
  proto.add_matrix("prototypes", scene.prototypes);
  const float meta[2] = {scene.cfg.noise, float(scene.cfg.classes)};
  proto.add_f32("meta_noise_classes", meta, {2});
  save_tensor(proto, out_dir + "/prototypes.lamt");

  for (int f = 0; f < cfg.frames; ++f) {
    const Keyframe kf = render_ground_truth(scene, f);
    char buf[40];
    std::snprintf(buf, sizeof(buf), "frame_%06d.lamt", f);
    save_frame(kf, out_dir + "/frames/" + buf);
  }
}

GroundTruthModel ground_truth_model(const SyntheticScene& scene, float spacing, int query_dim) {
  if (query_dim < scene.cfg.classes)
    throw std::invalid_argument("ground_truth_model: query_dim must cover the classes");
  GroundTruthModel m;
  const int df = scene.cfg.embed_dim;
  m.dict.init(scene.cfg.classes, query_dim, df);
  m.dict.atoms = scene.prototypes;
  m.dict.anchor = scene.prototypes;
  m.dict.proj.topRows(scene.cfg.classes) = scene.prototypes;
  m.dict.weights.setOnes();

  const float kSaturate = 50.0f;  // query scale; saturates the attention row
  std::vector<GaussianPrimitive> prims;
  for (const Surface& s : scene.surfaces) {
    for (float u = s.umin + spacing / 2; u <= s.umax; u += spacing) {
      for (float v = s.vmin + spacing / 2; v <= s.vmax; v += spacing) {
        GaussianPrimitive g;
        g.position(s.axis) = s.offset;
        g.position(s.ua) = u;
        g.position(s.va) = v;
        g.rotation = Vec4f(1, 0, 0, 0);
        g.color = surface_color(s, g.position);
        g.log_scale(s.axis) = std::log(1e-3f);
        g.log_scale(s.ua) = std::log(spacing * 0.6f);
        g.log_scale(s.va) = std::log(spacing * 0.6f);
        g.opacity_logit = 6.0f;
        g.feature = VecX<float>::Zero(query_dim);
        g.feature(s.class_id) = kSaturate;
        prims.push_back(g);
      }
    }
  }
  m.map.resize(Eigen::Index(prims.size()), query_dim);
  for (size_t i = 0; i < prims.size(); ++i) m.map.set(Eigen::Index(i), prims[i]);
  return m;
}

}  // namespace latmap
