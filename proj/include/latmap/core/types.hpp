#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <memory>
#include <vector>

namespace latmap {

template <typename T> using Vec2 = Eigen::Matrix<T, 2, 1>;
template <typename T> using Vec3 = Eigen::Matrix<T, 3, 1>;
template <typename T> using Vec4 = Eigen::Matrix<T, 4, 1>;
template <typename T> using Mat2 = Eigen::Matrix<T, 2, 2>;
template <typename T> using Mat3 = Eigen::Matrix<T, 3, 3>;
template <typename T> using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;
// Row-major so one row == one primitive / one feature vector.
template <typename T> using MatX2 = Eigen::Matrix<T, Eigen::Dynamic, 2, Eigen::RowMajor>;
template <typename T> using MatX3 = Eigen::Matrix<T, Eigen::Dynamic, 3, Eigen::RowMajor>;
template <typename T> using MatX4 = Eigen::Matrix<T, Eigen::Dynamic, 4, Eigen::RowMajor>;
template <typename T> using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Vec3f = Vec3<float>;
using Vec4f = Vec4<float>;

// Rigid body transform, quaternion stored (w, x, y, z). For camera poses this
// is the camera-to-world transform: p_world = R * p_camera + t.
template <typename T>
struct PoseT {
  Vec4<T> rotation{T(1), T(0), T(0), T(0)};
  Vec3<T> translation{T(0), T(0), T(0)};

  template <typename U>
  PoseT<U> cast() const {
    return PoseT<U>{rotation.template cast<U>(), translation.template cast<U>()};
  }
};
using Pose = PoseT<float>;

struct Intrinsics {
  float fx = 0, fy = 0;
  float cx = 0, cy = 0;
  int width = 0, height = 0;

  bool valid() const {
    return fx > 0 && fy > 0 && width > 0 && height > 0 && cx >= 0 && cx < float(width) &&
           cy >= 0 && cy < float(height);
  }
};

// Dense row-major image, channel-interleaved.
template <typename T>
struct ImageT {
  int height = 0, width = 0, channels = 1;
  std::vector<T> data;

  ImageT() = default;
  ImageT(int h, int w, int c, T fill = T(0)) : height(h), width(w), channels(c) {
    data.assign(size_t(h) * w * c, fill);
  }

  T& at(int y, int x, int c = 0) { return data[(size_t(y) * width + x) * channels + c]; }
  const T& at(int y, int x, int c = 0) const {
    return data[(size_t(y) * width + x) * channels + c];
  }
  size_t size() const { return data.size(); }
  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  template <typename U>
  ImageT<U> cast() const {
    ImageT<U> out(height, width, channels);
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = U(data[i]);
    return out;
  }
};
using Image = ImageT<float>;

// One Gaussian primitive in storage form: scale is kept as log-scale and
// opacity as a pre-sigmoid logit so unconstrained gradient steps keep the
// decoded attributes valid.
struct GaussianPrimitive {
  Vec3f position = Vec3f::Zero();
  Vec4f rotation{1, 0, 0, 0};
  Vec3f color = Vec3f::Zero();
  Vec3f log_scale = Vec3f::Zero();
  float opacity_logit = 0;
  VecX<float> feature;
};

// Structure-of-arrays store of Gaussian primitives. All arrays share the same
// row count; features is N x query_dim.
template <typename T>
struct GaussianMapT {
  MatX3<T> positions;
  MatX4<T> rotations;
  MatX3<T> colors;
  MatX3<T> log_scales;
  VecX<T> opacity_logits;
  MatX<T> features;

  GaussianMapT() = default;
  explicit GaussianMapT(int query_dim) { resize(0, query_dim); }

  Eigen::Index size() const { return positions.rows(); }
  Eigen::Index feature_dim() const { return features.cols(); }

  void resize(Eigen::Index n, Eigen::Index query_dim) {
    positions.setZero(n, 3);
    rotations.setZero(n, 4);
    colors.setZero(n, 3);
    log_scales.setZero(n, 3);
    opacity_logits.setZero(n);
    features.setZero(n, query_dim);
    for (Eigen::Index i = 0; i < n; ++i) rotations(i, 0) = T(1);
  }

  GaussianPrimitive get(Eigen::Index i) const {
    GaussianPrimitive g;
    g.position = positions.row(i).transpose().template cast<float>();
    g.rotation = rotations.row(i).transpose().template cast<float>();
    g.color = colors.row(i).transpose().template cast<float>();
    g.log_scale = log_scales.row(i).transpose().template cast<float>();
    g.opacity_logit = float(opacity_logits(i));
    g.feature = features.row(i).transpose().template cast<float>();
    return g;
  }

  void set(Eigen::Index i, const GaussianPrimitive& g) {
    positions.row(i) = g.position.transpose().template cast<T>();
    rotations.row(i) = g.rotation.transpose().template cast<T>();
    colors.row(i) = g.color.transpose().template cast<T>();
    log_scales.row(i) = g.log_scale.transpose().template cast<T>();
    opacity_logits(i) = T(g.opacity_logit);
    features.row(i) = g.feature.transpose().template cast<T>();
  }

  void append(const GaussianPrimitive& g) {
    Eigen::Index n = size();
    Eigen::Index d = features.cols() > 0 ? features.cols() : g.feature.size();
    conservative_resize(n + 1, d);
    set(n, g);
  }

  void append(const GaussianMapT<T>& other) {
    if (other.size() == 0) return;
    Eigen::Index n = size();
    Eigen::Index d = features.cols() > 0 ? features.cols() : other.features.cols();
    conservative_resize(n + other.size(), d);
    positions.bottomRows(other.size()) = other.positions;
    rotations.bottomRows(other.size()) = other.rotations;
    colors.bottomRows(other.size()) = other.colors;
    log_scales.bottomRows(other.size()) = other.log_scales;
    opacity_logits.tail(other.size()) = other.opacity_logits;
    features.bottomRows(other.size()) = other.features;
  }

  // Keeps rows where mask[i] is true, preserving order. Returns the new row
  // index of each kept row (-1 for dropped ones).
  std::vector<Eigen::Index> keep(const std::vector<uint8_t>& mask) {
    std::vector<Eigen::Index> remap(size(), -1);
    Eigen::Index out = 0;
    for (Eigen::Index i = 0; i < size(); ++i) {
      if (!mask[size_t(i)]) continue;
      if (out != i) {
        positions.row(out) = positions.row(i);
        rotations.row(out) = rotations.row(i);
        colors.row(out) = colors.row(i);
        log_scales.row(out) = log_scales.row(i);
        opacity_logits(out) = opacity_logits(i);
        features.row(out) = features.row(i);
      }
      remap[size_t(i)] = out++;
    }
    conservative_resize(out, features.cols());
    return remap;
  }

  void conservative_resize(Eigen::Index n, Eigen::Index query_dim) {
    positions.conservativeResize(n, 3);
    rotations.conservativeResize(n, 4);
    colors.conservativeResize(n, 3);
    log_scales.conservativeResize(n, 3);
    opacity_logits.conservativeResize(n);
    features.conservativeResize(n, query_dim);
  }

  template <typename U>
  GaussianMapT<U> cast() const {
    GaussianMapT<U> out;
    out.positions = positions.template cast<U>();
    out.rotations = rotations.template cast<U>();
    out.colors = colors.template cast<U>();
    out.log_scales = log_scales.template cast<U>();
    out.opacity_logits = opacity_logits.template cast<U>();
    out.features = features.template cast<U>();
    return out;
  }
};
using GaussianMap = GaussianMapT<float>;

// Per-frame embedding supervision: n feature vectors plus a per-pixel map of
// row indices into them (-1 marks unsupervised pixels).
template <typename T>
struct EmbeddingSetT {
  MatX<T> features;                 // n x embed_dim
  std::vector<int32_t> assignment;  // height*width, row-major
  int height = 0, width = 0;

  int32_t assigned(int y, int x) const { return assignment[size_t(y) * width + x]; }

  template <typename U>
  EmbeddingSetT<U> cast() const {
    EmbeddingSetT<U> out;
    out.features = features.template cast<U>();
    out.assignment = assignment;
    out.height = height;
    out.width = width;
    return out;
  }
};
using EmbeddingSet = EmbeddingSetT<float>;

template <typename T>
struct KeyframeT {
  double timestamp = 0;
  PoseT<T> pose;
  ImageT<T> rgb;    // H x W x 3 in [0,1]
  ImageT<T> depth;  // H x W, meters, 0 = invalid
  EmbeddingSetT<T> embeddings;
  int frame_index = 0;
  // Ground-truth class labels when the dataset provides them (evaluation
  // only, never used during mapping). Empty otherwise.
  std::vector<int32_t> labels;

  template <typename U>
  KeyframeT<U> cast() const {
    KeyframeT<U> out;
    out.timestamp = timestamp;
    out.pose = pose.template cast<U>();
    out.rgb = rgb.template cast<U>();
    out.depth = depth.template cast<U>();
    out.embeddings = embeddings.template cast<U>();
    out.frame_index = frame_index;
    out.labels = labels;
    return out;
  }
};
using Keyframe = KeyframeT<float>;
using KeyframePtr = std::shared_ptr<const Keyframe>;

template <typename T>
inline T sigmoid(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

template <typename T>
inline T logit(T p) {
  return std::log(p / (T(1) - p));
}

}  // namespace latmap
