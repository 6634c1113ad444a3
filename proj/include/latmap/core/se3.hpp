#pragma once

#include <cmath>
#include <stdexcept>

#include "latmap/core/types.hpp"

namespace latmap {

// Rotation matrix from a (w,x,y,z) quaternion. The input is normalized
// internally; a zero-norm quaternion is invalid.
template <typename T>
Mat3<T> quat_to_rot(const Vec4<T>& q) {
  T n = q.norm();
  if (!(n > T(0)) || !std::isfinite(double(n)))
    throw std::invalid_argument("quat_to_rot: zero-norm or non-finite quaternion");
  const T w = q(0) / n, x = q(1) / n, y = q(2) / n, z = q(3) / n;
  Mat3<T> r;
  r << T(1) - T(2) * (y * y + z * z), T(2) * (x * y - w * z), T(2) * (x * z + w * y),
      T(2) * (x * y + w * z), T(1) - T(2) * (x * x + z * z), T(2) * (y * z - w * x),
      T(2) * (x * z - w * y), T(2) * (y * z + w * x), T(1) - T(2) * (x * x + y * y);
  return r;
}

template <typename T>
Vec3<T> se3_apply(const PoseT<T>& pose, const Vec3<T>& p) {
  return quat_to_rot(pose.rotation) * p + pose.translation;
}

template <typename T>
PoseT<T> se3_inverse(const PoseT<T>& pose) {
  Mat3<T> rt = quat_to_rot(pose.rotation).transpose();
  PoseT<T> inv;
  inv.rotation = Vec4<T>(pose.rotation(0), -pose.rotation(1), -pose.rotation(2), -pose.rotation(3));
  inv.rotation.normalize();
  inv.translation = -(rt * pose.translation);
  return inv;
}

// p_camera for a camera-to-world pose.
template <typename T>
Vec3<T> world_to_camera(const PoseT<T>& pose, const Vec3<T>& p) {
  return quat_to_rot(pose.rotation).transpose() * (p - pose.translation);
}

template <typename T>
Vec4<T> quat_from_axis_angle(const Vec3<T>& axis, T angle) {
  Vec3<T> a = axis.normalized();
  T h = angle / T(2);
  return Vec4<T>(std::cos(h), a(0) * std::sin(h), a(1) * std::sin(h), a(2) * std::sin(h));
}

}  // namespace latmap
