#include "latmap/splat/render.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "latmap/core/parallel.hpp"
#include "latmap/core/se3.hpp"

namespace latmap {
namespace {

template <typename T>
Mat3<T> rot_from_unit_quat(const Vec4<T>& q) {
  const T w = q(0), x = q(1), y = q(2), z = q(3);
  Mat3<T> r;
  r << T(1) - T(2) * (y * y + z * z), T(2) * (x * y - w * z), T(2) * (x * z + w * y),
      T(2) * (x * y + w * z), T(1) - T(2) * (x * x + z * z), T(2) * (y * z - w * x),
      T(2) * (x * z - w * y), T(2) * (y * z + w * x), T(1) - T(2) * (x * x + y * y);
  return r;
}

// Full set of projection intermediates; recomputed identically by the
// forward and backward passes.
template <typename T>
struct FullProj {
  bool visible = false;
  Vec3<T> p_cam;
  Vec4<T> q_hat;
  T q_norm = T(0);
  Mat3<T> rot_gauss;
  Vec3<T> scale;
  Mat3<T> m;        // rot_cw * rot_gauss * diag(scale)
  Mat3<T> cov_cam;  // m * m^T
  Eigen::Matrix<T, 2, 3> jac;
  Vec2<T> mean2d;
  Mat2<T> cov2d;
  Mat2<T> cov_inv;
  T alpha = T(0);
};

template <typename T>
FullProj<T> project_one(const Vec3<T>& p, const Vec4<T>& q, const Vec3<T>& log_scale,
                        T opacity_logit, const Mat3<T>& rot_cw, const Vec3<T>& cam_origin,
                        const Intrinsics& intr) {
  FullProj<T> f;
  f.p_cam = rot_cw * (p - cam_origin);
  const T z = f.p_cam(2);
  if (!(z > T(RenderParams::kZNear))) return f;  // behind near plane (or NaN)
  f.q_norm = q.norm();
  if (!(f.q_norm > T(0)) || !std::isfinite(double(f.q_norm))) return f;
  f.q_hat = q / f.q_norm;
  f.rot_gauss = rot_from_unit_quat(f.q_hat);
  f.scale = log_scale.array().exp();
  f.m = rot_cw * f.rot_gauss * f.scale.asDiagonal();
  f.cov_cam = f.m * f.m.transpose();

  const T fx = T(intr.fx), fy = T(intr.fy);
  const T x = f.p_cam(0), y = f.p_cam(1);
  f.mean2d = Vec2<T>(fx * x / z + T(intr.cx), fy * y / z + T(intr.cy));
  f.jac << fx / z, T(0), -fx * x / (z * z), T(0), fy / z, -fy * y / (z * z);
  f.cov2d = f.jac * f.cov_cam * f.jac.transpose();
  f.cov2d(0, 0) += T(RenderParams::kCovReg);
  f.cov2d(1, 1) += T(RenderParams::kCovReg);
  const T det = f.cov2d(0, 0) * f.cov2d(1, 1) - f.cov2d(0, 1) * f.cov2d(1, 0);
  if (!(det > T(0)) || !std::isfinite(double(det))) return f;
  f.cov_inv << f.cov2d(1, 1) / det, -f.cov2d(0, 1) / det, -f.cov2d(1, 0) / det,
      f.cov2d(0, 0) / det;
  f.alpha = sigmoid(opacity_logit);
  f.visible = true;
  return f;
}

// Inclusive pixel bounds of the truncated footprint; false when off-screen.
template <typename T>
bool splat_bounds(const Vec2<T>& mean, const Mat2<T>& cov2d, const Intrinsics& intr, int32_t& x0,
                  int32_t& x1, int32_t& y0, int32_t& y1) {
  const double rx = RenderParams::kSigmaCut * std::sqrt(double(cov2d(0, 0)));
  const double ry = RenderParams::kSigmaCut * std::sqrt(double(cov2d(1, 1)));
  const double u = double(mean(0)), v = double(mean(1));
  if (!std::isfinite(u) || !std::isfinite(v) || !std::isfinite(rx) || !std::isfinite(ry))
    return false;
  const double lo_x = std::ceil(u - rx), hi_x = std::floor(u + rx);
  const double lo_y = std::ceil(v - ry), hi_y = std::floor(v + ry);
  if (hi_x < 0 || hi_y < 0 || lo_x > intr.width - 1 || lo_y > intr.height - 1) return false;
  x0 = int32_t(std::max(0.0, lo_x));
  x1 = int32_t(std::min(double(intr.width - 1), hi_x));
  y0 = int32_t(std::max(0.0, lo_y));
  y1 = int32_t(std::min(double(intr.height - 1), hi_y));
  return x0 <= x1 && y0 <= y1;
}

template <typename T>
std::vector<std::vector<int32_t>> splats_by_row(const std::vector<ProjectedSplat<T>>& splats,
                                                int height) {
  std::vector<std::vector<int32_t>> rows(static_cast<size_t>(height));
  for (int32_t k = 0; k < int32_t(splats.size()); ++k)
    for (int32_t y = splats[size_t(k)].y0; y <= splats[size_t(k)].y1; ++y)
      rows[size_t(y)].push_back(k);
  return rows;
}

// Sorts the candidate list of one pixel by (depth, source index).
template <typename T>
void sort_pixel(const std::vector<ProjectedSplat<T>>& splats, std::vector<int32_t>& idx) {
  std::sort(idx.begin(), idx.end(), [&](int32_t a, int32_t b) {
    const auto& sa = splats[size_t(a)];
    const auto& sb = splats[size_t(b)];
    if (sa.depth != sb.depth) return sa.depth < sb.depth;
    return sa.source < sb.source;
  });
}

}  // namespace

template <typename T>
std::optional<Splat2D<T>> project_gaussian(const GaussianPrimitive& g, const PoseT<T>& pose,
                                           const Intrinsics& intr) {
  Mat3<T> rot_cw = quat_to_rot(pose.rotation).transpose();
  FullProj<T> f = project_one<T>(g.position.cast<T>(), g.rotation.cast<T>(),
                                 g.log_scale.cast<T>(), T(g.opacity_logit), rot_cw,
                                 pose.translation, intr);
  if (!f.visible) return std::nullopt;
  int32_t x0, x1, y0, y1;
  if (!splat_bounds(f.mean2d, f.cov2d, intr, x0, x1, y0, y1)) return std::nullopt;
  Splat2D<T> s;
  s.mean2d = f.mean2d;
  s.cov2d = f.cov2d;
  s.depth = f.p_cam(2);
  return s;
}

template <typename T>
RenderOutputT<T> render(const GaussianMapT<T>& map, const PoseT<T>& pose, const Intrinsics& intr,
                        int threads) {
  if (!intr.valid()) throw std::invalid_argument("render: invalid intrinsics");
  const int h = intr.height, w = intr.width;
  const Eigen::Index ds = map.feature_dim();

  RenderOutputT<T> out;
  out.color = ImageT<T>(h, w, 3);
  out.depth = ImageT<T>(h, w, 1);
  out.query = ImageT<T>(h, w, int(ds));
  out.alpha = ImageT<T>(h, w, 1);
  out.source_count = map.size();
  out.source_pose = pose;
  out.source_intr = intr;

  const Mat3<T> rot_cw = quat_to_rot(pose.rotation).transpose();
  const Vec3<T> origin = pose.translation;

  out.splats.reserve(size_t(map.size()) / 2 + 8);
  for (Eigen::Index i = 0; i < map.size(); ++i) {
    FullProj<T> f =
        project_one<T>(map.positions.row(i).transpose(), map.rotations.row(i).transpose(),
                       map.log_scales.row(i).transpose(), map.opacity_logits(i), rot_cw, origin,
                       intr);
    if (!f.visible) continue;
    ProjectedSplat<T> s;
    if (!splat_bounds(f.mean2d, f.cov2d, intr, s.x0, s.x1, s.y0, s.y1)) continue;
    s.mean2d = f.mean2d;
    s.cov_inv = f.cov_inv;
    s.depth = f.p_cam(2);
    s.alpha = f.alpha;
    s.source = int32_t(i);
    out.splats.push_back(s);
  }

  const auto rows = splats_by_row(out.splats, h);

  parallel_chunks(h, resolve_threads(threads), [&](int64_t y_begin, int64_t y_end, int) {
    std::vector<std::vector<int32_t>> cols(static_cast<size_t>(w));
    for (int64_t y = y_begin; y < y_end; ++y) {
      for (auto& c : cols) c.clear();
      for (int32_t k : rows[size_t(y)]) {
        const auto& s = out.splats[size_t(k)];
        for (int32_t x = s.x0; x <= s.x1; ++x) cols[size_t(x)].push_back(k);
      }
      for (int x = 0; x < w; ++x) {
        auto& idx = cols[size_t(x)];
        if (idx.empty()) continue;
        sort_pixel(out.splats, idx);
        T trans = T(1);
        T acc_c[3] = {T(0), T(0), T(0)};
        T acc_d = T(0), acc_a = T(0);
        T* qrow = &out.query.at(int(y), x, 0);
        for (int32_t k : idx) {
          const auto& s = out.splats[size_t(k)];
          const T dx = T(x) - s.mean2d(0);
          const T dy = T(y) - s.mean2d(1);
          const T rho = s.cov_inv(0, 0) * dx * dx + T(2) * s.cov_inv(0, 1) * dx * dy +
                        s.cov_inv(1, 1) * dy * dy;
          T a = s.alpha * std::exp(T(-0.5) * rho);
          if (a > T(RenderParams::kAlphaMax)) a = T(RenderParams::kAlphaMax);
          const T wgt = a * trans;
          acc_c[0] += wgt * map.colors(s.source, 0);
          acc_c[1] += wgt * map.colors(s.source, 1);
          acc_c[2] += wgt * map.colors(s.source, 2);
          acc_d += wgt * s.depth;
          acc_a += wgt;
          for (Eigen::Index c = 0; c < ds; ++c) qrow[c] += wgt * map.features(s.source, c);
          trans *= (T(1) - a);
          if (trans < T(RenderParams::kTransmitStop)) break;
        }
        out.color.at(int(y), x, 0) = acc_c[0];
        out.color.at(int(y), x, 1) = acc_c[1];
        out.color.at(int(y), x, 2) = acc_c[2];
        out.depth.at(int(y), x) = acc_d;
        out.alpha.at(int(y), x) = acc_a;
      }
    }
  });
  return out;
}

namespace {

// Per-splat accumulators produced by the pixel-space half of the backward
// pass: gradients w.r.t. mean2d, the inverse 2D covariance (full-matrix
// convention), blended depth, pre-activation opacity and the directly blended
// attributes.
template <typename T>
struct SplatAccum {
  Eigen::Index n = 0, ds = 0;
  std::vector<T> buf;

  void init(Eigen::Index n_splats, Eigen::Index feat_dim) {
    n = n_splats;
    ds = feat_dim;
    buf.assign(size_t(n) * size_t(stride()), T(0));
  }
  Eigen::Index stride() const { return 2 + 3 + 1 + 1 + 3 + ds; }
  T* at(Eigen::Index k) { return buf.data() + size_t(k) * size_t(stride()); }
  const T* at(Eigen::Index k) const { return buf.data() + size_t(k) * size_t(stride()); }
  // layout: [dmean_u, dmean_v, dA00, dA01, dA11, dz, dg_sum, dcolor*3, dfeat*ds]
  void add(const SplatAccum<T>& o) {
    for (size_t i = 0; i < buf.size(); ++i) buf[i] += o.buf[i];
  }
};

template <typename T>
struct BlendStep {
  int32_t k;
  T alpha_eff;  // clamped alpha'
  T weight;
  T trans;  // transmittance before this splat
  bool clamped;
};

}  // namespace

template <typename T>
MapGradientsT<T> render_backward(const GaussianMapT<T>& map, const PoseT<T>& pose,
                                 const Intrinsics& intr, const RenderOutputT<T>& out,
                                 const RenderUpstream<T>& upstream, int threads) {
  const bool pose_match = (out.source_pose.rotation.array() == pose.rotation.array()).all() &&
                          (out.source_pose.translation.array() == pose.translation.array()).all();
  if (out.source_count != map.size() || out.source_intr.width != intr.width ||
      out.source_intr.height != intr.height || !pose_match)
    throw std::runtime_error("render_backward: render cache does not match inputs");

  MapGradientsT<T> grads;
  grads.resize_like(map);
  const Eigen::Index n_splats = Eigen::Index(out.splats.size());
  if (n_splats == 0) return grads;
  const int h = intr.height, w = intr.width;
  const Eigen::Index ds = map.feature_dim();
  const int nthreads = resolve_threads(threads);

  const auto rows = splats_by_row(out.splats, h);

  std::vector<SplatAccum<T>> partials(static_cast<size_t>(nthreads));
  for (auto& p : partials) p.init(n_splats, ds);

  parallel_chunks(h, nthreads, [&](int64_t y_begin, int64_t y_end, int tid) {
    SplatAccum<T>& acc = partials[size_t(tid)];
    std::vector<std::vector<int32_t>> cols(static_cast<size_t>(w));
    std::vector<BlendStep<T>> steps;
    for (int64_t y = y_begin; y < y_end; ++y) {
      for (auto& c : cols) c.clear();
      for (int32_t k : rows[size_t(y)]) {
        const auto& s = out.splats[size_t(k)];
        for (int32_t x = s.x0; x <= s.x1; ++x) cols[size_t(x)].push_back(k);
      }
      for (int x = 0; x < w; ++x) {
        auto& idx = cols[size_t(x)];
        if (idx.empty()) continue;
        sort_pixel(out.splats, idx);

        const T* uc = upstream.d_color ? &upstream.d_color->at(int(y), x, 0) : nullptr;
        const T uz = upstream.d_depth ? upstream.d_depth->at(int(y), x) : T(0);
        const T* uq = upstream.d_query ? &upstream.d_query->at(int(y), x, 0) : nullptr;

        // Replay the forward blend to recover weights and transmittance.
        steps.clear();
        T trans = T(1);
        for (int32_t k : idx) {
          const auto& s = out.splats[size_t(k)];
          const T dx = T(x) - s.mean2d(0);
          const T dy = T(y) - s.mean2d(1);
          const T rho = s.cov_inv(0, 0) * dx * dx + T(2) * s.cov_inv(0, 1) * dx * dy +
                        s.cov_inv(1, 1) * dy * dy;
          T a = s.alpha * std::exp(T(-0.5) * rho);
          const bool clamped = a > T(RenderParams::kAlphaMax);
          if (clamped) a = T(RenderParams::kAlphaMax);
          steps.push_back({k, a, a * trans, trans, clamped});
          trans *= (T(1) - a);
          if (trans < T(RenderParams::kTransmitStop)) break;
        }

        // Reverse sweep: dL/dalpha'_i = T_i s_i - S_after / (1 - alpha'_i)
        // where s_i blends the upstream gradients and S_after accumulates
        // the weighted values of everything composited behind i.
        T s_after = T(0);
        for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
          const auto& st = *it;
          const auto& s = out.splats[size_t(st.k)];
          const Eigen::Index src = s.source;
          T value = T(0);
          if (uc)
            value += uc[0] * map.colors(src, 0) + uc[1] * map.colors(src, 1) +
                     uc[2] * map.colors(src, 2);
          value += uz * s.depth;
          if (uq)
            for (Eigen::Index c = 0; c < ds; ++c) value += uq[c] * map.features(src, c);

          T* a = acc.at(st.k);
          if (uc) {
            a[7] += st.weight * uc[0];
            a[8] += st.weight * uc[1];
            a[9] += st.weight * uc[2];
          }
          a[5] += st.weight * uz;
          if (uq)
            for (Eigen::Index c = 0; c < ds; ++c) a[10 + c] += st.weight * uq[c];

          const T d_alpha = st.trans * value - s_after / (T(1) - st.alpha_eff);
          s_after += st.weight * value;
          if (st.clamped) continue;

          const T dx = T(x) - s.mean2d(0);
          const T dy = T(y) - s.mean2d(1);
          const T g = st.alpha_eff / s.alpha;  // exp(-rho/2), alpha > 0 when visible
          a[6] += d_alpha * g;
          const T d_rho = T(-0.5) * st.alpha_eff * d_alpha;
          const T ad_x = s.cov_inv(0, 0) * dx + s.cov_inv(0, 1) * dy;
          const T ad_y = s.cov_inv(1, 0) * dx + s.cov_inv(1, 1) * dy;
          a[0] += d_rho * T(-2) * ad_x;
          a[1] += d_rho * T(-2) * ad_y;
          a[2] += d_rho * dx * dx;
          a[3] += d_rho * dx * dy;
          a[4] += d_rho * dy * dy;
        }
      }
    }
  });

  for (int t = 1; t < nthreads; ++t) partials[0].add(partials[size_t(t)]);
  const SplatAccum<T>& acc = partials[0];

  // Projection backward: map the 2D-space accumulators onto the Gaussian
  // parameters.
  const Mat3<T> rot_wc = quat_to_rot(pose.rotation);
  const Mat3<T> rot_cw = rot_wc.transpose();
  const Vec3<T> origin = pose.translation;
  const T fx = T(intr.fx), fy = T(intr.fy);

  parallel_chunks(n_splats, nthreads, [&](int64_t k_begin, int64_t k_end, int) {
    for (int64_t k = k_begin; k < k_end; ++k) {
      const auto& s = out.splats[size_t(k)];
      const Eigen::Index i = s.source;
      const T* a = acc.at(k);

      grads.colors(i, 0) += a[7];
      grads.colors(i, 1) += a[8];
      grads.colors(i, 2) += a[9];
      for (Eigen::Index c = 0; c < ds; ++c) grads.features(i, c) += a[10 + c];

      FullProj<T> f =
          project_one<T>(map.positions.row(i).transpose(), map.rotations.row(i).transpose(),
                         map.log_scales.row(i).transpose(), map.opacity_logits(i), rot_cw, origin,
                         intr);
      if (!f.visible) continue;

      grads.opacity_logits(i) += a[6] * f.alpha * (T(1) - f.alpha);

      Mat2<T> d_amat;
      d_amat << a[2], a[3], a[3], a[4];
      const Mat2<T> d_cov2d = -f.cov_inv * d_amat * f.cov_inv;
      const Mat3<T> d_cov_cam = f.jac.transpose() * d_cov2d * f.jac;
      const Eigen::Matrix<T, 2, 3> d_jac = T(2) * d_cov2d * f.jac * f.cov_cam;
      const Mat3<T> d_m = T(2) * d_cov_cam * f.m;

      // m = rot_cw * rot_gauss * diag(scale)
      const Mat3<T> d_rot_gauss = rot_cw.transpose() * d_m * f.scale.asDiagonal();
      const Mat3<T> rot_cam_gauss = rot_cw * f.rot_gauss;
      for (int c = 0; c < 3; ++c)
        grads.log_scales(i, c) += rot_cam_gauss.col(c).dot(d_m.col(c)) * f.scale(c);

      // d rot / d unit quaternion, then through the normalization.
      const T qw = f.q_hat(0), qx = f.q_hat(1), qy = f.q_hat(2), qz = f.q_hat(3);
      Mat3<T> dw, dx_, dy_, dz_;
      dw << T(0), -qz, qy, qz, T(0), -qx, -qy, qx, T(0);
      dx_ << T(0), qy, qz, qy, T(-2) * qx, -qw, qz, qw, T(-2) * qx;
      dy_ << T(-2) * qy, qx, qw, qx, T(0), qz, -qw, qz, T(-2) * qy;
      dz_ << T(-2) * qz, -qw, qx, qw, T(-2) * qz, qy, qx, qy, T(0);
      Vec4<T> d_qhat;
      d_qhat(0) = T(2) * (dw.array() * d_rot_gauss.array()).sum();
      d_qhat(1) = T(2) * (dx_.array() * d_rot_gauss.array()).sum();
      d_qhat(2) = T(2) * (dy_.array() * d_rot_gauss.array()).sum();
      d_qhat(3) = T(2) * (dz_.array() * d_rot_gauss.array()).sum();
      const Vec4<T> d_q = (d_qhat - f.q_hat * f.q_hat.dot(d_qhat)) / f.q_norm;
      grads.rotations.row(i) += d_q.transpose();

      // Camera-space point gradient: mean2d chain, Jacobian chain, blended z.
      const T x = f.p_cam(0), y = f.p_cam(1), z = f.p_cam(2);
      Vec3<T> d_pcam = Vec3<T>::Zero();
      d_pcam(0) += a[0] * fx / z;
      d_pcam(2) += a[0] * (-fx * x / (z * z));
      d_pcam(1) += a[1] * fy / z;
      d_pcam(2) += a[1] * (-fy * y / (z * z));
      d_pcam(0) += d_jac(0, 2) * (-fx / (z * z));
      d_pcam(1) += d_jac(1, 2) * (-fy / (z * z));
      d_pcam(2) += d_jac(0, 0) * (-fx / (z * z)) + d_jac(0, 2) * (T(2) * fx * x / (z * z * z)) +
                   d_jac(1, 1) * (-fy / (z * z)) + d_jac(1, 2) * (T(2) * fy * y / (z * z * z));
      d_pcam(2) += a[5];
      grads.positions.row(i) += (rot_wc * d_pcam).transpose();
    }
  });

  return grads;
}

template std::optional<Splat2D<float>> project_gaussian(const GaussianPrimitive&,
                                                        const PoseT<float>&, const Intrinsics&);
template std::optional<Splat2D<double>> project_gaussian(const GaussianPrimitive&,
                                                         const PoseT<double>&, const Intrinsics&);
template RenderOutputT<float> render(const GaussianMapT<float>&, const PoseT<float>&,
                                     const Intrinsics&, int);
template RenderOutputT<double> render(const GaussianMapT<double>&, const PoseT<double>&,
                                      const Intrinsics&, int);
template MapGradientsT<float> render_backward(const GaussianMapT<float>&, const PoseT<float>&,
                                              const Intrinsics&, const RenderOutputT<float>&,
                                              const RenderUpstream<float>&, int);
template MapGradientsT<double> render_backward(const GaussianMapT<double>&, const PoseT<double>&,
                                               const Intrinsics&, const RenderOutputT<double>&,
                                               const RenderUpstream<double>&, int);

}  // namespace latmap
