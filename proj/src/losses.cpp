#include "latmap/obj/losses.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace latmap {
namespace {

constexpr int kWin = 11;
constexpr int kRad = kWin / 2;

template <typename T>
std::array<T, kWin> ssim_kernel() {
  std::array<T, kWin> k;
  double sum = 0;
  for (int i = 0; i < kWin; ++i) {
    double d = i - kRad;
    double w = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    k[size_t(i)] = T(w);
    sum += w;
  }
  for (auto& v : k) v = T(double(v) / sum);
  return k;
}

inline int reflect101(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

// Separable Gaussian filtering of one channel plane with reflect padding.
template <typename T>
void filter_plane(const std::vector<T>& in, std::vector<T>& out, std::vector<T>& tmp, int h,
                  int w) {
  static const auto kern = ssim_kernel<T>();
  tmp.resize(in.size());
  out.resize(in.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      T acc = T(0);
      for (int k = -kRad; k <= kRad; ++k)
        acc += kern[size_t(k + kRad)] * in[size_t(y) * w + reflect101(x + k, w)];
      tmp[size_t(y) * w + x] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      T acc = T(0);
      for (int k = -kRad; k <= kRad; ++k)
        acc += kern[size_t(k + kRad)] * tmp[size_t(reflect101(y + k, h)) * w + x];
      out[size_t(y) * w + x] = acc;
    }
}

// Exact adjoint of filter_plane (scatter through the same reflected taps).
template <typename T>
void filter_plane_adjoint(const std::vector<T>& in, std::vector<T>& out, std::vector<T>& tmp,
                          int h, int w) {
  static const auto kern = ssim_kernel<T>();
  tmp.assign(in.size(), T(0));
  out.assign(in.size(), T(0));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      T v = in[size_t(y) * w + x];
      for (int k = -kRad; k <= kRad; ++k)
        tmp[size_t(reflect101(y + k, h)) * w + x] += kern[size_t(k + kRad)] * v;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      T v = tmp[size_t(y) * w + x];
      for (int k = -kRad; k <= kRad; ++k)
        out[size_t(y) * w + reflect101(x + k, w)] += kern[size_t(k + kRad)] * v;
    }
}

template <typename T>
void extract_plane(const ImageT<T>& img, int c, std::vector<T>& plane) {
  plane.resize(size_t(img.height) * img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) plane[size_t(y) * img.width + x] = img.at(y, x, c);
}

// Whole-image fallback when the window does not fit.
template <typename T>
T ssim_global(const ImageT<T>& a, const ImageT<T>& b, ImageT<T>* d_a) {
  const T c1 = T(0.01) * T(0.01), c2 = T(0.03) * T(0.03);
  const Eigen::Index n = Eigen::Index(a.size()) / a.channels;
  T total = T(0);
  for (int c = 0; c < a.channels; ++c) {
    T mx = 0, my = 0;
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        mx += a.at(y, x, c);
        my += b.at(y, x, c);
      }
    mx /= T(n);
    my /= T(n);
    T vx = 0, vy = 0, cov = 0;
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        T dx = a.at(y, x, c) - mx, dy = b.at(y, x, c) - my;
        vx += dx * dx;
        vy += dy * dy;
        cov += dx * dy;
      }
    vx /= T(n);
    vy /= T(n);
    cov /= T(n);
    const T a1 = T(2) * mx * my + c1, a2 = T(2) * cov + c2;
    const T b1 = mx * mx + my * my + c1, b2 = vx + vy + c2;
    const T s = (a1 * a2) / (b1 * b2);
    total += s;
    if (d_a) {
      // dS/d a_i via the global statistics; (mx, vx, cov) are independent
      // variables here, the mean-shift terms are already inside dvx and dcov.
      const T ds_dmx = T(2) * my * a2 / (b1 * b2) - s * T(2) * mx / b1;
      const T ds_dvx = -s / b2;
      const T ds_dcov = T(2) * a1 / (b1 * b2);
      for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
          T dx = a.at(y, x, c) - mx, dy = b.at(y, x, c) - my;
          d_a->at(y, x, c) += (ds_dmx / T(n) + ds_dvx * T(2) * dx / T(n) + ds_dcov * dy / T(n)) /
                              T(a.channels);
        }
    }
  }
  return total / T(a.channels);
}

}  // namespace

template <typename T>
T ssim(const ImageT<T>& a, const ImageT<T>& b, ImageT<T>* d_a) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels)
    throw std::invalid_argument("ssim: image shapes differ");
  if (d_a) {
    *d_a = ImageT<T>(a.height, a.width, a.channels);
  }
  if (a.height < kWin || a.width < kWin) return ssim_global(a, b, d_a);

  const int h = a.height, w = a.width;
  const size_t plane_n = size_t(h) * w;
  const T c1 = T(0.01) * T(0.01), c2 = T(0.03) * T(0.03);
  std::vector<T> px, py, tmp, mx, my, ex2, ey2, exy, work;
  std::vector<T> dmu(plane_n), de2(plane_n), dexy(plane_n), adj;
  T total = T(0);
  for (int c = 0; c < a.channels; ++c) {
    extract_plane(a, c, px);
    extract_plane(b, c, py);
    filter_plane(px, mx, tmp, h, w);
    filter_plane(py, my, tmp, h, w);
    work.resize(plane_n);
    for (size_t i = 0; i < plane_n; ++i) work[i] = px[i] * px[i];
    filter_plane(work, ex2, tmp, h, w);
    for (size_t i = 0; i < plane_n; ++i) work[i] = py[i] * py[i];
    filter_plane(work, ey2, tmp, h, w);
    for (size_t i = 0; i < plane_n; ++i) work[i] = px[i] * py[i];
    filter_plane(work, exy, tmp, h, w);

    for (size_t i = 0; i < plane_n; ++i) {
      const T sx2 = ex2[i] - mx[i] * mx[i];
      const T sy2 = ey2[i] - my[i] * my[i];
      const T sxy = exy[i] - mx[i] * my[i];
      const T a1 = T(2) * mx[i] * my[i] + c1;
      const T a2 = T(2) * sxy + c2;
      const T b1 = mx[i] * mx[i] + my[i] * my[i] + c1;
      const T b2 = sx2 + sy2 + c2;
      const T s = (a1 * a2) / (b1 * b2);
      total += s;
      if (d_a) {
        dmu[i] = T(2) * my[i] * (a2 - a1) / (b1 * b2) - s * T(2) * mx[i] / b1 +
                 s * T(2) * mx[i] / b2;
        de2[i] = -s / b2;
        dexy[i] = T(2) * a1 / (b1 * b2);
      }
    }
    if (d_a) {
      const T scale = T(1) / (T(plane_n) * T(a.channels));
      filter_plane_adjoint(dmu, adj, tmp, h, w);
      for (size_t i = 0; i < plane_n; ++i) {
        int y = int(i) / w, x = int(i) % w;
        d_a->at(y, x, c) += adj[i] * scale;
      }
      filter_plane_adjoint(de2, adj, tmp, h, w);
      for (size_t i = 0; i < plane_n; ++i) {
        int y = int(i) / w, x = int(i) % w;
        d_a->at(y, x, c) += T(2) * px[i] * adj[i] * scale;
      }
      filter_plane_adjoint(dexy, adj, tmp, h, w);
      for (size_t i = 0; i < plane_n; ++i) {
        int y = int(i) / w, x = int(i) % w;
        d_a->at(y, x, c) += py[i] * adj[i] * scale;
      }
    }
  }
  return total / (T(plane_n) * T(a.channels));
}

template <typename T>
RgbLoss<T> rgb_loss(const ImageT<T>& rendered, const ImageT<T>& observed, T lambda_i1,
                    T lambda_i2, bool want_grad) {
  if (rendered.size() != observed.size() || rendered.height != observed.height)
    throw std::invalid_argument("rgb_loss: image shapes differ");
  RgbLoss<T> out;
  const T n = T(rendered.size());
  T l1 = T(0);
  if (want_grad) out.grad = ImageT<T>(rendered.height, rendered.width, rendered.channels);
  for (size_t i = 0; i < rendered.data.size(); ++i) {
    T d = rendered.data[i] - observed.data[i];
    l1 += std::abs(d);
    if (want_grad) out.grad.data[i] = lambda_i1 * (d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0))) / n;
  }
  out.l1 = l1 / n;

  ImageT<T> d_ssim;
  T s = ssim(rendered, observed, want_grad ? &d_ssim : nullptr);
  out.ssim_loss = (T(1) - s) / T(2);
  if (want_grad)
    for (size_t i = 0; i < rendered.data.size(); ++i)
      out.grad.data[i] += lambda_i2 * (T(-0.5)) * d_ssim.data[i];
  out.value = lambda_i1 * out.l1 + lambda_i2 * out.ssim_loss;
  return out;
}

template <typename T>
ScalarLoss<T> depth_loss(const ImageT<T>& rendered, const ImageT<T>& observed,
                         const ImageT<T>& alpha, bool want_grad) {
  if (rendered.size() != observed.size() || rendered.size() != alpha.size())
    throw std::invalid_argument("depth_loss: image shapes differ");
  ScalarLoss<T> out;
  if (want_grad) out.grad = ImageT<T>(rendered.height, rendered.width, 1);
  int64_t valid = 0;
  T sum = T(0);
  for (size_t i = 0; i < rendered.data.size(); ++i) {
    if (observed.data[i] > T(0) && alpha.data[i] > T(0.5)) {
      sum += std::abs(rendered.data[i] - observed.data[i]);
      ++valid;
    }
  }
  if (valid == 0) {
    out.flagged = true;
    return out;
  }
  out.value = sum / T(valid);
  if (want_grad) {
    for (size_t i = 0; i < rendered.data.size(); ++i) {
      if (observed.data[i] > T(0) && alpha.data[i] > T(0.5)) {
        T d = rendered.data[i] - observed.data[i];
        out.grad.data[i] = (d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0))) / T(valid);
      }
    }
  }
  return out;
}

template <typename T>
FeatureLoss<T> feature_loss(const MatX<T>& reconstructed, const MatX<T>& target,
                            const MatX<T>& atoms, const MatX<T>& anchor, T delta, T lambda_cos,
                            T lambda_l2, T lambda_trust, bool want_grad) {
  if (reconstructed.rows() != target.rows() || reconstructed.cols() != target.cols())
    throw std::invalid_argument("feature_loss: shape mismatch");
  FeatureLoss<T> out;
  const Eigen::Index n = reconstructed.rows();
  const T eps = T(1e-8);
  if (want_grad) out.d_reconstructed.setZero(reconstructed.rows(), reconstructed.cols());

  for (Eigen::Index r = 0; r < n; ++r) {
    const auto u = reconstructed.row(r);
    const auto v = target.row(r);
    T nu = u.norm(), nv = v.norm();
    if (nu < eps || nv < eps) out.zero_norm_flagged = true;
    const T nug = std::max(nu, eps), nvg = std::max(nv, eps);
    const T dot = u.dot(v);
    const T cosv = dot / (nug * nvg);
    out.cos_term += (T(1) - cosv);
    out.l2_term += (u - v).squaredNorm();
    if (want_grad) {
      // d(1-cos)/du = -(v/(|u||v|) - dot * u / (|u|^3 |v|))
      out.d_reconstructed.row(r) +=
          lambda_cos * (-(v / (nug * nvg) - dot * u / (nug * nug * nug * nvg))) / T(n);
      out.d_reconstructed.row(r) += lambda_l2 * T(2) * (u - v) / T(n);
    }
  }
  if (n > 0) {
    out.cos_term /= T(n);
    out.l2_term /= T(n);
  }
  MatX<T> trust_grad;
  out.trust_term = trust_region_penalty(atoms, anchor, delta, want_grad ? &trust_grad : nullptr);
  if (want_grad) out.d_atoms_trust = lambda_trust * trust_grad;
  out.value = lambda_cos * out.cos_term + lambda_l2 * out.l2_term + lambda_trust * out.trust_term;
  return out;
}

template float ssim(const ImageT<float>&, const ImageT<float>&, ImageT<float>*);
template double ssim(const ImageT<double>&, const ImageT<double>&, ImageT<double>*);
template RgbLoss<float> rgb_loss(const ImageT<float>&, const ImageT<float>&, float, float, bool);
template RgbLoss<double> rgb_loss(const ImageT<double>&, const ImageT<double>&, double, double,
                                  bool);
template ScalarLoss<float> depth_loss(const ImageT<float>&, const ImageT<float>&,
                                      const ImageT<float>&, bool);
template ScalarLoss<double> depth_loss(const ImageT<double>&, const ImageT<double>&,
                                       const ImageT<double>&, bool);
template FeatureLoss<float> feature_loss(const MatX<float>&, const MatX<float>&,
                                         const MatX<float>&, const MatX<float>&, float, float,
                                         float, float, bool);
template FeatureLoss<double> feature_loss(const MatX<double>&, const MatX<double>&,
                                          const MatX<double>&, const MatX<double>&, double, double,
                                          double, double, bool);

}  // namespace latmap
