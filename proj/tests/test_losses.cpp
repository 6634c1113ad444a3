#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "latmap/obj/grad_check.hpp"
#include "latmap/obj/losses.hpp"
#include "oracles.hpp"

using namespace latmap;

namespace {

ImageT<double> random_image(int h, int w, int c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  ImageT<double> img(h, w, c);
  for (auto& v : img.data) v = uni(rng);
  return img;
}

}  // namespace

TEST_CASE("ssim: identical images score 1") {
  std::mt19937_64 rng(1);
  ImageT<double> a = random_image(24, 32, 3, rng);
  CHECK(ssim<double>(a, a, nullptr) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("ssim: inverted binary image scores negative") {
  ImageT<double> a(24, 32, 1);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 32; ++x) a.at(y, x) = ((x / 4 + y / 4) % 2) ? 1.0 : 0.0;
  ImageT<double> b = a;
  for (auto& v : b.data) v = 1.0 - v;
  CHECK(ssim<double>(a, b, nullptr) < 0.0);
}

TEST_CASE("ssim matches the direct-convolution oracle") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 5; ++t) {
    ImageT<double> a = random_image(20, 26, 3, rng);
    ImageT<double> b = random_image(20, 26, 3, rng);
    CHECK(ssim<double>(a, b, nullptr) ==
          doctest::Approx(oracle::ssim_reference(a, b)).epsilon(1e-6));
  }
}

TEST_CASE("ssim: small image falls back to whole-image statistics") {
  std::mt19937_64 rng(3);
  ImageT<double> a = random_image(6, 7, 1, rng);
  ImageT<double> b = random_image(6, 7, 1, rng);
  CHECK(ssim<double>(a, b, nullptr) ==
        doctest::Approx(oracle::ssim_reference(a, b)).epsilon(1e-9));
  CHECK(ssim<double>(a, a, nullptr) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("ssim gradient matches finite differences") {
  std::mt19937_64 rng(4);
  ImageT<double> a = random_image(16, 18, 1, rng);
  ImageT<double> b = random_image(16, 18, 1, rng);
  ImageT<double> da;
  ssim<double>(a, b, &da);
  auto loss = [&] { return ssim<double>(a, b, nullptr); };
  GradCheckReport rep = grad_check(loss, a.data.data(), Eigen::Index(a.data.size()),
                                   da.data.data(), 1e-5, 60);
  CHECK(rep.max_rel_error < 1e-4);

  // the whole-image fallback path too
  ImageT<double> sa = random_image(6, 6, 2, rng);
  ImageT<double> sb = random_image(6, 6, 2, rng);
  ImageT<double> dsa;
  ssim<double>(sa, sb, &dsa);
  auto loss2 = [&] { return ssim<double>(sa, sb, nullptr); };
  rep = grad_check(loss2, sa.data.data(), Eigen::Index(sa.data.size()), dsa.data.data(), 1e-5);
  CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("rgb_loss: exact match and constant offset") {
  std::mt19937_64 rng(5);
  ImageT<double> img = random_image(24, 32, 3, rng);
  RgbLoss<double> r = rgb_loss<double>(img, img, 0.2, 0.8, false);
  CHECK(r.value == doctest::Approx(0.0).epsilon(1e-12));

  // flat image + 0.1: L1 term contributes 0.2 * 0.1 = 0.02.
  ImageT<double> flat(24, 32, 3);
  for (auto& v : flat.data) v = 0.4;
  ImageT<double> off = flat;
  for (auto& v : off.data) v += 0.1;
  r = rgb_loss<double>(off, flat, 0.2, 0.8, false);
  CHECK(r.l1 == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(0.2 * r.l1 == doctest::Approx(0.02).epsilon(1e-9));
  // flat images: sigma terms vanish, the luminance term alone remains
  const double c1 = 1e-4;
  const double lum = (2 * 0.5 * 0.4 + c1) / (0.25 + 0.16 + c1);
  CHECK(r.ssim_loss == doctest::Approx((1.0 - lum) / 2).epsilon(1e-6));
}

TEST_CASE("rgb_loss gradient matches finite differences") {
  std::mt19937_64 rng(6);
  ImageT<double> a = random_image(16, 16, 3, rng);
  ImageT<double> b = random_image(16, 16, 3, rng);
  RgbLoss<double> r = rgb_loss<double>(a, b, 0.2, 0.8, true);
  auto loss = [&] { return rgb_loss<double>(a, b, 0.2, 0.8, false).value; };
  GradCheckReport rep = grad_check(loss, a.data.data(), Eigen::Index(a.data.size()),
                                   r.grad.data.data(), 1e-5, 60);
  CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("depth_loss: masks, exact values, empty flag") {
  ImageT<double> z(4, 4, 1), zr(4, 4, 1), alpha(4, 4, 1);
  for (auto& v : alpha.data) v = 1.0;
  for (auto& v : z.data) v = 2.0;
  zr = z;
  CHECK(depth_loss<double>(zr, z, alpha, false).value == 0.0);

  for (auto& v : zr.data) v += 0.05;
  CHECK(depth_loss<double>(zr, z, alpha, false).value == doctest::Approx(0.05).epsilon(1e-12));

  // half the pixels lose their observation: mean over the valid half only;
  // hand-computed small grid
  ImageT<double> z2 = z, zr2 = z;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      if (x < 2) z2.at(y, x) = 0.0;           // invalid depth
      zr2.at(y, x) = z2.at(y, x) + (x >= 2 ? 0.1 : 5.0);
    }
  ScalarLoss<double> d = depth_loss<double>(zr2, z2, alpha, true);
  CHECK(d.value == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(d.grad.at(0, 0) == 0.0);
  CHECK(d.grad.at(0, 2) == doctest::Approx(1.0 / 8).epsilon(1e-12));

  // rendered coverage mask: alpha <= 0.5 excludes the pixel
  ImageT<double> low_alpha(4, 4, 1);
  ScalarLoss<double> none = depth_loss<double>(zr, z, low_alpha, false);
  CHECK(none.flagged);
  CHECK(none.value == 0.0);
}

TEST_CASE("feature_loss: exact match, collinear scaling, oracle + finite differences") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss(0, 1);
  MatX<double> f(5, 6);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = gauss(rng);
  MatX<double> atoms(3, 6), anchor(3, 6);
  for (Eigen::Index i = 0; i < atoms.size(); ++i) atoms.data()[i] = gauss(rng);
  anchor = atoms;

  FeatureLoss<double> fl =
      feature_loss<double>(f, f, atoms, anchor, 0.1, 0.5, 0.5, 0.2, false);
  CHECK(fl.value == doctest::Approx(0.0).epsilon(1e-12));

  // collinear reconstruction: cosine term 0, L2 term mean ||f||^2
  MatX<double> f2 = 2.0 * f;
  fl = feature_loss<double>(f2, f, atoms, anchor, 0.1, 0.5, 0.5, 0.2, false);
  CHECK(fl.cos_term == doctest::Approx(0.0).epsilon(1e-9));
  double mean_sq = 0;
  for (int r = 0; r < 5; ++r) mean_sq += f.row(r).squaredNorm() / 5.0;
  CHECK(fl.l2_term == doctest::Approx(mean_sq).epsilon(1e-9));

  // random instance against a scalar oracle
  MatX<double> rec(5, 6);
  for (Eigen::Index i = 0; i < rec.size(); ++i) rec.data()[i] = gauss(rng);
  fl = feature_loss<double>(rec, f, atoms, anchor, 0.1, 0.5, 0.5, 0.2, true);
  double cos_sum = 0, l2_sum = 0;
  for (int r = 0; r < 5; ++r) {
    cos_sum += 1.0 - rec.row(r).dot(f.row(r)) / (rec.row(r).norm() * f.row(r).norm());
    l2_sum += (rec.row(r) - f.row(r)).squaredNorm();
  }
  CHECK(fl.cos_term == doctest::Approx(cos_sum / 5).epsilon(1e-9));
  CHECK(fl.l2_term == doctest::Approx(l2_sum / 5).epsilon(1e-9));

  auto loss = [&] {
    return feature_loss<double>(rec, f, atoms, anchor, 0.1, 0.5, 0.5, 0.2, false).value;
  };
  GradCheckReport rep =
      grad_check(loss, rec.data(), rec.size(), fl.d_reconstructed.data(), 1e-5);
  CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("feature_loss flags zero-norm reconstructions") {
  MatX<double> rec = MatX<double>::Zero(2, 3);
  MatX<double> tgt = MatX<double>::Ones(2, 3);
  MatX<double> atoms = MatX<double>::Ones(2, 3), anchor = atoms;
  FeatureLoss<double> fl = feature_loss<double>(rec, tgt, atoms, anchor, 0.1, 1, 1, 1, false);
  CHECK(fl.zero_norm_flagged);
  CHECK(std::isfinite(fl.value));
}
