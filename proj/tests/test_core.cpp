#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "latmap/core/config.hpp"
#include "latmap/core/se3.hpp"
#include "latmap/core/validate.hpp"
#include "oracles.hpp"

using namespace latmap;

TEST_CASE("quat_to_rot identity and axis flips") {
  Mat3<double> r = quat_to_rot(Vec4<double>(1, 0, 0, 0));
  CHECK((r - Mat3<double>::Identity()).cwiseAbs().maxCoeff() < 1e-12);

  // 180 degrees about z
  Mat3<double> rz = quat_to_rot(Vec4<double>(0, 0, 0, 1));
  Mat3<double> expect;
  expect << -1, 0, 0, 0, -1, 0, 0, 0, 1;
  CHECK((rz - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("quat_to_rot matches axis-angle oracle for 90deg about y") {
  const double s = std::sqrt(0.5);
  Mat3<double> r = quat_to_rot(Vec4<double>(s, 0, s, 0));
  Mat3<double> expect = oracle::axis_angle_rot(Vec3<double>(0, 1, 0), M_PI / 2);
  CHECK((r - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("quat_to_rot normalizes and rejects zero quaternions") {
  Mat3<double> r = quat_to_rot(Vec4<double>(2, 0, 0, 0));
  CHECK((r - Mat3<double>::Identity()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(quat_to_rot(Vec4<double>(0, 0, 0, 0)), std::invalid_argument);
}

TEST_CASE("quat_to_rot is orthonormal for random unit quaternions") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss(0, 1);
  for (int t = 0; t < 200; ++t) {
    Vec4<double> q(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    if (q.norm() < 1e-6) continue;
    Mat3<double> r = quat_to_rot(q);
    CHECK((r.transpose() * r - Mat3<double>::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("se3_apply basics") {
  PoseT<double> ident;
  CHECK((se3_apply(ident, Vec3<double>(1, 2, 3)) - Vec3<double>(1, 2, 3)).norm() < 1e-12);

  PoseT<double> trans;
  trans.translation = Vec3<double>(0, 0, 1);
  CHECK((se3_apply(trans, Vec3<double>(0, 0, 0)) - Vec3<double>(0, 0, 1)).norm() < 1e-12);
}

TEST_CASE("se3_apply matches homogeneous matrix oracle") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss(0, 1);
  for (int t = 0; t < 100; ++t) {
    PoseT<double> pose;
    pose.rotation = Vec4<double>(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    if (pose.rotation.norm() < 1e-6) continue;
    pose.rotation.normalize();
    pose.translation = Vec3<double>(gauss(rng), gauss(rng), gauss(rng));
    Vec3<double> p(gauss(rng), gauss(rng), gauss(rng));
    CHECK((se3_apply(pose, p) - oracle::homogeneous_apply(pose, p)).norm() < 1e-12);
  }
}

TEST_CASE("se3 inverse round-trips points") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> gauss(0, 1);
  for (int t = 0; t < 100; ++t) {
    PoseT<double> pose;
    pose.rotation = Vec4<double>(gauss(rng), gauss(rng), gauss(rng), gauss(rng)).normalized();
    pose.translation = Vec3<double>(gauss(rng), gauss(rng), gauss(rng));
    Vec3<double> p(gauss(rng), gauss(rng), gauss(rng));
    Vec3<double> back = se3_apply(pose, se3_apply(se3_inverse(pose), p));
    CHECK((back - p).norm() < 1e-9);
  }
}

TEST_CASE("validate_map") {
  GaussianMap empty;
  empty.resize(0, 4);
  MapDiagnostics d = validate_map(empty);
  CHECK(d.pass);
  CHECK(d.count == 0);

  GaussianMap bad;
  bad.resize(2, 4);
  bad.positions(1, 2) = std::numeric_limits<float>::quiet_NaN();
  d = validate_map(bad);
  CHECK_FALSE(d.pass);
  CHECK(d.non_finite == 1);

  std::mt19937_64 rng(3);
  GaussianMap ok = oracle::random_map<float>(1000, 8, rng);
  CHECK(validate_map(ok).pass);
}

TEST_CASE("config round-trips bit-exactly") {
  Config cfg;
  cfg.lambda_feat = 5.0f;
  cfg.lr_position = 1.234567e-4f;
  cfg.voxel_size = 0.013f;
  cfg.seed = 0xDEADBEEFCAFEull;
  cfg.dict_init = "random";
  cfg.local_mapping = false;

  const std::string text = serialize_config(cfg);
  Config parsed = parse_config(text);
  CHECK(serialize_config(parsed) == text);
  CHECK(parsed.lr_position == cfg.lr_position);  // bit-exact float round trip
  CHECK(parsed.voxel_size == cfg.voxel_size);
  CHECK(parsed.seed == cfg.seed);
}

TEST_CASE("config rejects unknown keys and bad values") {
  CHECK_THROWS_WITH_AS(parse_config("query_dmi = 8\n"),
                       doctest::Contains("unknown key"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("query_dim = banana\n"), std::exception);
  CHECK_THROWS_AS(parse_config("query_dim = 64\nembed_dim = 8\n"), std::invalid_argument);
  CHECK_NOTHROW(parse_config("# comment only\n\n"));
}

TEST_CASE("config comments and spacing") {
  Config cfg = parse_config("  dict_size = 17  # trailing comment\n\n# full line\nseed=9\n");
  CHECK(cfg.dict_size == 17);
  CHECK(cfg.seed == 9);
}
