#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "resplat/camera.hpp"
#include "resplat/scene.hpp"
#include "resplat/scene_init.hpp"
#include "test_utils.hpp"

using namespace resplat;

TEST_CASE("ring poses: counts, radius, azimuth spacing") {
  for (int n : {1, 2, 4, 18, 64}) {
    RingRig rig;
    rig.n_views = n;
    rig.radius = 2.0;
    rig.target = Vec3(0.1, 0.95, -0.2);
    const auto poses = ring_poses(rig);
    const auto az = ring_azimuths(rig);
    REQUIRE(poses.size() == static_cast<size_t>(n));
    REQUIRE(az.size() == static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      CHECK(az[i] == doctest::Approx(2.0 * M_PI * i / n).epsilon(1e-12));
      CHECK((poses[i].center() - rig.target).norm() ==
            doctest::Approx(rig.radius).epsilon(1e-9));
      // Rotation stays orthonormal.
      CHECK((poses[i].world_to_cam * poses[i].world_to_cam.transpose() -
             Mat3::Identity())
                .norm() < 1e-9);
      CHECK(poses[i].world_to_cam.determinant() == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
  RingRig bad;
  bad.n_views = 0;
  CHECK_THROWS_AS(ring_poses(bad), ConfigError);
}

TEST_CASE("look_at projects the target to the principal point") {
  const CameraPose c = look_at(Vec3(0.3, 1.4, 2.0), Vec3(0.1, 0.9, -0.2), 48.0,
                               64, 64);
  const Vec3 p_cam = c.to_camera(Vec3(0.1, 0.9, -0.2));
  CHECK(p_cam[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p_cam[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p_cam[2] > 0.0);
  const Vec2 uv = c.project(p_cam);
  CHECK(uv[0] == doctest::Approx(32.0));
  CHECK(uv[1] == doctest::Approx(32.0));
}

TEST_CASE("ring_pose_at matches the enumerated ring") {
  RingRig rig;
  rig.n_views = 8;
  const auto poses = ring_poses(rig);
  const auto az = ring_azimuths(rig);
  for (int i = 0; i < rig.n_views; ++i) {
    const CameraPose p = ring_pose_at(rig, az[i]);
    CHECK((p.world_to_cam - poses[i].world_to_cam).norm() < 1e-12);
    CHECK((p.translation - poses[i].translation).norm() < 1e-12);
  }
}

TEST_CASE("scene text format round trips bit-exactly") {
  const auto dir = testutil::scratch_dir("scene_io");
  const GaussianScene sc = testutil::random_scene(7, 23);
  const std::string path = (dir / "scene.txt").string();
  save_scene(path, sc);
  const GaussianScene back = load_scene(path);
  REQUIRE(back.size() == sc.size());
  for (size_t i = 0; i < sc.size(); ++i) {
    CHECK(back.gaussians[i].position == sc.gaussians[i].position);
    CHECK(back.gaussians[i].log_scale == sc.gaussians[i].log_scale);
    CHECK(back.gaussians[i].rotation == sc.gaussians[i].rotation);
    CHECK(back.gaussians[i].color == sc.gaussians[i].color);
    CHECK(back.gaussians[i].opacity_logit == sc.gaussians[i].opacity_logit);
  }
  CHECK(back.bound.lo == sc.bound.lo);
  CHECK(back.bound.hi == sc.bound.hi);

  // save -> load -> save is stable byte for byte.
  const std::string path2 = (dir / "scene2.txt").string();
  save_scene(path2, back);
  std::ifstream f1(path), f2(path2);
  const std::string s1((std::istreambuf_iterator<char>(f1)), {});
  const std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
}

TEST_CASE("quaternion rotation basics") {
  // Identity quaternion.
  CHECK((quat_to_rot(Vec4(1, 0, 0, 0)) - Mat3::Identity()).norm() < 1e-12);
  // Unnormalized input normalizes internally.
  CHECK((quat_to_rot(Vec4(2, 0, 0, 0)) - Mat3::Identity()).norm() < 1e-12);
  // 90 degrees about z maps x to y.
  const double s = std::sqrt(0.5);
  const Mat3 R = quat_to_rot(Vec4(s, 0, 0, s));
  CHECK((R * Vec3(1, 0, 0) - Vec3(0, 1, 0)).norm() < 1e-12);
}

TEST_CASE("single-image init: color pickup and determinism") {
  InitSpec spec;
  spec.count = 1;
  spec.seed = 3;
  const Image red = Image::constant(8, 8, Vec3(1, 0, 0));
  const CameraPose frontal = look_at(Vec3(0, 0, 2.5), Vec3::Zero(), 8.0, 8, 8);
  const GaussianScene one = init_scene_from_reference(red, spec, frontal);
  REQUIRE(one.size() == 1);
  CHECK((one.gaussians[0].color - Vec3(1, 0, 0)).norm() < 0.05);

  spec.count = 500;
  spec.seed = 11;
  const Image ref = Image::constant(16, 16, Vec3(0.4, 0.5, 0.6));
  const GaussianScene a = init_scene_from_reference(ref, spec, frontal);
  const GaussianScene b = init_scene_from_reference(ref, spec, frontal);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a.gaussians[i].position == b.gaussians[i].position);
    CHECK(a.gaussians[i].color == b.gaussians[i].color);
  }

  CHECK_THROWS_AS(
      [&] {
        InitSpec zero;
        zero.count = 0;
        return init_scene_from_reference(ref, zero, frontal);
      }(),
      ConfigError);
}

TEST_CASE("single-image init: split reference colors split gaussians") {
  // Left half red, right half blue.
  Image ref(32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      ref.set_pixel(x, y, x < 16 ? Vec3(1, 0, 0) : Vec3(0, 0, 1));
  const CameraPose frontal =
      look_at(Vec3(0, 0, 2.5), Vec3::Zero(), 28.0, 32, 32);
  InitSpec spec;
  spec.count = 400;
  spec.seed = 5;
  const GaussianScene sc = init_scene_from_reference(ref, spec, frontal);

  double red_left = 0, blue_left = 0, red_right = 0, blue_right = 0;
  int n_left = 0, n_right = 0;
  for (const Gaussian3D& g : sc.gaussians) {
    const Vec3 p = frontal.to_camera(g.position);
    if (!(p[2] > 0)) continue;
    const Vec2 uv = frontal.project(p);
    if (uv[0] < 16.0) {
      red_left += g.color[0];
      blue_left += g.color[2];
      ++n_left;
    } else {
      red_right += g.color[0];
      blue_right += g.color[2];
      ++n_right;
    }
  }
  REQUIRE(n_left > 20);
  REQUIRE(n_right > 20);
  CHECK(red_left / n_left > blue_left / n_left);
  CHECK(blue_right / n_right > red_right / n_right);
}
