#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "resplat/parallel.hpp"
#include "resplat/rasterizer.hpp"
#include "test_utils.hpp"

using namespace resplat;
using testutil::brute_force_render;
using testutil::max_abs_diff;
using testutil::random_scene;
using testutil::test_pose;

namespace {

Image random_grad_image(uint64_t seed, int w, int h) {
  Rng rng(seed);
  Image im(w, h);
  for (double& v : im.data) v = rng.uniform(-1.0, 1.0);
  return im;
}

Gaussian3D centered_gaussian(double world_scale, double opacity = 0.8) {
  Gaussian3D g;
  g.log_scale = Vec3::Constant(std::log(world_scale));
  g.color = Vec3(0.9, 0.4, 0.2);
  g.opacity_logit = logit(opacity);
  return g;
}

}  // namespace

TEST_CASE("projection: on-axis gaussian lands on the principal point") {
  const CameraPose cam = look_at(Vec3(0, 0, 3.0), Vec3::Zero(), 40.0, 48, 48);
  const auto s =
      project_gaussian(centered_gaussian(0.1), cam, RenderSettings{}, 0);
  REQUIRE(s.has_value());
  CHECK(std::abs(s->mean[0] - 24.0) < 1e-4);
  CHECK(std::abs(s->mean[1] - 24.0) < 1e-4);
  CHECK(s->depth == doctest::Approx(3.0));
}

TEST_CASE("projection: isotropic covariance scales as (f*sigma/z)^2") {
  const double f = 100.0, z = 2.0, sigma = 0.4;  // (f*sigma/z)^2 = 400 px^2
  const CameraPose cam = look_at(Vec3(0, 0, z), Vec3::Zero(), f, 64, 64);
  RenderSettings st;
  const auto s = project_gaussian(centered_gaussian(sigma), cam, st, 0);
  REQUIRE(s.has_value());
  const double expect = f * sigma / z * (f * sigma / z);
  CHECK(std::abs(s->cov(0, 0) - st.cov_floor_px2 - expect) / expect < 0.01);
  CHECK(std::abs(s->cov(1, 1) - st.cov_floor_px2 - expect) / expect < 0.01);
  CHECK(std::abs(s->cov(0, 1)) / expect < 0.01);
}

TEST_CASE("projection: behind-camera gaussian is culled") {
  const CameraPose cam = look_at(Vec3(0, 0, 2.0), Vec3::Zero(), 30.0, 32, 32);
  Gaussian3D g = centered_gaussian(0.1);
  g.position = Vec3(0, 0, 5.0);  // behind the camera (camera looks toward -z)
  CHECK_FALSE(project_gaussian(g, cam, RenderSettings{}, 0).has_value());
}

TEST_CASE("pixel_weight closed forms") {
  Splat2D s;
  s.mean = Vec2(10.0, 10.0);
  s.cov = Mat2::Identity() * 4.0;  // sigma = 2 px
  s.cov_inv = s.cov.inverse();
  s.alpha = 0.8;
  CHECK(pixel_weight(s, 10.0, 10.0) == doctest::Approx(0.8));
  // One sigma out: alpha * e^(-1/2).
  CHECK(pixel_weight(s, 12.0, 10.0) == doctest::Approx(0.48522).epsilon(1e-4));
  // Three sigma out: alpha * e^(-4.5).
  CHECK(pixel_weight(s, 10.0, 16.0) ==
        doctest::Approx(0.8 * 0.011109).epsilon(1e-4));
}

TEST_CASE("render: single gaussian paints its own color at covered pixels") {
  GaussianScene sc;
  sc.gaussians.push_back(centered_gaussian(0.15));
  const CameraPose cam = look_at(Vec3(0, 0, 2.5), Vec3::Zero(), 30.0, 32, 32);
  RenderSettings st;
  const RenderResult r = render(sc, cam, st);
  int covered = 0;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      if (r.covered(x, y, st)) {
        ++covered;
        CHECK((r.image.pixel(x, y) - sc.gaussians[0].color).norm() < 1e-12);
      }
  CHECK(covered > 10);
}

TEST_CASE("render: two co-located equal gaussians blend to the mean color") {
  GaussianScene sc;
  Gaussian3D a = centered_gaussian(0.15);
  a.color = Vec3(1, 0, 0);
  Gaussian3D b = centered_gaussian(0.15);
  b.color = Vec3(0, 0, 1);
  sc.gaussians = {a, b};
  const CameraPose cam = look_at(Vec3(0, 0, 2.5), Vec3::Zero(), 30.0, 32, 32);
  RenderSettings st;
  const RenderResult r = render(sc, cam, st);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      if (r.covered(x, y, st))
        CHECK((r.image.pixel(x, y) - Vec3(0.5, 0, 0.5)).norm() < 1e-12);
}

TEST_CASE("render: empty scene is an error") {
  GaussianScene sc;
  const CameraPose cam = look_at(Vec3(0, 0, 2.5), Vec3::Zero(), 30.0, 32, 32);
  CHECK_THROWS_AS(render(sc, cam, RenderSettings{}), StageError);
}

TEST_CASE("render matches the brute-force oracle in both blend modes") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const GaussianScene sc = random_scene(1000 + seed, 20);
    const CameraPose cam = test_pose(32, 32, 0.2 + 0.61 * seed);
    for (BlendMode mode :
         {BlendMode::NormalizedMean, BlendMode::FrontToBackAlpha}) {
      RenderSettings st;
      st.blend = mode;
      st.background = Vec3(0.1, 0.2, 0.3);
      const RenderResult r = render(sc, cam, st);
      const Image oracle = brute_force_render(sc, cam, st);
      CHECK(max_abs_diff(r.image, oracle) < 1e-5);
    }
  }
}

TEST_CASE("render: covered pixels are convex combinations of splat colors") {
  const GaussianScene sc = random_scene(77, 15);
  const CameraPose cam = test_pose();
  RenderSettings st;  // NormalizedMean
  const RenderResult r = render(sc, cam, st);
  double lo[3] = {1e9, 1e9, 1e9}, hi[3] = {-1e9, -1e9, -1e9};
  for (const Gaussian3D& g : sc.gaussians)
    for (int c = 0; c < 3; ++c) {
      lo[c] = std::min(lo[c], g.color[c]);
      hi[c] = std::max(hi[c], g.color[c]);
    }
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x)
      if (r.covered(x, y, st))
        for (int c = 0; c < 3; ++c) {
          CHECK(r.image.at(x, y, c) >= lo[c] - 1e-9);
          CHECK(r.image.at(x, y, c) <= hi[c] + 1e-9);
        }
}

TEST_CASE("render: scene order permutation changes nothing material") {
  const GaussianScene sc = random_scene(88, 25);
  GaussianScene rev = sc;
  std::reverse(rev.gaussians.begin(), rev.gaussians.end());
  const CameraPose cam = test_pose();
  for (BlendMode mode :
       {BlendMode::NormalizedMean, BlendMode::FrontToBackAlpha}) {
    RenderSettings st;
    st.blend = mode;
    const RenderResult a = render(sc, cam, st);
    const RenderResult b = render(rev, cam, st);
    CHECK(max_abs_diff(a.image, b.image) < 1e-6);
  }
}

TEST_CASE("render and backward are invariant to the thread count") {
  const GaussianScene sc = random_scene(99, 30);
  const CameraPose cam = test_pose(48, 40);
  const Image gimg = random_grad_image(5, 48, 40);
  for (BlendMode mode :
       {BlendMode::NormalizedMean, BlendMode::FrontToBackAlpha}) {
    RenderSettings st;
    st.blend = mode;
    set_thread_count(1);
    const RenderResult r1 = render(sc, cam, st);
    const SceneGrads g1 = render_backward(sc, cam, st, gimg);
    set_thread_count(4);
    const RenderResult r4 = render(sc, cam, st);
    const SceneGrads g4 = render_backward(sc, cam, st, gimg);
    set_thread_count(1);
    CHECK(max_abs_diff(r1.image, r4.image) == 0.0);
    for (size_t i = 0; i < sc.size(); ++i) {
      CHECK(g1.position[i] == g4.position[i]);
      CHECK(g1.log_scale[i] == g4.log_scale[i]);
      CHECK(g1.rotation[i] == g4.rotation[i]);
      CHECK(g1.color[i] == g4.color[i]);
      CHECK(g1.opacity_logit[i] == g4.opacity_logit[i]);
    }
  }
}

TEST_CASE("backward: zero upstream gradient gives zero parameter gradients") {
  const GaussianScene sc = random_scene(111, 8);
  const CameraPose cam = test_pose();
  const SceneGrads g =
      render_backward(sc, cam, RenderSettings{}, Image(32, 32, 0.0));
  CHECK(g.squared_norm() == 0.0);
}

TEST_CASE("backward: single-gaussian red-channel loss hits only red color") {
  GaussianScene sc;
  sc.gaussians.push_back(centered_gaussian(0.15));
  const CameraPose cam = look_at(Vec3(0, 0, 2.5), Vec3::Zero(), 30.0, 32, 32);
  RenderSettings st;
  Image gimg(32, 32, 0.0);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) gimg.at(x, y, 0) = 1.0;  // sum of red channel
  const SceneGrads g = render_backward(sc, cam, st, gimg);

  // With one splat the normalized blend is exactly its color wherever
  // covered, so dL/d(red) = number of covered pixels and green/blue get 0.
  const RenderResult r = render(sc, cam, st);
  int covered = 0;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) covered += r.covered(x, y, st) ? 1 : 0;
  CHECK(g.color[0][0] == doctest::Approx(covered).epsilon(1e-9));
  CHECK(g.color[0][1] == 0.0);
  CHECK(g.color[0][2] == 0.0);

  // And the finite-difference view agrees.
  const auto stats = testutil::check_render_gradients(sc, cam, st, gimg);
  CHECK(stats.failed == 0);
}

TEST_CASE("backward matches finite differences on random scenes") {
  for (uint64_t seed = 0; seed < 4; ++seed) {
    const GaussianScene sc = random_scene(2000 + seed, 10);
    const CameraPose cam = test_pose(24, 24, 0.15 + 0.7 * seed);
    const Image gimg = random_grad_image(3000 + seed, 24, 24);
    for (BlendMode mode :
         {BlendMode::NormalizedMean, BlendMode::FrontToBackAlpha}) {
      RenderSettings st;
      st.blend = mode;
      st.background = Vec3(0.2, 0.1, 0.4);
      const auto stats = testutil::check_render_gradients(sc, cam, st, gimg);
      INFO("seed ", seed, " mode ", static_cast<int>(mode), " worst ",
           stats.worst);
      CHECK(stats.checked == 10 * 14);
      CHECK(stats.failed == 0);
    }
  }
}

TEST_CASE("backward rejects mismatched gradient image") {
  const GaussianScene sc = random_scene(1, 3);
  const CameraPose cam = test_pose();
  CHECK_THROWS_AS(render_backward(sc, cam, RenderSettings{}, Image(8, 8)),
                  NumericError);
}
