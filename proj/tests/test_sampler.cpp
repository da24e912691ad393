#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "resplat/common.hpp"
#include "resplat/latent.hpp"
#include "resplat/restorer.hpp"
#include "resplat/sampler.hpp"
#include "resplat/schedule.hpp"
#include "test_utils.hpp"

using namespace resplat;
using Eigen::MatrixXd;

namespace {

LatentVideo random_latent(int frames, uint64_t seed, double scale = 0.5) {
  Rng rng(seed);
  LatentVideo lv;
  lv.grid = 2;
  lv.patch = 2;
  lv.frames.resize(size_t(frames));
  for (auto& f : lv.frames) {
    f.resize(4, 12);
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = scale * rng.normal();
  }
  return lv;
}

double latent_diff(const LatentVideo& a, const LatentVideo& b) {
  REQUIRE(a.frames.size() == b.frames.size());
  double worst = 0.0;
  for (size_t f = 0; f < a.frames.size(); ++f)
    worst = std::max(worst, (a.frames[f] - b.frames[f]).cwiseAbs().maxCoeff());
  return worst;
}

}  // namespace

TEST_CASE("preconditioning coefficients match their closed forms") {
  // sigma == sigma_data is the symmetric point.
  EdmCoeffs c = edm_coeffs(0.5, 0.5);
  CHECK(c.c_skip == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(c.c_out == doctest::Approx(std::sqrt(2.0) / 4.0).epsilon(1e-15));
  CHECK(c.c_in == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(c.c_noise == doctest::Approx(0.25 * std::log(0.5)).epsilon(1e-15));

  for (double s : {1e-3, 0.1, 0.5, 2.0, 80.0}) {
    EdmCoeffs k = edm_coeffs(s, 0.5);
    // Loss weight exactly cancels the output scaling.
    CHECK(edm_loss_weight(s, 0.5) * k.c_out * k.c_out ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(k.c_out * k.c_out ==
          doctest::Approx(s * s * k.c_skip).epsilon(1e-12));
    CHECK(k.c_in * k.c_in * (s * s + 0.25) ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(edm_coeffs(0.0), NumericError);
}

TEST_CASE("training sigma proposal is the documented log-normal") {
  Rng rng(123);
  const int n = 20000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double s = sample_train_sigma(rng);
    CHECK(s > 0.0);
    const double l = std::log(s);
    sum += l;
    sum2 += l * l;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sum2 / n - mean * mean);
  CHECK(std::abs(mean - (-1.2)) < 0.05);
  CHECK(std::abs(sd - 1.2) < 0.05);
}

TEST_CASE("karras schedule endpoints and shape") {
  NoiseSchedule one = karras_schedule(1);
  REQUIRE(one.sigmas.size() == 2);
  CHECK(one.sigmas[0] == 80.0);
  CHECK(one.sigmas[1] == 0.0);

  NoiseSchedule s = karras_schedule(10);
  REQUIRE(s.sigmas.size() == 11);
  CHECK(s.sigmas.front() == doctest::Approx(80.0).epsilon(1e-12));
  CHECK(s.sigmas[9] == doctest::Approx(0.002).epsilon(1e-9));
  CHECK(s.sigmas.back() == 0.0);
  for (size_t i = 0; i + 1 < s.sigmas.size(); ++i)
    CHECK(s.sigmas[i] > s.sigmas[i + 1]);

  CHECK_THROWS_AS(karras_schedule(0), ConfigError);
  CHECK_THROWS_AS(karras_schedule(5, -1.0, 80.0), ConfigError);
  CHECK_THROWS_AS(karras_schedule(5, 2.0, 1.0), ConfigError);

  NoiseSchedule bad;
  bad.sigmas = {1.0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.sigmas = {1.0, 2.0, 0.0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.sigmas = {2.0, 0.0, 1.0};  // zero before the end
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("a perfect denoiser pulls any start back to the data point") {
  // With D(z, s) == z* the probability-flow ODE dz/ds = (z - z*) / s is
  // linear in s, so both the Euler and the Heun update are exact and the
  // sampler must land on z* up to rounding, whatever the schedule.
  LatentVideo z_star = random_latent(5, 9001, 0.7);
  DenoiseFn perfect = [&](const LatentVideo&, double) { return z_star; };

  for (int steps : {1, 10, 40}) {
    LatentVideo out = edm_sample_latent(perfect, z_star, karras_schedule(steps), 5);
    REQUIRE(out.n_frames() == z_star.n_frames());
    CHECK_MESSAGE(latent_diff(out, z_star) <= 1e-6, "steps=", steps);
  }

  // The single-step schedule is one exact Euler step.
  LatentVideo out1 = edm_sample_latent(perfect, z_star, karras_schedule(1), 5);
  CHECK(latent_diff(out1, z_star) <= 1e-9);
}

TEST_CASE("sampling is bit-reproducible for a fixed seed") {
  LatentVideo z_star = random_latent(3, 42, 0.4);
  DenoiseFn perfect = [&](const LatentVideo&, double) { return z_star; };
  NoiseSchedule sch = karras_schedule(6);

  // A denoiser that only half-corrects keeps the noise alive through every
  // step, so this exercises the full Heun path, not just the fixed point.
  DenoiseFn half = [&](const LatentVideo& z, double) {
    LatentVideo d = z_star;
    for (size_t f = 0; f < d.frames.size(); ++f)
      d.frames[f] = 0.5 * (d.frames[f] + z.frames[f]);
    return d;
  };

  LatentVideo a = edm_sample_latent(half, z_star, sch, 7);
  LatentVideo b = edm_sample_latent(half, z_star, sch, 7);
  CHECK(latent_diff(a, b) == 0.0);

  LatentVideo c = edm_sample_latent(half, z_star, sch, 8);
  CHECK(latent_diff(a, c) > 0.0);

  LatentVideo d = edm_sample_latent(perfect, z_star, sch, 7);
  CHECK(latent_diff(d, z_star) <= 1e-6);
}

TEST_CASE("sampler reports the failing step on numeric blowup") {
  LatentVideo shape = random_latent(2, 1);
  DenoiseFn nan_after_first = [&](const LatentVideo& z, double sigma) {
    LatentVideo d = z;
    if (sigma < 50.0)
      for (auto& f : d.frames) f.setConstant(std::nan(""));
    return d;
  };
  CHECK_THROWS_AS(
      edm_sample_latent(nan_after_first, shape, karras_schedule(8), 3),
      NumericError);
  CHECK_THROWS_AS(edm_sample_latent(nullptr, shape, karras_schedule(4), 3),
                  ConfigError);
}

TEST_CASE("restore_video keeps geometry and re-pins the cyclic frame") {
  ModelConfig cfg;
  cfg.latent_channels = 12;   // patch 2
  cfg.cond_channels = 12;
  cfg.width = 16;
  cfg.depth = 1;
  cfg.heads = 2;
  cfg.tokens = 16;            // 8x8 frames at patch 2 -> grid 4
  cfg.ref_token_count = 3;
  cfg.ref_source_tokens = 4;  // 8x8 reference at patch 4 -> 4 tokens
  cfg.ref_channels = 48;      // patch 4
  cfg.max_frames = 8;
  FixerModel model(cfg);
  model.init_params(55);

  // Tiny cyclic "coarse" video: constant gray frames at ring azimuths.
  Video coarse;
  const int n = 5;
  for (int i = 0; i < n; ++i) {
    Image f(8, 8);
    std::fill(f.data.begin(), f.data.end(), 0.4 + 0.02 * i);
    coarse.frames.push_back(f);
    coarse.azimuths.push_back(2.0 * M_PI * i / n);
  }
  coarse.cyclic = false;
  Video cyc = make_cyclic(coarse);
  Image reference = cyc.frames.front();

  Video out = restore_video(model, cyc, reference, karras_schedule(4), 11);
  out.validate();
  CHECK(out.cyclic);
  CHECK(out.frames.size() == cyc.frames.size());
  CHECK(out.width() == 8);
  CHECK(out.azimuths == cyc.azimuths);

  // Deterministic under the seed.
  Video again = restore_video(model, cyc, reference, karras_schedule(4), 11);
  for (size_t f = 0; f < out.frames.size(); ++f)
    for (size_t i = 0; i < out.frames[f].data.size(); ++i)
      CHECK(out.frames[f].data[i] == again.frames[f].data[i]);

  // Wrong geometry is rejected up front.
  Video big;
  for (int i = 0; i < 3; ++i) {
    big.frames.push_back(Image(16, 16));
    big.azimuths.push_back(2.0 * M_PI * i / 3);
  }
  for (auto& fr : big.frames)
    std::fill(fr.data.begin(), fr.data.end(), 0.5);
  CHECK_THROWS_AS(restore_video(model, make_cyclic(big), reference,
                                karras_schedule(2), 1),
                  ConfigError);
}
