#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "resplat/common.hpp"
#include "resplat/latent.hpp"
#include "resplat/video.hpp"
#include "test_utils.hpp"

using namespace resplat;

namespace {

Image random_image(int w, int h, uint64_t seed) {
  Rng rng(seed);
  Image im(w, h);
  for (double& v : im.data) v = rng.uniform();
  return im;
}

// Straightforward dense softmax-attention oracle, written independently of
// the library implementation (no max-subtraction trick, no masking logic).
Eigen::MatrixXd dense_attention_oracle(const Eigen::MatrixXd& q,
                                       const Eigen::MatrixXd& k,
                                       const Eigen::MatrixXd& v) {
  const double scale = 1.0 / std::sqrt(double(q.cols()));
  Eigen::MatrixXd s = scale * (q * k.transpose());
  Eigen::MatrixXd a(s.rows(), s.cols());
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    Eigen::ArrayXd e = s.row(r).array().exp();
    a.row(r) = (e / e.sum()).matrix();
  }
  return a * v;
}

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols,
                              uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("patchify produces the expected token grid") {
  Image im = random_image(32, 32, 11);
  Eigen::MatrixXd t = patchify(im, 4);
  CHECK(t.rows() == 64);   // (32/4)^2 tokens
  CHECK(t.cols() == 48);   // 3 * 4 * 4 channels

  // Token index is row-major over the patch grid; channel index is
  // (dy * patch + dx) * 3 + c, values shifted by -0.5.
  // Pixel (x=5, y=2) lives in patch (gx=1, gy=0) -> token 1, dy=2, dx=1.
  CHECK(t(1, (2 * 4 + 1) * 3 + 0) == doctest::Approx(im.at(5, 2, 0) - 0.5).epsilon(1e-15));
  CHECK(t(1, (2 * 4 + 1) * 3 + 2) == doctest::Approx(im.at(5, 2, 2) - 0.5).epsilon(1e-15));
  // Pixel (x=1, y=0) -> token 0, dy=0, dx=1 -> cols 3..5.
  CHECK(t(0, 3 + 1) == doctest::Approx(im.at(1, 0, 1) - 0.5).epsilon(1e-15));
}

TEST_CASE("patchify/unpatchify round trip is the identity") {
  Image im = random_image(32, 32, 7);
  Eigen::MatrixXd t = patchify(im, 4);
  Image back = unpatchify(t, 8, 4, /*clamp01=*/false);
  REQUIRE(back.width == 32);
  REQUIRE(back.height == 32);
  double worst = 0.0;
  for (size_t i = 0; i < im.data.size(); ++i)
    worst = std::max(worst, std::abs(im.data[i] - back.data[i]));
  // The -0.5/+0.5 shift can cost one rounding step for tiny values.
  CHECK(worst <= 1e-15);
}

TEST_CASE("patch size one tokenizes individual pixels") {
  Image im = random_image(4, 4, 3);
  Eigen::MatrixXd t = patchify(im, 1);
  REQUIRE(t.rows() == 16);
  REQUIRE(t.cols() == 3);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 3; ++c)
        CHECK(t(y * 4 + x, c) == im.at(x, y, c) - 0.5);
}

TEST_CASE("patchify rejects incompatible shapes") {
  CHECK_THROWS_AS(patchify(random_image(30, 30, 1), 4), NumericError);
  CHECK_THROWS_AS(patchify(random_image(32, 16, 1), 4), NumericError);
  CHECK_THROWS_AS(patchify(random_image(32, 32, 1), 0), ConfigError);
  CHECK_THROWS_AS(unpatchify(Eigen::MatrixXd::Zero(10, 48), 8, 4),
                  NumericError);
}

TEST_CASE("unpatchify clamping saturates out-of-range values") {
  Eigen::MatrixXd t = Eigen::MatrixXd::Constant(4, 3, 0.7);  // 1.2 unshifted
  Image clamped = unpatchify(t, 2, 1, /*clamp01=*/true);
  Image raw = unpatchify(t, 2, 1, /*clamp01=*/false);
  CHECK(clamped.at(0, 0, 0) == 1.0);
  CHECK(raw.at(0, 0, 0) == doctest::Approx(1.2));
}

TEST_CASE("reference tokens use the coarser reference patch size") {
  Image ref = random_image(32, 32, 21);
  Eigen::MatrixXd t = reference_tokens(ref, 8);
  CHECK(t.rows() == 16);    // (32/8)^2
  CHECK(t.cols() == 192);   // 3 * 8 * 8
}

TEST_CASE("boundary mask hits exactly the four first/last-frame corners") {
  Eigen::MatrixXd m = boundary_mask(19);
  REQUIRE(m.rows() == 19);
  REQUIRE(m.cols() == 19);
  int masked = 0;
  for (int r = 0; r < 19; ++r)
    for (int c = 0; c < 19; ++c) {
      const bool corner = (r == 0 || r == 18) && (c == 0 || c == 18);
      if (corner) {
        CHECK(m(r, c) == kMaskNegInf);
        ++masked;
      } else {
        CHECK(m(r, c) == 0.0);
      }
    }
  CHECK(masked == 4);

  // Row 1 of a 3-frame mask is entirely unmasked.
  Eigen::MatrixXd m3 = boundary_mask(3);
  CHECK(m3.row(1).cwiseAbs().maxCoeff() == 0.0);

  // Two frames degenerate to a fully masked matrix.
  Eigen::MatrixXd m2 = boundary_mask(2);
  CHECK((m2.array() == kMaskNegInf).all());

  CHECK_THROWS_AS(boundary_mask(1), ConfigError);
}

TEST_CASE("zero-masked attention matches a dense softmax oracle") {
  const int t = 6, d = 8;
  Eigen::MatrixXd q = random_matrix(t, d, 100);
  Eigen::MatrixXd k = random_matrix(t, d, 101);
  Eigen::MatrixXd v = random_matrix(t, d, 102);
  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(t, t);

  Eigen::MatrixXd got = masked_attention(q, k, v, zero);
  Eigen::MatrixXd want = dense_attention_oracle(q, k, v);
  CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("boundary-masked attention zeroes the corners and renormalizes") {
  const int t = 7, d = 8;
  Eigen::MatrixXd q = random_matrix(t, d, 200);
  Eigen::MatrixXd k = random_matrix(t, d, 201);
  Eigen::MatrixXd v = random_matrix(t, d, 202);

  Eigen::MatrixXd attn;
  int dead = -1;
  Eigen::MatrixXd got =
      masked_attention(q, k, v, boundary_mask(t), &dead, &attn);
  CHECK(dead == 0);

  // Masked columns are exact zeros; every row still sums to one.
  CHECK(attn(0, 0) == 0.0);
  CHECK(attn(0, t - 1) == 0.0);
  CHECK(attn(t - 1, 0) == 0.0);
  CHECK(attn(t - 1, t - 1) == 0.0);
  for (int r = 0; r < t; ++r)
    CHECK(attn.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));

  // Interior rows carry no masked entries, so they match the unmasked case.
  Eigen::MatrixXd attn_free;
  masked_attention(q, k, v, Eigen::MatrixXd::Zero(t, t), nullptr, &attn_free);
  for (int r = 1; r < t - 1; ++r)
    CHECK((attn.row(r) - attn_free.row(r)).cwiseAbs().maxCoeff() <= 1e-7);
}

TEST_CASE("fully masked rows collapse to zero output") {
  const int d = 5;
  Eigen::MatrixXd q = random_matrix(2, d, 300);
  Eigen::MatrixXd k = random_matrix(2, d, 301);
  Eigen::MatrixXd v = random_matrix(2, d, 302);

  Eigen::MatrixXd attn;
  int dead = -1;
  Eigen::MatrixXd out = masked_attention(q, k, v, boundary_mask(2), &dead, &attn);
  CHECK(dead == 2);
  CHECK(attn.cwiseAbs().maxCoeff() == 0.0);
  CHECK(out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("masked entries saturate regardless of the finite score there") {
  // Adding any finite offset to the masked entries (equivalently, replacing
  // the raw first<->last scores with arbitrary finite numbers) must not
  // change a single output value: the sentinel dominates them all.
  const int t = 7, d = 8;
  Eigen::MatrixXd q = random_matrix(t, d, 400);
  Eigen::MatrixXd k = random_matrix(t, d, 401);
  Eigen::MatrixXd v = random_matrix(t, d, 402);

  Eigen::MatrixXd base = masked_attention(q, k, v, boundary_mask(t));
  for (double delta : {12345.0, -1e9, 1e6, -0.5}) {
    Eigen::MatrixXd m = boundary_mask(t);
    m(0, 0) += delta;
    m(0, t - 1) += delta;
    m(t - 1, 0) += delta;
    m(t - 1, t - 1) += delta;
    Eigen::MatrixXd got = masked_attention(q, k, v, m);
    CHECK((got - base).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("attention validates shapes") {
  Eigen::MatrixXd q = random_matrix(4, 8, 1);
  Eigen::MatrixXd k = random_matrix(5, 7, 2);  // feature dim mismatch
  Eigen::MatrixXd v = random_matrix(5, 8, 3);
  CHECK_THROWS_AS(masked_attention(q, k, v, Eigen::MatrixXd::Zero(4, 5)),
                  NumericError);
  Eigen::MatrixXd k2 = random_matrix(5, 8, 4);
  CHECK_THROWS_AS(masked_attention(q, k2, v, Eigen::MatrixXd::Zero(3, 5)),
                  NumericError);
}

TEST_CASE("video/latent conversions round trip") {
  // Small cyclic ring video out of random frames.
  Video v;
  for (int i = 0; i < 4; ++i) v.frames.push_back(random_image(8, 8, 50 + i));
  v.azimuths = {0.0, 1.5707963267948966, 3.141592653589793, 4.71238898038469};
  v.cyclic = false;
  Video vc = make_cyclic(v);

  LatentVideo lv = video_to_latent(vc, 2);
  CHECK(lv.grid == 4);
  CHECK(lv.patch == 2);
  CHECK(lv.cyclic);
  CHECK(lv.n_frames() == 5);
  CHECK(lv.tokens() == 16);
  CHECK(lv.channels() == 12);

  Video back = latent_to_video(lv, /*clamp01=*/false);
  CHECK(back.cyclic);
  REQUIRE(back.frames.size() == 5);
  for (size_t f = 0; f < back.frames.size(); ++f) {
    double worst = 0.0;
    for (size_t i = 0; i < back.frames[f].data.size(); ++i)
      worst = std::max(worst, std::abs(back.frames[f].data[i] -
                                       vc.frames[f].data[i]));
    CHECK(worst <= 1e-15);
  }
  // Latents carry no camera info: azimuths come back as placeholders.
  for (double a : back.azimuths) CHECK(a == 0.0);

  CHECK_THROWS_AS(video_to_latent(vc, 3), NumericError);  // 8 % 3 != 0
}

TEST_CASE("latent video validation catches broken invariants") {
  LatentVideo lv;
  lv.grid = 2;
  lv.patch = 2;
  CHECK_THROWS_AS(lv.validate(), NumericError);  // no frames

  lv.frames.assign(3, Eigen::MatrixXd::Zero(4, 12));
  lv.validate();

  lv.cyclic = true;
  lv.frames.back()(0, 0) = 0.25;  // cyclic but last != first
  CHECK_THROWS_AS(lv.validate(), NumericError);

  lv.frames.back()(0, 0) = 0.0;
  lv.validate();

  lv.frames[1](2, 3) = std::nan("");
  CHECK_THROWS_AS(lv.validate(), NumericError);
}
