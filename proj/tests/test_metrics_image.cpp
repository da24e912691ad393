#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "resplat/image.hpp"
#include "resplat/metrics.hpp"
#include "resplat/ssim.hpp"
#include "test_utils.hpp"

using namespace resplat;

namespace {

Image random_image(uint64_t seed, int w, int h) {
  Rng rng(seed);
  Image im(w, h);
  for (double& v : im.data) v = rng.uniform();
  return im;
}

}  // namespace

TEST_CASE("psnr closed forms") {
  const Image a = Image::constant(8, 8, Vec3(0.5, 0.5, 0.5));
  const Image b = Image::constant(8, 8, Vec3(0.75, 0.75, 0.75));
  // MSE = 0.0625 -> 10*log10(1/0.0625)
  CHECK(psnr(a, b) == doctest::Approx(12.0412).epsilon(1e-5));
  CHECK(psnr(a, a) == kPsnrCap);
  CHECK(psnr(a, b) == psnr(b, a));
}

TEST_CASE("psnr matches a direct mse oracle") {
  const Image a = random_image(11, 9, 7);
  const Image b = random_image(12, 9, 7);
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    m += d * d;
  }
  m /= static_cast<double>(a.data.size());
  CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(1.0 / m)).epsilon(1e-9));
  CHECK(mse(a, b) == doctest::Approx(m).epsilon(1e-12));
}

TEST_CASE("psnr rejects dimension mismatch") {
  CHECK_THROWS_AS(psnr(Image(4, 4), Image(5, 4)), NumericError);
}

TEST_CASE("ssim identity and closed forms") {
  const Image x = random_image(21, 16, 16);
  CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-9));

  // Constant images: variance terms vanish, luminance term remains.
  const double c1 = 0.3, c2 = 0.6, C1 = 0.01 * 0.01;
  const Image a = Image::constant(12, 12, Vec3(c1, c1, c1));
  const Image b = Image::constant(12, 12, Vec3(c2, c2, c2));
  const double lum = (2 * c1 * c2 + C1) / (c1 * c1 + c2 * c2 + C1);
  CHECK(ssim(a, b) == doctest::Approx(lum).epsilon(1e-9));
}

TEST_CASE("ssim of an image against its negative is negative") {
  Image x = random_image(31, 16, 16);
  // Mid-contrast: stretch around 0.5 so structure dominates.
  for (double& v : x.data) v = 0.5 + 0.45 * (v - 0.5) * 2.0;
  Image inv = x;
  for (double& v : inv.data) v = 1.0 - v;
  CHECK(ssim(x, inv) < 0.0);
}

TEST_CASE("ssim rejects images smaller than the window") {
  CHECK_THROWS_AS(ssim(Image(4, 4), Image(4, 4), 7), NumericError);
}

TEST_CASE("ssim backward matches finite differences") {
  const Image a0 = random_image(41, 10, 10);
  const Image b = random_image(42, 10, 10);
  const Image g = ssim_backward(a0, b, 1.0);
  Rng pick(43);
  for (int t = 0; t < 12; ++t) {
    const size_t i = static_cast<size_t>(pick.uniform_int(
        0, static_cast<int>(a0.data.size()) - 1));
    Image ap = a0, am = a0;
    const double h = 1e-5;
    ap.data[i] += h;
    am.data[i] -= h;
    const double fd = (ssim(ap, b) - ssim(am, b)) / (2 * h);
    CHECK(g.data[i] == doctest::Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("image quantization matches png round trip") {
  const auto dir = testutil::scratch_dir("quantize");
  Image im = random_image(51, 9, 6);
  Image q16 = im;
  q16.quantize(16);
  write_png((dir / "a.png").string(), im, 16);
  const Image back = read_png((dir / "a.png").string());
  CHECK(testutil::max_abs_diff(q16, back) == 0.0);

  // Quantization is idempotent.
  Image q2 = q16;
  q2.quantize(16);
  CHECK(testutil::max_abs_diff(q16, q2) == 0.0);

  Image q8 = im;
  q8.quantize(8);
  write_png((dir / "b.png").string(), im, 8);
  CHECK(testutil::max_abs_diff(q8, read_png((dir / "b.png").string())) == 0.0);
}

TEST_CASE("ppm round trip at 8 bits") {
  const auto dir = testutil::scratch_dir("ppm");
  Image im = random_image(61, 7, 5);
  im.quantize(8);
  write_ppm((dir / "a.ppm").string(), im);
  CHECK(testutil::max_abs_diff(im, read_ppm((dir / "a.ppm").string())) == 0.0);
}

TEST_CASE("bilinear sampling at pixel centers returns exact pixels") {
  const Image im = random_image(71, 6, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 6; ++x) {
      const Vec3 s = im.sample_bilinear(x + 0.5, y + 0.5);
      CHECK((s - im.pixel(x, y)).norm() == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("attention heatmap helper metrics") {
  Eigen::MatrixXd attn(4, 4);
  attn << 0.0, 0.5, 0.5, 0.0,  //
      0.25, 0.25, 0.25, 0.25,  //
      0.1, 0.2, 0.3, 0.4,      //
      0.0, 0.6, 0.4, 0.0;
  CHECK(attn_corner_mass(attn) == doctest::Approx(0.0));
  CHECK(attn_max_entry(attn) == doctest::Approx(0.6));
  CHECK_NOTHROW(validate_attention(attn));

  Eigen::MatrixXd bad = attn;
  bad(1, 1) = 0.5;  // row no longer sums to 1
  CHECK_THROWS_AS(validate_attention(bad), NumericError);

  Eigen::MatrixXd corners = Eigen::MatrixXd::Constant(3, 3, 1.0 / 3.0);
  CHECK(attn_corner_mass(corners) == doctest::Approx(1.0 / 3.0));
}
