#include "resplat/ssim.hpp"

#include <cmath>
#include <vector>

namespace resplat {

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

// Sum over each k x k window; output is (w-k+1) x (h-k+1).
std::vector<double> box_sum(const std::vector<double>& src, int w, int h,
                            int k) {
  const int ow = w - k + 1, oh = h - k + 1;
  std::vector<double> horiz(static_cast<size_t>(ow) * h);
  for (int y = 0; y < h; ++y) {
    double run = 0.0;
    for (int x = 0; x < k; ++x) run += src[static_cast<size_t>(y) * w + x];
    horiz[static_cast<size_t>(y) * ow] = run;
    for (int x = 1; x < ow; ++x) {
      run += src[static_cast<size_t>(y) * w + x + k - 1] -
             src[static_cast<size_t>(y) * w + x - 1];
      horiz[static_cast<size_t>(y) * ow + x] = run;
    }
  }
  std::vector<double> out(static_cast<size_t>(ow) * oh);
  for (int x = 0; x < ow; ++x) {
    double run = 0.0;
    for (int y = 0; y < k; ++y) run += horiz[static_cast<size_t>(y) * ow + x];
    out[x] = run;
    for (int y = 1; y < oh; ++y) {
      run += horiz[static_cast<size_t>(y + k - 1) * ow + x] -
             horiz[static_cast<size_t>(y - 1) * ow + x];
      out[static_cast<size_t>(y) * ow + x] = run;
    }
  }
  return out;
}

// Transpose of box_sum: scatters a window-grid field back onto pixels.
std::vector<double> box_scatter(const std::vector<double>& grid, int w, int h,
                                int k) {
  const int ow = w - k + 1, oh = h - k + 1;
  std::vector<double> out(static_cast<size_t>(w) * h, 0.0);
  for (int wy = 0; wy < oh; ++wy)
    for (int wx = 0; wx < ow; ++wx) {
      const double g = grid[static_cast<size_t>(wy) * ow + wx];
      if (g == 0.0) continue;
      for (int dy = 0; dy < k; ++dy)
        for (int dx = 0; dx < k; ++dx)
          out[static_cast<size_t>(wy + dy) * w + (wx + dx)] += g;
    }
  return out;
}

void check_pair(const Image& a, const Image& b, int window) {
  a.validate();
  b.validate();
  if (a.width != b.width || a.height != b.height)
    throw NumericError("ssim: image size mismatch");
  if (a.width < window || a.height < window)
    throw NumericError("ssim: image smaller than the window");
  if (window < 2) throw NumericError("ssim: window must be at least 2");
}

std::vector<double> channel_plane(const Image& im, int c) {
  std::vector<double> p(im.pixel_count());
  for (size_t i = 0; i < p.size(); ++i) p[i] = im.data[i * 3 + c];
  return p;
}

}  // namespace

double ssim(const Image& a, const Image& b, int window) {
  check_pair(a, b, window);
  const int w = a.width, h = a.height, k = window;
  const int ow = w - k + 1, oh = h - k + 1;
  const double n = static_cast<double>(k) * k;

  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    const std::vector<double> x = channel_plane(a, c);
    const std::vector<double> y = channel_plane(b, c);
    std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = box_sum(x, w, h, k);
    const auto my = box_sum(y, w, h, k);
    const auto mxx = box_sum(xx, w, h, k);
    const auto myy = box_sum(yy, w, h, k);
    const auto mxy = box_sum(xy, w, h, k);

    for (size_t i = 0; i < mx.size(); ++i) {
      const double ux = mx[i] / n, uy = my[i] / n;
      const double vx = mxx[i] / n - ux * ux;
      const double vy = myy[i] / n - uy * uy;
      const double vxy = mxy[i] / n - ux * uy;
      const double a1 = 2 * ux * uy + kC1, a2 = 2 * vxy + kC2;
      const double b1 = ux * ux + uy * uy + kC1, b2 = vx + vy + kC2;
      total += (a1 * a2) / (b1 * b2);
    }
  }
  return total / (3.0 * ow * oh);
}

Image ssim_backward(const Image& a, const Image& b, double upstream,
                    int window) {
  check_pair(a, b, window);
  const int w = a.width, h = a.height, k = window;
  const int ow = w - k + 1, oh = h - k + 1;
  const double n = static_cast<double>(k) * k;
  const double coef = upstream / (3.0 * ow * oh);

  Image grad(w, h);
  for (int c = 0; c < 3; ++c) {
    const std::vector<double> x = channel_plane(a, c);
    const std::vector<double> y = channel_plane(b, c);
    std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = box_sum(x, w, h, k);
    const auto my = box_sum(y, w, h, k);
    const auto mxx = box_sum(xx, w, h, k);
    const auto myy = box_sum(yy, w, h, k);
    const auto mxy = box_sum(xy, w, h, k);

    // Window-level gradients wrt the raw box means of x, x^2, x*y.
    std::vector<double> g_mx(mx.size()), g_mxx(mx.size()), g_mxy(mx.size());
    for (size_t i = 0; i < mx.size(); ++i) {
      const double ux = mx[i] / n, uy = my[i] / n;
      const double vx = mxx[i] / n - ux * ux;
      const double vy = myy[i] / n - uy * uy;
      const double vxy = mxy[i] / n - ux * uy;
      const double a1 = 2 * ux * uy + kC1, a2 = 2 * vxy + kC2;
      const double b1 = ux * ux + uy * uy + kC1, b2 = vx + vy + kC2;
      const double s = (a1 * a2) / (b1 * b2);
      // Partials in the (ux, mxx/n, mxy/n) parametrization.
      const double d_ux = (2 * uy * a2 - 2 * uy * a1) / (b1 * b2) -
                          s * (2 * ux / b1 - 2 * ux / b2);
      const double d_mxx = -s / b2;            // via vx
      const double d_mxy = 2 * a1 / (b1 * b2);  // via vxy
      // Divide by n to express against box sums, times upstream scaling.
      g_mx[i] = coef * d_ux / n;
      g_mxx[i] = coef * d_mxx / n;
      g_mxy[i] = coef * d_mxy / n;
    }

    const auto sx = box_scatter(g_mx, w, h, k);
    const auto sxx = box_scatter(g_mxx, w, h, k);
    const auto sxy = box_scatter(g_mxy, w, h, k);
    for (size_t i = 0; i < x.size(); ++i)
      grad.data[i * 3 + c] = sx[i] + 2.0 * x[i] * sxx[i] + y[i] * sxy[i];
  }
  return grad;
}

}  // namespace resplat
