#include "resplat/rasterizer.hpp"

#include <algorithm>
#include <cmath>

#include "resplat/parallel.hpp"

namespace resplat {

namespace {

using Mat23 = Eigen::Matrix<double, 2, 3>;

// Intermediates from projection that the backward chain reuses.
struct ProjectionCache {
  Vec3 p_cam = Vec3::Zero();
  Mat23 J = Mat23::Zero();
  Mat3 M = Mat3::Zero();  // camera-space 3D covariance W Sigma W^T
  Mat3 R = Mat3::Identity();
  Vec3 s2 = Vec3::Ones();  // exp(2 * log_scale)
};

std::optional<Splat2D> project_impl(const Gaussian3D& g,
                                    const CameraPose& pose,
                                    const RenderSettings& st, int parent,
                                    ProjectionCache* cache) {
  const Vec3 p = pose.to_camera(g.position);
  if (!(p[2] > st.z_near)) return std::nullopt;

  const Mat3 R = quat_to_rot(g.rotation);
  const Vec3 s2 = (2.0 * g.log_scale).array().exp();
  const Mat3 sigma3d = R * s2.asDiagonal() * R.transpose();
  const Mat3 M =
      pose.world_to_cam * sigma3d * pose.world_to_cam.transpose();

  const double f = pose.focal;
  const double inv_z = 1.0 / p[2];
  Mat23 J;
  J << f * inv_z, 0.0, -f * p[0] * inv_z * inv_z,  //
      0.0, f * inv_z, -f * p[1] * inv_z * inv_z;

  Mat2 cov = J * M * J.transpose();
  cov = 0.5 * (cov + cov.transpose());  // kill asymmetry from rounding
  cov(0, 0) += st.cov_floor_px2;
  cov(1, 1) += st.cov_floor_px2;

  const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
  if (!(det > 0.0) || !cov.allFinite())
    throw NumericError("projected covariance is not positive definite");

  Splat2D s;
  s.mean = pose.project(p);
  s.cov = cov;
  s.cov_inv << cov(1, 1) / det, -cov(0, 1) / det,  //
      -cov(1, 0) / det, cov(0, 0) / det;
  s.alpha = sigmoid(g.opacity_logit);
  s.color = g.color;
  s.depth = p[2];
  s.parent = parent;

  const double rx = st.support_sigmas * std::sqrt(cov(0, 0));
  const double ry = st.support_sigmas * std::sqrt(cov(1, 1));
  s.x0 = std::max(0, static_cast<int>(std::ceil(s.mean[0] - rx - 0.5)));
  s.x1 = std::min(pose.width - 1,
                  static_cast<int>(std::floor(s.mean[0] + rx - 0.5)));
  s.y0 = std::max(0, static_cast<int>(std::ceil(s.mean[1] - ry - 0.5)));
  s.y1 = std::min(pose.height - 1,
                  static_cast<int>(std::floor(s.mean[1] + ry - 0.5)));
  if (s.x0 > s.x1 || s.y0 > s.y1) return std::nullopt;

  if (cache) {
    cache->p_cam = p;
    cache->J = J;
    cache->M = M;
    cache->R = R;
    cache->s2 = s2;
  }
  return s;
}

void row_range(int height, int chunks, int c, int* ya, int* yb) {
  *ya = static_cast<int>(static_cast<int64_t>(height) * c / chunks);
  *yb = static_cast<int>(static_cast<int64_t>(height) * (c + 1) / chunks);
}

// Depth order with a stable tiebreak so compositing is fully deterministic.
void sort_by_depth(std::vector<Splat2D>& splats) {
  std::sort(splats.begin(), splats.end(),
            [](const Splat2D& a, const Splat2D& b) {
              if (a.depth != b.depth) return a.depth < b.depth;
              return a.parent < b.parent;
            });
}

// 2D-level gradients for one splat, before the projection chain.
struct Grad2D {
  Vec2 mu = Vec2::Zero();
  Mat2 cov = Mat2::Zero();
  double alpha = 0.0;
  Vec3 color = Vec3::Zero();
};

// Pulls dL/dw back through the weight expression at one pixel:
// w = alpha * exp(-0.5 d^T S^-1 d).
inline void pull_weight(const Splat2D& s, double ux, double uy, double w,
                        double dldw, Grad2D* g) {
  g->alpha += (w / s.alpha) * dldw;
  const double dldm = -0.5 * w * dldw;
  const Vec2 d(ux - s.mean[0], uy - s.mean[1]);
  const Vec2 q = s.cov_inv * d;
  g->mu += (-2.0 * dldm) * q;
  g->cov += (-dldm) * (q * q.transpose());
}

// Chains one splat's 2D gradients through projection into the 3D parameter
// gradients of its parent gaussian.
void chain_projection(const Gaussian3D& g, const CameraPose& pose,
                      const ProjectionCache& pc, const Grad2D& g2,
                      SceneGrads* out, int parent) {
  out->color[parent] += g2.color;
  const double a = sigmoid(g.opacity_logit);
  out->opacity_logit[parent] += g2.alpha * a * (1.0 - a);

  const double f = pose.focal;
  const double pz = pc.p_cam[2];
  const double inv_z = 1.0 / pz;
  const double inv_z2 = inv_z * inv_z;

  // Mean path: the projection Jacobian is exactly J.
  Vec3 g_pcam = pc.J.transpose() * g2.mu;

  // Covariance path through J's dependence on the camera-space mean.
  Mat23 dJ[3];
  dJ[0] << 0, 0, -f * inv_z2, 0, 0, 0;
  dJ[1] << 0, 0, 0, 0, 0, -f * inv_z2;
  dJ[2] << -f * inv_z2, 0, 2.0 * f * pc.p_cam[0] * inv_z2 * inv_z,  //
      0, -f * inv_z2, 2.0 * f * pc.p_cam[1] * inv_z2 * inv_z;
  const Mat23 JM = pc.J * pc.M;
  for (int k = 0; k < 3; ++k) {
    const Mat2 t = dJ[k] * JM.transpose();
    g_pcam[k] += (g2.cov.array() * (t + t.transpose()).array()).sum();
  }
  out->position[parent] += pose.world_to_cam.transpose() * g_pcam;

  // World-space 3D covariance gradient.
  const Mat3 g_sigma = pose.world_to_cam.transpose() *
                       (pc.J.transpose() * g2.cov * pc.J) * pose.world_to_cam;

  // Log-scales: sigma = R diag(s2) R^T, d sigma / d l_k = 2 s2_k r_k r_k^T.
  const Mat3 rtgr = pc.R.transpose() * g_sigma * pc.R;
  for (int k = 0; k < 3; ++k)
    out->log_scale[parent][k] += 2.0 * pc.s2[k] * rtgr(k, k);

  // Rotation: dL/dR = (G + G^T) R diag(s2), then through the normalized
  // quaternion and the normalization itself.
  const Mat3 dldr =
      (g_sigma + g_sigma.transpose()) * pc.R * pc.s2.asDiagonal();
  const double qn = g.rotation.norm();
  const Vec4 qh = g.rotation / qn;
  const double w = qh[0], x = qh[1], y = qh[2], z = qh[3];
  Mat3 dR[4];
  dR[0] << 0, -z, y, z, 0, -x, -y, x, 0;
  dR[1] << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
  dR[2] << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
  dR[3] << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
  Vec4 g_qh;
  for (int k = 0; k < 4; ++k)
    g_qh[k] = 2.0 * (dldr.array() * dR[k].array()).sum();
  out->rotation[parent] += (g_qh - qh * qh.dot(g_qh)) / qn;
}

}  // namespace

std::optional<Splat2D> project_gaussian(const Gaussian3D& g,
                                        const CameraPose& pose,
                                        const RenderSettings& settings,
                                        int parent) {
  return project_impl(g, pose, settings, parent, nullptr);
}

std::vector<Splat2D> project_scene(const GaussianScene& scene,
                                   const CameraPose& pose,
                                   const RenderSettings& settings) {
  std::vector<Splat2D> splats;
  splats.reserve(scene.size());
  for (size_t i = 0; i < scene.size(); ++i) {
    auto s = project_impl(scene.gaussians[i], pose, settings,
                          static_cast<int>(i), nullptr);
    if (s) splats.push_back(*s);
  }
  return splats;
}

void SceneGrads::resize_zero(size_t n) {
  position.assign(n, Vec3::Zero());
  log_scale.assign(n, Vec3::Zero());
  rotation.assign(n, Vec4::Zero());
  color.assign(n, Vec3::Zero());
  opacity_logit.assign(n, 0.0);
}

void SceneGrads::accumulate(const SceneGrads& other) {
  for (size_t i = 0; i < position.size(); ++i) {
    position[i] += other.position[i];
    log_scale[i] += other.log_scale[i];
    rotation[i] += other.rotation[i];
    color[i] += other.color[i];
    opacity_logit[i] += other.opacity_logit[i];
  }
}

double SceneGrads::squared_norm() const {
  double s = 0.0;
  for (size_t i = 0; i < position.size(); ++i) {
    s += position[i].squaredNorm() + log_scale[i].squaredNorm() +
         rotation[i].squaredNorm() + color[i].squaredNorm() +
         opacity_logit[i] * opacity_logit[i];
  }
  return s;
}

RenderResult render(const GaussianScene& scene, const CameraPose& pose,
                    const RenderSettings& settings) {
  pose.validate();
  scene.validate();
  if (scene.gaussians.empty())
    throw StageError("cannot render an empty scene");
  std::vector<Splat2D> splats = project_scene(scene, pose, settings);
  if (settings.blend == BlendMode::FrontToBackAlpha) sort_by_depth(splats);

  const int w = pose.width, h = pose.height;
  RenderResult out;
  out.image = Image(w, h);
  out.weight_sum.assign(static_cast<size_t>(w) * h, 0.0);

  parallel_chunks(settings.row_chunks, [&](int c) {
    int ya, yb;
    row_range(h, settings.row_chunks, c, &ya, &yb);
    if (ya >= yb) return;
    const int rows = yb - ya;

    if (settings.blend == BlendMode::NormalizedMean) {
      std::vector<double> sw(static_cast<size_t>(rows) * w, 0.0);
      std::vector<Vec3> sc(static_cast<size_t>(rows) * w, Vec3::Zero());
      for (const Splat2D& s : splats) {
        const int y_lo = std::max(s.y0, ya), y_hi = std::min(s.y1, yb - 1);
        for (int y = y_lo; y <= y_hi; ++y)
          for (int x = s.x0; x <= s.x1; ++x) {
            const double wt = pixel_weight(s, x + 0.5, y + 0.5);
            const size_t i = static_cast<size_t>(y - ya) * w + x;
            sw[i] += wt;
            sc[i] += wt * s.color;
          }
      }
      for (int y = ya; y < yb; ++y)
        for (int x = 0; x < w; ++x) {
          const size_t i = static_cast<size_t>(y - ya) * w + x;
          const Vec3 px = sw[i] > settings.weight_cutoff
                              ? Vec3(sc[i] / sw[i])
                              : settings.background;
          out.image.set_pixel(x, y, px);
          out.weight_sum[static_cast<size_t>(y) * w + x] = sw[i];
        }
    } else {
      std::vector<double> trans(static_cast<size_t>(rows) * w, 1.0);
      std::vector<Vec3> acc(static_cast<size_t>(rows) * w, Vec3::Zero());
      for (const Splat2D& s : splats) {
        const int y_lo = std::max(s.y0, ya), y_hi = std::min(s.y1, yb - 1);
        for (int y = y_lo; y <= y_hi; ++y)
          for (int x = s.x0; x <= s.x1; ++x) {
            const size_t i = static_cast<size_t>(y - ya) * w + x;
            const double a =
                std::min(pixel_weight(s, x + 0.5, y + 0.5), settings.alpha_clip);
            acc[i] += trans[i] * a * s.color;
            trans[i] *= 1.0 - a;
          }
      }
      for (int y = ya; y < yb; ++y)
        for (int x = 0; x < w; ++x) {
          const size_t i = static_cast<size_t>(y - ya) * w + x;
          out.image.set_pixel(x, y, acc[i] + trans[i] * settings.background);
          out.weight_sum[static_cast<size_t>(y) * w + x] = 1.0 - trans[i];
        }
    }
  });

  if (!out.image.all_finite())
    throw NumericError("render produced non-finite pixels");
  return out;
}

SceneGrads render_backward(const GaussianScene& scene, const CameraPose& pose,
                           const RenderSettings& settings,
                           const Image& grad_image) {
  pose.validate();
  scene.validate();
  if (grad_image.width != pose.width || grad_image.height != pose.height)
    throw NumericError("gradient image does not match camera resolution");

  // Re-project, keeping the caches the 3D chain needs.
  std::vector<Splat2D> splats;
  std::vector<ProjectionCache> caches;
  splats.reserve(scene.size());
  caches.reserve(scene.size());
  for (size_t i = 0; i < scene.size(); ++i) {
    ProjectionCache pc;
    auto s = project_impl(scene.gaussians[i], pose, settings,
                          static_cast<int>(i), &pc);
    if (s) {
      splats.push_back(*s);
      caches.push_back(pc);
    }
  }
  if (settings.blend == BlendMode::FrontToBackAlpha) {
    // Sort indices so each splat keeps its cache.
    std::vector<int> order(splats.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (splats[a].depth != splats[b].depth)
        return splats[a].depth < splats[b].depth;
      return splats[a].parent < splats[b].parent;
    });
    std::vector<Splat2D> s2(splats.size());
    std::vector<ProjectionCache> c2(splats.size());
    for (size_t i = 0; i < order.size(); ++i) {
      s2[i] = splats[order[i]];
      c2[i] = caches[order[i]];
    }
    splats.swap(s2);
    caches.swap(c2);
  }

  const int w = pose.width, h = pose.height;
  const int n_chunks = settings.row_chunks;
  std::vector<std::vector<Grad2D>> chunk_grads(
      n_chunks, std::vector<Grad2D>(splats.size()));

  parallel_chunks(n_chunks, [&](int c) {
    int ya, yb;
    row_range(h, n_chunks, c, &ya, &yb);
    if (ya >= yb) return;
    const int rows = yb - ya;
    std::vector<Grad2D>& gs = chunk_grads[c];

    if (settings.blend == BlendMode::NormalizedMean) {
      std::vector<double> sw(static_cast<size_t>(rows) * w, 0.0);
      std::vector<Vec3> sc(static_cast<size_t>(rows) * w, Vec3::Zero());
      for (const Splat2D& s : splats) {
        const int y_lo = std::max(s.y0, ya), y_hi = std::min(s.y1, yb - 1);
        for (int y = y_lo; y <= y_hi; ++y)
          for (int x = s.x0; x <= s.x1; ++x) {
            const double wt = pixel_weight(s, x + 0.5, y + 0.5);
            const size_t i = static_cast<size_t>(y - ya) * w + x;
            sw[i] += wt;
            sc[i] += wt * s.color;
          }
      }
      for (size_t si = 0; si < splats.size(); ++si) {
        const Splat2D& s = splats[si];
        const int y_lo = std::max(s.y0, ya), y_hi = std::min(s.y1, yb - 1);
        for (int y = y_lo; y <= y_hi; ++y)
          for (int x = s.x0; x <= s.x1; ++x) {
            const size_t i = static_cast<size_t>(y - ya) * w + x;
            // Below the cutoff the pixel is constant background: no gradient.
            if (!(sw[i] > settings.weight_cutoff)) continue;
            const Vec3 gc = grad_image.pixel(x, y);
            const Vec3 cpx = sc[i] / sw[i];
            const double ux = x + 0.5, uy = y + 0.5;
            const double wt = pixel_weight(s, ux, uy);
            const double dldw = gc.dot(s.color - cpx) / sw[i];
            gs[si].color += (wt / sw[i]) * gc;
            pull_weight(s, ux, uy, wt, dldw, &gs[si]);
          }
      }
    } else {
      // Forward pass for the final transmittance of each pixel.
      std::vector<double> trans(static_cast<size_t>(rows) * w, 1.0);
      for (const Splat2D& s : splats) {
        const int y_lo = std::max(s.y0, ya), y_hi = std::min(s.y1, yb - 1);
        for (int y = y_lo; y <= y_hi; ++y)
          for (int x = s.x0; x <= s.x1; ++x) {
            const size_t i = static_cast<size_t>(y - ya) * w + x;
            const double a =
                std::min(pixel_weight(s, x + 0.5, y + 0.5), settings.alpha_clip);
            trans[i] *= 1.0 - a;
          }
      }
      // Reverse sweep: rebuild T_i by division, keep the color suffix.
      std::vector<Vec3> suffix(static_cast<size_t>(rows) * w);
      for (size_t i = 0; i < suffix.size(); ++i)
        suffix[i] = trans[i] * settings.background;
      for (size_t r = splats.size(); r-- > 0;) {
        const Splat2D& s = splats[r];
        const int y_lo = std::max(s.y0, ya), y_hi = std::min(s.y1, yb - 1);
        for (int y = y_lo; y <= y_hi; ++y)
          for (int x = s.x0; x <= s.x1; ++x) {
            const size_t i = static_cast<size_t>(y - ya) * w + x;
            const double ux = x + 0.5, uy = y + 0.5;
            const double wt = pixel_weight(s, ux, uy);
            const double a = std::min(wt, settings.alpha_clip);
            const double om = 1.0 - a;
            const double t_here = trans[i] / om;
            const Vec3 gc = grad_image.pixel(x, y);
            gs[r].color += t_here * a * gc;
            if (wt < settings.alpha_clip) {
              const double dldw =
                  gc.dot(t_here * s.color) - gc.dot(suffix[i]) / om;
              pull_weight(s, ux, uy, wt, dldw, &gs[r]);
            }
            suffix[i] += t_here * a * s.color;
            trans[i] = t_here;
          }
      }
    }
  });

  // Ordered reduction across chunks, then one serial chain per splat.
  std::vector<Grad2D> total(splats.size());
  for (int c = 0; c < n_chunks; ++c)
    for (size_t i = 0; i < splats.size(); ++i) {
      total[i].mu += chunk_grads[c][i].mu;
      total[i].cov += chunk_grads[c][i].cov;
      total[i].alpha += chunk_grads[c][i].alpha;
      total[i].color += chunk_grads[c][i].color;
    }

  SceneGrads grads;
  grads.resize_zero(scene.size());
  for (size_t i = 0; i < splats.size(); ++i)
    chain_projection(scene.gaussians[splats[i].parent], pose, caches[i],
                     total[i], &grads, splats[i].parent);
  return grads;
}

}  // namespace resplat
