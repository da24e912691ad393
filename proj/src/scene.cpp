#include "resplat/scene.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace resplat {

Mat3 quat_to_rot(const Vec4& q) {
  const double n = q.norm();
  if (n < 1e-12) throw NumericError("degenerate quaternion");
  const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Mat3 gaussian_cov3d(const Gaussian3D& g) {
  const Mat3 r = quat_to_rot(g.rotation);
  const Vec3 s2 = (2.0 * g.log_scale).array().exp();
  return r * s2.asDiagonal() * r.transpose();
}

void GaussianScene::validate() const {
  if (!bound.lo.allFinite() || !bound.hi.allFinite() ||
      (bound.hi - bound.lo).minCoeff() < 0.0)
    throw NumericError("scene bound is degenerate");
  for (size_t i = 0; i < gaussians.size(); ++i) {
    const Gaussian3D& g = gaussians[i];
    const bool ok = g.position.allFinite() && g.log_scale.allFinite() &&
                    g.rotation.allFinite() && g.color.allFinite() &&
                    std::isfinite(g.opacity_logit) && g.rotation.norm() > 1e-12;
    if (!ok)
      throw NumericError("gaussian " + std::to_string(i) +
                         " has non-finite or degenerate parameters");
    if (!bound.contains(g.position, 1.5))
      throw NumericError("gaussian " + std::to_string(i) +
                         " escaped the scene bound");
  }
}

void GaussianScene::set_bound_from_positions(double pad) {
  if (gaussians.empty()) return;
  Vec3 lo = gaussians.front().position, hi = lo;
  for (const Gaussian3D& g : gaussians) {
    lo = lo.cwiseMin(g.position);
    hi = hi.cwiseMax(g.position);
  }
  const Vec3 margin = Vec3::Constant(pad) + pad * (hi - lo);
  bound.lo = lo - margin;
  bound.hi = hi + margin;
}

namespace {

void append_g17(std::string& out, double v) {
  char buf[40];
  snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

void save_scene(const std::string& path, const GaussianScene& scene) {
  scene.validate();
  std::string out;
  out.reserve(scene.size() * 300 + 128);
  out += "gscene 2\n";
  out += std::to_string(scene.size());
  out += "\nbound";
  for (int k = 0; k < 3; ++k) {
    out += ' ';
    append_g17(out, scene.bound.lo[k]);
  }
  for (int k = 0; k < 3; ++k) {
    out += ' ';
    append_g17(out, scene.bound.hi[k]);
  }
  out += '\n';
  for (const Gaussian3D& g : scene.gaussians) {
    double vals[14] = {g.position[0],  g.position[1],  g.position[2],
                       g.log_scale[0], g.log_scale[1], g.log_scale[2],
                       g.rotation[0],  g.rotation[1],  g.rotation[2],
                       g.rotation[3],  g.color[0],     g.color[1],
                       g.color[2],     g.opacity_logit};
    for (int i = 0; i < 14; ++i) {
      if (i) out += ' ';
      append_g17(out, vals[i]);
    }
    out += '\n';
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw StageError("cannot open for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw StageError("short write: " + path);
}

GaussianScene load_scene(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw StageError("cannot open for reading: " + path);
  std::string magic, bound_tag;
  int version = 0;
  size_t count = 0;
  f >> magic >> version >> count >> bound_tag;
  if (magic != "gscene" || version != 2 || bound_tag != "bound")
    throw StageError("not a scene file: " + path);
  GaussianScene scene;
  for (int k = 0; k < 3; ++k)
    if (!(f >> scene.bound.lo[k])) throw StageError("bad bound in " + path);
  for (int k = 0; k < 3; ++k)
    if (!(f >> scene.bound.hi[k])) throw StageError("bad bound in " + path);
  scene.gaussians.resize(count);
  for (size_t i = 0; i < count; ++i) {
    double v[14];
    for (int k = 0; k < 14; ++k)
      if (!(f >> v[k]))
        throw StageError("truncated scene file: " + path);
    Gaussian3D& g = scene.gaussians[i];
    g.position = Vec3(v[0], v[1], v[2]);
    g.log_scale = Vec3(v[3], v[4], v[5]);
    g.rotation = Vec4(v[6], v[7], v[8], v[9]);
    g.color = Vec3(v[10], v[11], v[12]);
    g.opacity_logit = v[13];
  }
  scene.validate();
  return scene;
}

}  // namespace resplat
