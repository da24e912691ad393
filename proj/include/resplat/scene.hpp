#pragma once

#include <string>
#include <vector>

#include "resplat/common.hpp"

namespace resplat {

// One anisotropic 3D Gaussian primitive. Scales are stored as logs and
// opacity as a logit so every parameter is unconstrained for the optimizer.
// The quaternion is stored unnormalized and normalized wherever it is used.
struct Gaussian3D {
  Vec3 position = Vec3::Zero();
  Vec3 log_scale = Vec3::Zero();
  Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0);  // (w, x, y, z)
  Vec3 color = Vec3::Zero();
  double opacity_logit = 0.0;

  double opacity() const { return sigmoid(opacity_logit); }
  Vec3 scale() const { return log_scale.array().exp(); }
};

// Rotation matrix for a quaternion (normalizes internally).
Mat3 quat_to_rot(const Vec4& q);

// World-space covariance R * diag(exp(2*log_scale)) * R^T.
Mat3 gaussian_cov3d(const Gaussian3D& g);

struct Aabb {
  Vec3 lo = Vec3::Constant(-5.0);
  Vec3 hi = Vec3::Constant(5.0);

  bool contains(const Vec3& p, double expand = 1.0) const {
    const Vec3 c = 0.5 * (lo + hi);
    const Vec3 h = expand * 0.5 * (hi - lo);
    return ((p - c).array().abs() <= h.array() + 1e-12).all();
  }
};

struct GaussianScene {
  std::vector<Gaussian3D> gaussians;
  Aabb bound;  // positions must stay inside bound scaled 1.5x about center

  size_t size() const { return gaussians.size(); }
  void validate() const;  // finite params, positions inside 1.5x bound
  void set_bound_from_positions(double pad = 0.1);
};

// Plain-text scene files: exact decimal round trip, stable across
// save/load/save.
void save_scene(const std::string& path, const GaussianScene& scene);
GaussianScene load_scene(const std::string& path);

}  // namespace resplat
