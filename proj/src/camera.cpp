#include "resplat/camera.hpp"

#include <cmath>

namespace resplat {

void CameraPose::validate() const {
  if (!(focal > 0.0)) throw ConfigError("camera focal must be positive");
  if (width < 8 || height < 8)
    throw ConfigError("camera resolution must be at least 8x8");
  if ((world_to_cam * world_to_cam.transpose() - Mat3::Identity()).norm() >
      1e-9)
    throw ConfigError("camera rotation is not orthonormal");
  if (std::abs(world_to_cam.determinant() - 1.0) > 1e-9)
    throw ConfigError("camera rotation is not right-handed");
  if (!translation.allFinite() || !principal.allFinite())
    throw ConfigError("camera pose has non-finite entries");
}

CameraPose look_at(const Vec3& position, const Vec3& target, double focal,
                   int width, int height) {
  const Vec3 up(0.0, 1.0, 0.0);
  Vec3 z = target - position;
  const double dist = z.norm();
  if (dist < 1e-12) throw ConfigError("camera position coincides with target");
  z /= dist;
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-9) {
    // Looking straight up/down: pick an arbitrary horizontal right vector.
    x = Vec3(1.0, 0.0, 0.0);
  }
  x.normalize();
  const Vec3 y = z.cross(x);

  CameraPose pose;
  pose.world_to_cam.row(0) = x.transpose();
  pose.world_to_cam.row(1) = y.transpose();
  pose.world_to_cam.row(2) = z.transpose();
  pose.translation = -pose.world_to_cam * position;
  pose.focal = focal;
  pose.principal = Vec2(width * 0.5, height * 0.5);
  pose.width = width;
  pose.height = height;
  pose.validate();
  return pose;
}

void RingRig::validate() const {
  if (n_views < 1) throw ConfigError("ring must have at least one view");
  if (!(radius > 0.0)) throw ConfigError("ring radius must be positive");
  if (!(std::abs(elevation) < M_PI / 2 - 1e-6))
    throw ConfigError("ring elevation must stay below the pole");
  if (!(focal > 0.0)) throw ConfigError("ring focal must be positive");
  if (width < 8 || height < 8)
    throw ConfigError("ring resolution must be at least 8x8");
}

CameraPose ring_pose_at(const RingRig& rig, double azimuth) {
  rig.validate();
  const Vec3 offset(rig.radius * std::cos(rig.elevation) * std::sin(azimuth),
                    rig.radius * std::sin(rig.elevation),
                    rig.radius * std::cos(rig.elevation) * std::cos(azimuth));
  return look_at(rig.target + offset, rig.target, rig.focal, rig.width,
                 rig.height);
}

std::vector<double> ring_azimuths(const RingRig& rig) {
  rig.validate();
  std::vector<double> az(rig.n_views);
  for (int i = 0; i < rig.n_views; ++i) az[i] = 2.0 * M_PI * i / rig.n_views;
  return az;
}

std::vector<CameraPose> ring_poses(const RingRig& rig) {
  std::vector<CameraPose> poses;
  poses.reserve(rig.n_views);
  for (double a : ring_azimuths(rig)) poses.push_back(ring_pose_at(rig, a));
  return poses;
}

}  // namespace resplat
