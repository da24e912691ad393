#pragma once

#include <vector>

#include "resplat/common.hpp"

namespace resplat {

// Pinhole camera. Camera frame follows the usual vision convention: x right,
// y down, z forward. world_to_cam rows are the camera axes in world
// coordinates; p_cam = world_to_cam * p_world + translation.
struct CameraPose {
  Mat3 world_to_cam = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double focal = 1.0;          // pixels
  Vec2 principal = Vec2::Zero();  // pixels; look_at sets the image center
  int width = 0;
  int height = 0;

  Vec3 to_camera(const Vec3& p_world) const {
    return world_to_cam * p_world + translation;
  }
  Vec3 center() const { return -world_to_cam.transpose() * translation; }

  // Projects a camera-space point; caller must ensure pz > 0.
  Vec2 project(const Vec3& p_cam) const {
    return Vec2(focal * p_cam[0] / p_cam[2] + principal[0],
                focal * p_cam[1] / p_cam[2] + principal[1]);
  }

  void validate() const;
};

// Camera at `position` looking at `target`, world up +Y.
CameraPose look_at(const Vec3& position, const Vec3& target, double focal,
                   int width, int height);

// Evenly spaced ring of cameras around a vertical axis through `target`.
struct RingRig {
  int n_views = 8;
  double radius = 2.5;
  double elevation = 0.0;  // radians above the horizontal plane
  Vec3 target = Vec3::Zero();
  double focal = 36.0;
  int width = 32;
  int height = 32;

  void validate() const;
};

// Azimuth of view i is 2*pi*i/n, so view 0 sits on the +Z side and the
// sequence wraps back to it — the natural ordering for cyclic videos.
std::vector<CameraPose> ring_poses(const RingRig& rig);
std::vector<double> ring_azimuths(const RingRig& rig);

// Pose at one explicit azimuth on the rig circle (azimuth 0 = frontal).
CameraPose ring_pose_at(const RingRig& rig, double azimuth);

}  // namespace resplat
