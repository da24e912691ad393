#pragma once

#include "resplat/camera.hpp"
#include "resplat/image.hpp"
#include "resplat/scene.hpp"

namespace resplat {

// Geometric prior for single-image initialization: gaussians are seeded on
// the surface of a vertical capsule (cylinder of `height` capped by
// hemispheres of `radius`), standing in for a body-shaped template.
struct InitSpec {
  int count = 400;
  uint64_t seed = 0;
  Vec3 center = Vec3::Zero();
  double height = 0.9;  // cylindrical section, world units
  double radius = 0.28;
  double scale_factor = 0.0;  // 0 = derive from surface area / count
  double opacity = 0.8;

  void validate() const;
};

// Deterministically seeds `count` gaussians on the capsule surface and
// back-projects each one into `frontal` to pick up its initial color from
// the reference image. Isotropic scales, identity rotations.
GaussianScene init_scene_from_reference(const Image& ref, const InitSpec& spec,
                                        const CameraPose& frontal);

}  // namespace resplat
