#include "resplat/scene_init.hpp"

#include <cmath>

namespace resplat {

void InitSpec::validate() const {
  if (count < 1) throw ConfigError("init spec needs at least one gaussian");
  if (!(height >= 0.0) || !(radius > 0.0))
    throw ConfigError("init spec capsule dimensions invalid");
  if (!(opacity > 0.0) || !(opacity < 1.0))
    throw ConfigError("init spec opacity must be in (0,1)");
}

GaussianScene init_scene_from_reference(const Image& ref, const InitSpec& spec,
                                        const CameraPose& frontal) {
  ref.validate();
  spec.validate();
  frontal.validate();

  const double side_area = 2.0 * M_PI * spec.radius * spec.height;
  const double cap_area = 4.0 * M_PI * spec.radius * spec.radius;
  const double p_side = side_area / (side_area + cap_area);

  double s = spec.scale_factor;
  if (s <= 0.0) {
    // Cover the surface with overlapping discs: pi s^2 * count ~ 2 * area.
    s = std::sqrt(2.0 * (side_area + cap_area) / (M_PI * spec.count));
  }

  Rng rng(derive_seed(spec.seed, "scene-init", 0));
  GaussianScene scene;
  scene.gaussians.reserve(spec.count);
  for (int i = 0; i < spec.count; ++i) {
    Vec3 pos;
    if (rng.uniform() < p_side) {
      const double y = (rng.uniform() - 0.5) * spec.height;
      const double t = 2.0 * M_PI * rng.uniform();
      pos = spec.center +
            Vec3(spec.radius * std::cos(t), y, spec.radius * std::sin(t));
    } else {
      // Uniform direction; its vertical sign picks the matching cap.
      Vec3 d(rng.normal(), rng.normal(), rng.normal());
      while (d.norm() < 1e-9) d = Vec3(rng.normal(), rng.normal(), rng.normal());
      d.normalize();
      const double cap_y = d[1] >= 0.0 ? spec.height * 0.5 : -spec.height * 0.5;
      pos = spec.center + Vec3(0.0, cap_y, 0.0) + spec.radius * d;
    }

    Gaussian3D g;
    g.position = pos;
    g.log_scale = Vec3::Constant(std::log(s));
    g.rotation = Vec4(1, 0, 0, 0);
    g.opacity_logit = logit(spec.opacity);
    const Vec3 p_cam = frontal.to_camera(pos);
    if (p_cam[2] > 1e-6) {
      const Vec2 uv = frontal.project(p_cam);
      g.color = ref.sample_bilinear(uv[0], uv[1]);
    } else {
      g.color = ref.mean_color();
    }
    scene.gaussians.push_back(g);
  }
  scene.set_bound_from_positions(0.35);
  scene.validate();
  return scene;
}

}  // namespace resplat
