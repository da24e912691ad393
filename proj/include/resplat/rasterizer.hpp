#pragma once

#include <optional>
#include <vector>

#include "resplat/camera.hpp"
#include "resplat/image.hpp"
#include "resplat/scene.hpp"

namespace resplat {

// NormalizedMean: C = sum(w_i c_i) / sum(w_i), background where the weight
// sum falls below weight_cutoff. Order-independent, no occlusion.
// FrontToBackAlpha: standard depth-sorted compositing with transmittance,
// C = sum(T_i a_i c_i) + T_end * background.
enum class BlendMode { NormalizedMean, FrontToBackAlpha };

struct RenderSettings {
  BlendMode blend = BlendMode::NormalizedMean;
  Vec3 background = Vec3::Zero();
  double cov_floor_px2 = 0.3;   // isotropic floor added to 2D covariance
  double weight_cutoff = 1e-4;  // background threshold for NormalizedMean
  double alpha_clip = 0.99;     // per-splat alpha ceiling for compositing
  double support_sigmas = 8.0;  // half-width of the evaluation box, in sigmas
  double z_near = 0.01;
  int row_chunks = 16;  // fixed decomposition => thread-count invariant
};

// A 3D Gaussian after projection into one camera. Bounds are inclusive pixel
// indices, already clipped to the frame.
struct Splat2D {
  Vec2 mean = Vec2::Zero();
  Mat2 cov = Mat2::Identity();
  Mat2 cov_inv = Mat2::Identity();
  double alpha = 0.0;
  Vec3 color = Vec3::Zero();
  double depth = 0.0;
  int parent = -1;
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;

  bool covers(int x, int y) const {
    return x >= x0 && x <= x1 && y >= y0 && y <= y1;
  }
};

// Contribution of one splat at pixel center u: alpha * exp(-0.5 d^T S^-1 d).
inline double pixel_weight(const Splat2D& s, double ux, double uy) {
  const Vec2 d(ux - s.mean[0], uy - s.mean[1]);
  return s.alpha * std::exp(-0.5 * d.dot(s.cov_inv * d));
}

// Returns nullopt when the gaussian is behind the near plane or its support
// box misses the frame entirely.
std::optional<Splat2D> project_gaussian(const Gaussian3D& g,
                                        const CameraPose& pose,
                                        const RenderSettings& settings,
                                        int parent);

std::vector<Splat2D> project_scene(const GaussianScene& scene,
                                   const CameraPose& pose,
                                   const RenderSettings& settings);

struct RenderResult {
  Image image;
  // Per pixel: weight sum (NormalizedMean) or 1 - final transmittance
  // (FrontToBackAlpha). Pixels with weight_sum <= weight_cutoff are
  // background in NormalizedMean mode.
  std::vector<double> weight_sum;

  bool covered(int x, int y, const RenderSettings& s) const {
    return weight_sum[static_cast<size_t>(y) * image.width + x] >
           s.weight_cutoff;
  }
};

// Throws StageError on an empty scene.
RenderResult render(const GaussianScene& scene, const CameraPose& pose,
                    const RenderSettings& settings);

// Per-gaussian parameter gradients, aligned with scene.gaussians.
struct SceneGrads {
  std::vector<Vec3> position;
  std::vector<Vec3> log_scale;
  std::vector<Vec4> rotation;
  std::vector<Vec3> color;
  std::vector<double> opacity_logit;

  void resize_zero(size_t n);
  void accumulate(const SceneGrads& other);
  double squared_norm() const;
};

// Analytic adjoint of render(): given dL/dImage, produces dL/dParams for
// every gaussian. Recomputes the forward pass internally; settings must match
// the forward call.
SceneGrads render_backward(const GaussianScene& scene, const CameraPose& pose,
                           const RenderSettings& settings,
                           const Image& grad_image);

}  // namespace resplat
