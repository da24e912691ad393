#include "resplat/fit.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "resplat/metrics.hpp"
#include "resplat/ssim.hpp"

namespace resplat {

void FitConfig::validate() const {
  if (iterations < 0) throw ConfigError("fit iterations must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("fit lr must be positive");
  if (l2_weight < 0.0 || ssim_weight < 0.0)
    throw ConfigError("fit loss weights must be non-negative");
  if (l2_weight + ssim_weight <= 0.0)
    throw ConfigError("fit loss weights must not both be zero");
  if (loss_tol < 0.0) throw ConfigError("fit loss tolerance must be >= 0");
}

double photometric_loss(const Image& rendered, const Image& target,
                        const FitConfig& config, Image* grad) {
  const double m = mse(rendered, target);
  double loss = config.l2_weight * m;
  if (grad) {
    *grad = Image(rendered.width, rendered.height);
    const double scale =
        2.0 * config.l2_weight / static_cast<double>(rendered.data.size());
    for (size_t i = 0; i < rendered.data.size(); ++i)
      grad->data[i] = scale * (rendered.data[i] - target.data[i]);
  }
  if (config.ssim_weight > 0.0) {
    loss += config.ssim_weight * (1.0 - ssim(rendered, target, config.ssim_window));
    if (grad) {
      const Image sg =
          ssim_backward(rendered, target, -config.ssim_weight, config.ssim_window);
      for (size_t i = 0; i < grad->data.size(); ++i) grad->data[i] += sg.data[i];
    }
  }
  return loss;
}

namespace {

// Adam moments mirror the gradient layout.
struct AdamState {
  SceneGrads m, v;
  void init(size_t n) {
    m.resize_zero(n);
    v.resize_zero(n);
  }
};

inline void adam_update(double* param, double g, double* m, double* v,
                        double lr, double b1, double b2, double eps,
                        double bc1, double bc2) {
  *m = b1 * *m + (1 - b1) * g;
  *v = b2 * *v + (1 - b2) * g * g;
  const double mh = *m / bc1;
  const double vh = *v / bc2;
  *param -= lr * mh / (std::sqrt(vh) + eps);
}

}  // namespace

FitReport fit_scene(GaussianScene* scene, const std::vector<CameraPose>& poses,
                    const std::vector<Image>& targets,
                    const RenderSettings& settings, const FitConfig& config) {
  config.validate();
  if (poses.empty() || poses.size() != targets.size())
    throw ConfigError("fit needs one target image per pose");
  for (size_t v = 0; v < poses.size(); ++v) {
    poses[v].validate();
    targets[v].validate();
    if (targets[v].width != poses[v].width ||
        targets[v].height != poses[v].height)
      throw ConfigError("fit target size does not match its camera");
  }
  scene->validate();

  const size_t n = scene->size();
  AdamState adam;
  adam.init(n);
  FitReport report;
  report.loss_history.reserve(config.iterations);

  const double inv_views = 1.0 / static_cast<double>(poses.size());
  int updates_applied = 0;

  for (int it = 0; it < config.iterations; ++it) {
    double loss = 0.0;
    SceneGrads grads;
    grads.resize_zero(n);
    std::vector<double> view_psnr(poses.size());
    for (size_t v = 0; v < poses.size(); ++v) {
      const RenderResult r = render(*scene, poses[v], settings);
      Image grad_image;
      loss += photometric_loss(r.image, targets[v], config, &grad_image);
      view_psnr[v] = psnr(r.image, targets[v]);
      for (double& g : grad_image.data) g *= inv_views;
      grads.accumulate(render_backward(*scene, poses[v], settings, grad_image));
    }
    loss *= inv_views;
    if (!std::isfinite(loss)) {
      double pnorm = 0.0;
      for (const Gaussian3D& g : scene->gaussians)
        pnorm += g.position.squaredNorm() + g.log_scale.squaredNorm() +
                 g.rotation.squaredNorm() + g.color.squaredNorm() +
                 g.opacity_logit * g.opacity_logit;
      throw NumericError("fit: non-finite loss at iteration " +
                         std::to_string(it) + " (parameter norm " +
                         std::to_string(std::sqrt(pnorm)) + ")");
    }
    report.loss_history.push_back(loss);
    report.psnr_history.push_back(std::move(view_psnr));

    // Already at the targets' representational floor: stop before this
    // iteration's update so the parameters are left exactly where they
    // converged instead of being churned by further scale-free Adam steps.
    if (loss <= config.loss_tol) break;

    const double bc1 = 1.0 - std::pow(config.beta1, it + 1);
    const double bc2 = 1.0 - std::pow(config.beta2, it + 1);
    for (size_t i = 0; i < n; ++i) {
      Gaussian3D& g = scene->gaussians[i];
      const double pos_lr = config.lr * config.lr_position_scale;
      for (int k = 0; k < 3; ++k) {
        adam_update(&g.position[k], grads.position[i][k], &adam.m.position[i][k],
                    &adam.v.position[i][k], pos_lr, config.beta1, config.beta2,
                    config.eps, bc1, bc2);
        adam_update(&g.log_scale[k], grads.log_scale[i][k],
                    &adam.m.log_scale[i][k], &adam.v.log_scale[i][k], config.lr,
                    config.beta1, config.beta2, config.eps, bc1, bc2);
        adam_update(&g.color[k], grads.color[i][k], &adam.m.color[i][k],
                    &adam.v.color[i][k], config.lr, config.beta1, config.beta2,
                    config.eps, bc1, bc2);
      }
      for (int k = 0; k < 4; ++k)
        adam_update(&g.rotation[k], grads.rotation[i][k],
                    &adam.m.rotation[i][k], &adam.v.rotation[i][k], config.lr,
                    config.beta1, config.beta2, config.eps, bc1, bc2);
      adam_update(&g.opacity_logit, grads.opacity_logit[i],
                  &adam.m.opacity_logit[i], &adam.v.opacity_logit[i], config.lr,
                  config.beta1, config.beta2, config.eps, bc1, bc2);
      // Stability rails: keep scales/opacities in a sane band, positions
      // inside the scene bound, and the quaternion away from zero. Wide
      // enough to never bind on a healthy fit. Colors additionally stay in
      // display range: targets are 16-bit images in [0,1], and front-to-back
      // alpha blending of in-range colors provably stays in range, so railed
      // colors keep every novel-view render representable without clamping.
      for (int k = 0; k < 3; ++k) {
        g.log_scale[k] = std::clamp(g.log_scale[k], -9.0, 3.0);
        g.color[k] = std::clamp(g.color[k], 0.0, 1.0);
      }
      g.opacity_logit = std::clamp(g.opacity_logit, -15.0, 15.0);
      if (g.rotation.norm() < 1e-6) g.rotation = Vec4(1, 0, 0, 0);
      const Vec3 bc = 0.5 * (scene->bound.lo + scene->bound.hi);
      const Vec3 bh = 1.45 * 0.5 * (scene->bound.hi - scene->bound.lo);
      g.position = g.position.cwiseMax(bc - bh).cwiseMin(bc + bh);
    }
    scene->validate();
    ++updates_applied;

    if (config.log_every > 0 &&
        ((it + 1) % config.log_every == 0 || it + 1 == config.iterations))
      std::printf("  fit iter %4d/%d  loss %.6f\n", it + 1, config.iterations,
                  loss);
  }

  // Final metrics on the fitted scene.
  double loss = 0.0, mean_psnr = 0.0;
  report.final_psnr_per_view.resize(poses.size());
  for (size_t v = 0; v < poses.size(); ++v) {
    const RenderResult r = render(*scene, poses[v], settings);
    loss += photometric_loss(r.image, targets[v], config, nullptr);
    report.final_psnr_per_view[v] = psnr(r.image, targets[v]);
    mean_psnr += report.final_psnr_per_view[v];
  }
  report.final_loss = loss * inv_views;
  report.final_psnr = mean_psnr * inv_views;
  report.iterations = updates_applied;
  return report;
}

void export_fit_report_csv(const std::string& path, const FitReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write fit report " + path);
  const size_t views =
      report.psnr_history.empty() ? report.final_psnr_per_view.size()
                                  : report.psnr_history.front().size();
  out << "iteration,loss";
  for (size_t v = 0; v < views; ++v) out << ",psnr_view_" << v;
  out << "\n";
  for (size_t it = 0; it < report.loss_history.size(); ++it) {
    out << it << "," << report.loss_history[it];
    if (it < report.psnr_history.size())
      for (double p : report.psnr_history[it]) out << "," << p;
    out << "\n";
  }
  if (!out) throw ConfigError("short write to fit report " + path);
}

}  // namespace resplat
