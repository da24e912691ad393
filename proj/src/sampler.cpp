#include "resplat/sampler.hpp"

#include <cmath>

#include "resplat/common.hpp"
#include "resplat/latent.hpp"

namespace resplat {
namespace {

void check_finite(const LatentVideo& z, int step) {
  for (const auto& f : z.frames)
    if (!f.allFinite())
      throw NumericError("edm sample: non-finite latents at step " +
                         std::to_string(step));
}

// Infers the square patch size hiding in a 3*p*p channel count.
int patch_from_channels(int channels, const char* what) {
  if (channels % 3 != 0)
    throw ConfigError(std::string(what) + ": channel count not divisible by 3");
  const int pp = channels / 3;
  const int p = int(std::lround(std::sqrt(double(pp))));
  if (p < 1 || p * p != pp)
    throw ConfigError(std::string(what) + ": channel count is not 3*p^2");
  return p;
}

}  // namespace

LatentVideo edm_sample_latent(const DenoiseFn& denoise_fn,
                              const LatentVideo& shape_like,
                              const NoiseSchedule& schedule, uint64_t seed) {
  if (!denoise_fn) throw ConfigError("edm sample: null denoiser");
  schedule.validate();
  shape_like.validate();

  Rng rng(derive_seed(seed, "edm-sample"));
  LatentVideo z = gaussian_like(shape_like, rng);
  const double sigma_max = schedule.sigmas.front();
  for (auto& f : z.frames) f *= sigma_max;

  const int steps = schedule.steps();
  for (int i = 0; i < steps; ++i) {
    const double s_cur = schedule.sigmas[size_t(i)];
    const double s_next = schedule.sigmas[size_t(i) + 1];
    const double h = s_next - s_cur;

    const LatentVideo d_cur = denoise_fn(z, s_cur);
    LatentVideo z_euler = z;
    for (size_t f = 0; f < z.frames.size(); ++f) {
      const Eigen::MatrixXd slope = (z.frames[f] - d_cur.frames[f]) / s_cur;
      z_euler.frames[f] = z.frames[f] + h * slope;
    }

    if (s_next == 0.0) {
      z = std::move(z_euler);
    } else {
      const LatentVideo d_next = denoise_fn(z_euler, s_next);
      for (size_t f = 0; f < z.frames.size(); ++f) {
        const Eigen::MatrixXd slope_cur = (z.frames[f] - d_cur.frames[f]) / s_cur;
        const Eigen::MatrixXd slope_next =
            (z_euler.frames[f] - d_next.frames[f]) / s_next;
        z.frames[f] += h * 0.5 * (slope_cur + slope_next);
      }
    }
    check_finite(z, i);
  }
  z.cyclic = false;
  return z;
}

Video restore_video(const FixerModel& model, const Video& coarse,
                    const Image& reference, const NoiseSchedule& schedule,
                    uint64_t seed, AttnCapture* capture) {
  coarse.validate();
  reference.validate();
  const ModelConfig& cfg = model.config();

  const int patch = patch_from_channels(cfg.latent_channels, "restore: latents");
  const int ref_patch = patch_from_channels(cfg.ref_channels, "restore: reference");

  LatentVideo z_c = video_to_latent(coarse, patch);
  if (z_c.tokens() != cfg.tokens)
    throw ConfigError("restore: coarse video resolution does not match the model");
  const Eigen::MatrixXd raw_ref = reference_tokens(reference, ref_patch);
  const Eigen::MatrixXd m_f = model.embed_reference(raw_ref);

  DenoiseFn fn = [&](const LatentVideo& z_t, double sigma) {
    return model.denoise(z_t, sigma, z_c, m_f, capture);
  };
  LatentVideo z_r = edm_sample_latent(fn, z_c, schedule, seed);

  Video out = latent_to_video(z_r, true);
  out.azimuths = coarse.azimuths;
  if (coarse.cyclic) {
    // The sampler does not constrain the duplicated closing frame; re-pin it
    // so the cyclic invariant holds exactly.
    out.frames.back() = out.frames.front();
    out.azimuths.back() = out.azimuths.front();
    out.cyclic = true;
  }
  out.validate();
  return out;
}

}  // namespace resplat
