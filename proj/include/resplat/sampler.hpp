#pragma once

#include <functional>

#include "resplat/image.hpp"
#include "resplat/restorer.hpp"
#include "resplat/schedule.hpp"
#include "resplat/video.hpp"

namespace resplat {

// Denoiser abstraction for the sampler: maps (z_t, sigma) to the denoised
// estimate. Lets tests drive the sampler with closed-form oracles.
using DenoiseFn = std::function<LatentVideo(const LatentVideo&, double)>;

// Deterministic Heun (2nd order) sampler over the schedule: starts from
// z = sigma_max * noise shaped like `shape_like` and integrates the EDM
// probability-flow ODE dz/dsigma = (z - D(z, sigma)) / sigma down to the
// final schedule entry.
LatentVideo edm_sample_latent(const DenoiseFn& denoise_fn,
                              const LatentVideo& shape_like,
                              const NoiseSchedule& schedule, uint64_t seed);

// Full conditional generation of the restored video from pure noise, guided
// by the coarse video (channel concatenation) and the reference image
// (cross-attention). Patch sizes are inferred from the model's channel
// widths. Deterministic for a fixed seed. The output keeps the coarse
// video's azimuths; when the coarse video is cyclic the closing frame is
// re-pinned to an exact copy of the first.
Video restore_video(const FixerModel& model, const Video& coarse,
                    const Image& reference, const NoiseSchedule& schedule,
                    uint64_t seed, AttnCapture* capture = nullptr);

}  // namespace resplat
