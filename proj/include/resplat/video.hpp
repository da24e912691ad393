#pragma once

#include <string>
#include <vector>

#include "resplat/camera.hpp"
#include "resplat/rasterizer.hpp"

namespace resplat {

// An ordered multi-view sequence with per-frame azimuths. When cyclic, the
// last frame is a bit-identical copy of the first (same azimuth), closing
// the camera loop explicitly so a temporal model sees the wrap-around.
struct Video {
  std::vector<Image> frames;
  std::vector<double> azimuths;  // radians, one per frame
  bool cyclic = false;

  int n_frames() const { return static_cast<int>(frames.size()); }
  int width() const { return frames.empty() ? 0 : frames.front().width; }
  int height() const { return frames.empty() ? 0 : frames.front().height; }

  void validate() const;
  void quantize(int bit_depth);  // snap every frame to a PNG-representable grid
};

// Appends a copy of the first frame and azimuth (input must not be cyclic).
Video make_cyclic(const Video& v);

// Drops the duplicated closing frame; errors if the copy was tampered with.
Video strip_cycle(const Video& v);

// One frame per ring view, azimuth i = 2*pi*i/n, non-cyclic.
Video render_ring(const GaussianScene& scene, const RingRig& rig,
                  const RenderSettings& settings);

// Mean over per-frame metrics; frames are compared pairwise in order.
double video_psnr(const Video& a, const Video& b);
double video_ssim(const Video& a, const Video& b);

// Directory of numbered PNGs plus a small JSON manifest.
void save_video(const std::string& dir, const Video& v, int bit_depth = 16);
Video load_video(const std::string& dir);

}  // namespace resplat
