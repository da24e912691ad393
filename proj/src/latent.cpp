#include "resplat/latent.hpp"

#include <cmath>

namespace resplat {

Eigen::MatrixXd patchify(const Image& im, int patch) {
  im.validate();
  if (patch < 1) throw ConfigError("patch size must be positive");
  if (im.width != im.height || im.width % patch != 0)
    throw NumericError("patchify needs a square image divisible by the patch");
  const int grid = im.width / patch;
  Eigen::MatrixXd tokens(grid * grid, 3 * patch * patch);
  for (int gy = 0; gy < grid; ++gy)
    for (int gx = 0; gx < grid; ++gx) {
      const int t = gy * grid + gx;
      for (int dy = 0; dy < patch; ++dy)
        for (int dx = 0; dx < patch; ++dx)
          for (int c = 0; c < 3; ++c)
            tokens(t, (dy * patch + dx) * 3 + c) =
                im.at(gx * patch + dx, gy * patch + dy, c) - 0.5;
    }
  return tokens;
}

Image unpatchify(const Eigen::MatrixXd& tokens, int grid, int patch,
                 bool clamp01) {
  if (tokens.rows() != grid * grid || tokens.cols() != 3 * patch * patch)
    throw NumericError("unpatchify: token shape mismatch");
  Image im(grid * patch, grid * patch);
  for (int gy = 0; gy < grid; ++gy)
    for (int gx = 0; gx < grid; ++gx) {
      const int t = gy * grid + gx;
      for (int dy = 0; dy < patch; ++dy)
        for (int dx = 0; dx < patch; ++dx)
          for (int c = 0; c < 3; ++c) {
            double v = tokens(t, (dy * patch + dx) * 3 + c) + 0.5;
            if (clamp01) v = std::clamp(v, 0.0, 1.0);
            im.at(gx * patch + dx, gy * patch + dy, c) = v;
          }
    }
  return im;
}

void LatentVideo::validate() const {
  if (frames.empty()) throw NumericError("latent video has no frames");
  if (grid < 1 || patch < 1) throw NumericError("latent video has bad shape");
  for (const auto& f : frames) {
    if (f.rows() != tokens() || f.cols() != channels())
      throw NumericError("latent frame shape mismatch");
    if (!f.allFinite()) throw NumericError("latent frame has non-finite values");
  }
  if (cyclic) {
    if (frames.size() < 2)
      throw NumericError("cyclic latent video needs at least two frames");
    if (frames.back() != frames.front())
      throw NumericError("cyclic latent video's last frame differs from first");
  }
}

LatentVideo video_to_latent(const Video& v, int patch) {
  v.validate();
  if (v.width() != v.height() || v.width() % patch != 0)
    throw NumericError("video frames not compatible with patch size");
  LatentVideo lv;
  lv.grid = v.width() / patch;
  lv.patch = patch;
  lv.cyclic = v.cyclic;
  lv.frames.reserve(v.frames.size());
  for (const Image& f : v.frames) lv.frames.push_back(patchify(f, patch));
  lv.validate();
  return lv;
}

Video latent_to_video(const LatentVideo& lv, bool clamp01) {
  lv.validate();
  Video v;
  v.cyclic = lv.cyclic;
  v.frames.reserve(lv.frames.size());
  for (const auto& f : lv.frames)
    v.frames.push_back(unpatchify(f, lv.grid, lv.patch, clamp01));
  // Latents carry no camera information; callers that know the azimuths
  // overwrite these placeholders.
  v.azimuths.assign(v.frames.size(), 0.0);
  v.validate();
  return v;
}

Eigen::MatrixXd reference_tokens(const Image& ref, int patch) {
  return patchify(ref, patch);
}

Eigen::MatrixXd boundary_mask(int n_frames) {
  if (n_frames < 2) throw ConfigError("boundary mask needs at least 2 frames");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n_frames, n_frames);
  const int last = n_frames - 1;
  m(0, 0) = kMaskNegInf;
  m(0, last) = kMaskNegInf;
  m(last, 0) = kMaskNegInf;
  m(last, last) = kMaskNegInf;
  return m;
}

Eigen::MatrixXd masked_attention(const Eigen::MatrixXd& q,
                                 const Eigen::MatrixXd& k,
                                 const Eigen::MatrixXd& v,
                                 const Eigen::MatrixXd& mask,
                                 int* fully_masked_rows,
                                 Eigen::MatrixXd* attn_out) {
  if (q.cols() != k.cols() || k.rows() != v.rows())
    throw NumericError("attention shape mismatch");
  if (mask.rows() != q.rows() || mask.cols() != k.rows())
    throw NumericError("attention mask shape mismatch");
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Eigen::MatrixXd logits = scale * (q * k.transpose()) + mask;

  Eigen::MatrixXd attn(q.rows(), k.rows());
  int dead_rows = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double row_max = logits.row(r).maxCoeff();
    if (row_max <= kMaskNegInf * 0.5) {
      // Every key is masked away: there is nothing to attend to.
      attn.row(r).setZero();
      ++dead_rows;
      continue;
    }
    Eigen::ArrayXd e = (logits.row(r).array() - row_max).exp();
    attn.row(r) = (e / e.sum()).matrix();
  }
  if (fully_masked_rows) *fully_masked_rows = dead_rows;
  if (attn_out) *attn_out = attn;
  return attn * v;
}

}  // namespace resplat
