#pragma once

#include <Eigen/Dense>
#include <vector>

#include "resplat/video.hpp"

namespace resplat {

// Large negative logit standing in for -infinity in attention masks. Adding
// it guarantees the softmax weight underflows to exactly zero.
constexpr double kMaskNegInf = -1e9;

// Lossless space-to-depth: a (grid*p) x (grid*p) image becomes grid*grid
// tokens of 3*p*p channels, values shifted to [-0.5, 0.5] so the data std
// suits the diffusion preconditioning. Token order is row-major over the
// grid; channel order is (dy, dx, rgb).
Eigen::MatrixXd patchify(const Image& im, int patch);
Image unpatchify(const Eigen::MatrixXd& tokens, int grid, int patch,
                 bool clamp01 = true);

// A video mapped token-wise into latent space. Frames keep their order and
// the cyclic flag carries over.
struct LatentVideo {
  std::vector<Eigen::MatrixXd> frames;  // each tokens x channels
  int grid = 0;
  int patch = 0;
  bool cyclic = false;

  int n_frames() const { return static_cast<int>(frames.size()); }
  int tokens() const { return grid * grid; }
  int channels() const { return 3 * patch * patch; }
  void validate() const;
};

LatentVideo video_to_latent(const Video& v, int patch);
Video latent_to_video(const LatentVideo& lv, bool clamp01 = true);

// Conditioning tokens from a single reference image: a coarser patch grid,
// same space-to-depth layout. The model learns its own projection of these.
Eigen::MatrixXd reference_tokens(const Image& ref, int patch = 8);

// Temporal attention mask for a cyclic sequence of n_frames (= N+1 with the
// duplicated closing frame). Zero everywhere except the four corner entries
// (0,0), (0,N), (N,0), (N,N), which are pushed to -inf: the duplicated
// boundary frame may not attend to itself or its copy, so boundary queries
// must gather evidence from the intermediate views.
Eigen::MatrixXd boundary_mask(int n_frames);

// softmax(Q K^T / sqrt(d_k) + mask) V with row-stable softmax. Rows whose
// entries are all masked produce a zero output row; *fully_masked_rows (if
// given) reports how many. attn_out (if given) receives the weight matrix.
Eigen::MatrixXd masked_attention(const Eigen::MatrixXd& q,
                                 const Eigen::MatrixXd& k,
                                 const Eigen::MatrixXd& v,
                                 const Eigen::MatrixXd& mask,
                                 int* fully_masked_rows = nullptr,
                                 Eigen::MatrixXd* attn_out = nullptr);

}  // namespace resplat
