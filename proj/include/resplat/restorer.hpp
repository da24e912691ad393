#pragma once

#include <Eigen/Dense>
#include <string>
#include <unordered_map>
#include <vector>

#include "resplat/latent.hpp"
#include "resplat/schedule.hpp"

namespace resplat {

// Factorized spatio-temporal denoising transformer: per-frame spatial
// self-attention, per-location temporal self-attention (boundary-masked when
// configured), cross-attention to reference tokens, and an MLP, repeated
// `depth` times. The coarse video conditions the network by channel
// concatenation at the input.
struct ModelConfig {
  int latent_channels = 48;  // 3 * patch^2 of the target latents
  int cond_channels = 48;    // channels of the concatenated coarse latents
  int width = 128;
  int depth = 4;
  int heads = 4;
  int tokens = 64;  // spatial tokens per frame (grid^2); fixed per model
  int ref_token_count = 16;    // n_t: embedded reference tokens
  int ref_source_tokens = 16;  // raw reference patches fed to the projection
  int ref_channels = 192;
  int max_frames = 33;
  double sigma_data = 0.5;
  bool use_mask = true;            // boundary mask in temporal attention
  bool condition_on_coarse = true;  // false: coarse latents zeroed (ablation)

  int head_dim() const { return width / heads; }
  void validate() const;
};

// Accumulates temporal attention weight matrices observed during denoise
// calls, averaged over blocks, heads, and spatial tokens (optionally
// restricted to one block/head).
struct AttnCapture {
  int block_select = -1;  // -1 = average all blocks
  int head_select = -1;   // -1 = average all heads
  Eigen::MatrixXd sum;    // frames x frames
  long count = 0;
  int fully_masked_rows = 0;

  Eigen::MatrixXd mean() const {
    if (count == 0) throw NumericError("no attention matrices captured");
    return sum / static_cast<double>(count);
  }
};

// Named views into one flat parameter buffer; the same layout serves the
// parameters, their gradients, and the optimizer moments.
class ParamLayout {
 public:
  void add(const std::string& name, int rows, int cols);
  size_t total() const { return total_; }
  const std::vector<std::string>& names() const { return order_; }
  Eigen::Map<Eigen::MatrixXd> view(std::vector<double>& buf,
                                   const std::string& name) const;
  Eigen::Map<const Eigen::MatrixXd> view(const std::vector<double>& buf,
                                         const std::string& name) const;

 private:
  struct Entry {
    size_t offset;
    int rows, cols;
  };
  std::unordered_map<std::string, Entry> entries_;
  std::vector<std::string> order_;
  size_t total_ = 0;
};

class FixerModel {
 public:
  explicit FixerModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  const ParamLayout& layout() const { return layout_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  size_t param_count() const { return params_.size(); }

  // Zeroed output head: a fresh model is exactly the identity denoiser
  // (output = c_skip * z_t).
  void init_params(uint64_t seed);

  // Learned token-mixing projection of raw reference patch tokens
  // (ref_source_tokens x ref_channels) down to the n_t embedding tokens the
  // cross-attention layers consume.
  Eigen::MatrixXd embed_reference(const Eigen::MatrixXd& raw_tokens) const;

  // EDM-preconditioned denoiser
  //   D(z_t, s) = c_skip*z_t + c_out * F(c_in*z_t (+) z_c, c_noise, m_f).
  // m_f is an embedded reference (ref_token_count x ref_channels), normally
  // from embed_reference. When condition_on_coarse is false, z_c is replaced
  // by zeros.
  LatentVideo denoise(const LatentVideo& z_t, double sigma,
                      const LatentVideo& z_c, const Eigen::MatrixXd& m_f,
                      AttnCapture* capture = nullptr) const;

  // Forward + backward for one training sample; takes the *raw* reference
  // tokens so the gradient reaches the reference projection. Returns the
  // weighted loss
  //   edm_loss_weight(sigma) * mean((D - target)^2)
  // and accumulates dLoss/dParams into *grads (same layout as params).
  double loss_and_grad(const LatentVideo& z_t, double sigma,
                       const LatentVideo& z_c,
                       const Eigen::MatrixXd& raw_ref_tokens,
                       const LatentVideo& target,
                       std::vector<double>* grads) const;

  // Versioned binary checkpoint: JSON header + little-endian float32 params.
  void save(const std::string& path) const;
  static FixerModel load(const std::string& path);

 private:
  ModelConfig cfg_;
  ParamLayout layout_;
  std::vector<double> params_;
};

// z0 + sigma * noise. The result keeps z0's cyclic flag only when nothing can
// break it (sigma == 0, or the noise itself is cyclic).
LatentVideo forward_diffuse(const LatentVideo& z0, double sigma,
                            const LatentVideo& noise);

// Unit-normal noise with the same shape as `like`; never cyclic.
LatentVideo gaussian_like(const LatentVideo& like, Rng& rng);

}  // namespace resplat
