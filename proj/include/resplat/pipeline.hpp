#pragma once

#include <functional>
#include <string>
#include <vector>

#include "resplat/fit.hpp"
#include "resplat/restorer.hpp"
#include "resplat/restorer_train.hpp"
#include "resplat/sampler.hpp"
#include "resplat/scene_init.hpp"
#include "resplat/synthetic.hpp"
#include "resplat/video.hpp"

namespace resplat {

// Latents are space-to-depth patches of the 32x32 frames; the reference uses
// a coarser grid so its tokens match the embedding width.
constexpr int kLatentPatch = 4;
constexpr int kRefPatch = 8;

// Temporal layout fed to the restorer (the Table 4 rows): non-cyclic videos
// without the mask, cyclic videos without the mask, or cyclic videos with the
// boundary attention mask.
enum class MaskMode { kNoneNoncyclic, kNoneCyclic, kMaskedCyclic };

MaskMode mask_mode_from_string(const std::string& s);
std::string to_string(MaskMode mode);

// One training/eval pair: the coarse ring video of a single-view fit and the
// ground-truth ring video of the underlying scene, plus the frontal reference
// and its raw patch tokens.
struct PairedSample {
  Video coarse;                   // V_c, cyclic
  Video truth;                    // V_gt, cyclic
  Image reference;                // I_R (frontal truth frame)
  Eigen::MatrixXd ref_embedding;  // raw reference tokens (n_t x channels)
  std::string scene_id;

  void validate() const;
};

struct RunConfig {
  RingRig rig;
  InitSpec init;
  FitConfig coarse_fit;
  FitConfig refine_fit;
  ModelConfig model;
  std::string checkpoint;  // restorer weights for the model-backed fixer
  MaskMode mask_mode = MaskMode::kMaskedCyclic;
  int alternations = 1;
  int sample_steps = 20;  // Heun schedule length for restoration
  uint64_t seed = 0;

  void validate() const;
};

// Rendering convention for every pipeline stage: depth-composited blending,
// so front surfaces occlude back ones and the two-tone shading survives.
RenderSettings pipeline_render_settings();

// Renders the ring, quantizes frames to the 16-bit file grid (so in-memory
// and reloaded-from-disk pipelines are bit-identical), and closes the cycle.
Video ring_video_16(const GaussianScene& scene, const RingRig& rig);

// Fig. 4: per scene, V_gt from the truth scene, I_R = frontal frame, coarse
// scene from a single-view fit against I_R, V_c from the coarse scene.
std::vector<PairedSample> build_paired_dataset(
    const std::vector<SyntheticScene>& scenes, const RingRig& rig,
    const InitSpec& init, const FitConfig& fit_cfg);

void save_dataset(const std::string& dir, const std::vector<PairedSample>& data);
std::vector<PairedSample> load_dataset(const std::string& dir);

// Latent-space training samples laid out per the mask mode (cyclic modes keep
// the duplicated closing frame; the non-cyclic mode strips it).
std::vector<TrainingSample> to_training_samples(
    const std::vector<PairedSample>& data, MaskMode mode);

// Restoration stage abstraction: maps the cyclic ring render of the current
// scene to a restored cyclic video. Lets the loop run against oracle or
// identity fixers in tests, isolating loop correctness from model quality.
using Fixer = std::function<Video(const Video& coarse_cyclic)>;

// Loads the checkpoint and wraps restore_video. The model always comes from
// the file so a fused run equals a stage-wise re-run bit for bit. For the
// non-cyclic mode the duplicated frame is stripped before restoration and
// the cycle re-closed afterwards.
Fixer make_model_fixer(const std::string& checkpoint_path, const Image& reference,
                       MaskMode mode, int sample_steps, uint64_t seed);

struct RunReport {
  double coarse_psnr = 0.0;    // V_c vs V_gt
  double restored_psnr = 0.0;  // last V_r vs V_gt
  double refined_psnr = 0.0;   // ring render of refined scene vs V_gt
  std::vector<double> refined_psnr_per_alternation;
  FitReport coarse_fit;
  FitReport refine_fit;  // last alternation
};

struct RunResult {
  GaussianScene refined;
  Video coarse_video;    // V_c
  Video restored_video;  // V_r of the last alternation (V_c if none ran)
  RunReport report;
};

// Fig. 2 end to end: coarse single-view fit -> ring render -> restore ->
// refine against the restored frames, repeated `alternations` times.
RunResult run_pipeline(const SyntheticScene& scene, const RunConfig& cfg,
                       const Fixer& fixer);

struct AblationCell {
  MaskMode mode = MaskMode::kMaskedCyclic;
  bool condition_on_coarse = true;
  std::string checkpoint;
};

struct AblationRow {
  std::string label;
  double psnr = 0.0;
  double ssim = 0.0;
  double corner_mass = 0.0;     // mean of the four heatmap corner entries
  double max_entry = 0.0;       // largest heatmap entry
  int fully_masked_rows = 0;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  std::string csv() const;
  std::string aligned_text() const;
};

// Restores every eval sample with each cell's trained checkpoint, scores
// PSNR/SSIM vs truth, and captures the temporal attention heatmap (probe
// sigma 1.0). Writes per-cell heatmap PNG + CSV into out_dir when non-empty.
AblationTable run_ablation(const std::vector<PairedSample>& eval_set,
                           const std::vector<AblationCell>& cells,
                           int sample_steps, uint64_t seed,
                           const std::string& out_dir);

}  // namespace resplat
