#pragma once

#include <string>
#include <vector>

#include "resplat/pipeline.hpp"

namespace resplat {

// Which temporal attention matrices to average. The paper's visualization
// leaves layer/head/step unspecified; these make the choice explicit.
struct AttnSelectors {
  int block = -1;  // -1 = average all blocks
  int head = -1;   // -1 = average all heads
  double sigma = 1.0;  // probe noise level (mid-schedule)
  uint64_t seed = 0;
};

// Mean temporal attention over probes, spatial tokens, and the selected
// blocks/heads. Rows of `mean` are (averages of) softmax rows, so they sum
// to 1 within accumulation error; fully masked rows (degenerate 2-frame
// case) are zero and counted instead.
struct AttnHeatmap {
  Eigen::MatrixXd mean;  // frames x frames
  int block = -1;
  int head = -1;
  double sigma = 1.0;
  long samples = 0;
  int fully_masked_rows = 0;
};

// Noises each probe's ground-truth latents to the selector's sigma, runs one
// denoise per probe, and averages the captured temporal attention weights.
AttnHeatmap attention_stats(const FixerModel& model,
                            const std::vector<PairedSample>& probes,
                            MaskMode mode, const AttnSelectors& selectors);

// Grayscale PNG scaled so the largest entry is white (linear in between);
// each matrix cell becomes a cell_px x cell_px block.
void save_heatmap_png(const std::string& path, const Eigen::MatrixXd& m,
                      int cell_px = 16);

// Raw matrix values, one row per line.
void save_heatmap_csv(const std::string& path, const Eigen::MatrixXd& m);

}  // namespace resplat
