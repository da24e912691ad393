#include "resplat/attention_stats.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "resplat/image.hpp"

namespace resplat {

AttnHeatmap attention_stats(const FixerModel& model,
                            const std::vector<PairedSample>& probes,
                            MaskMode mode, const AttnSelectors& selectors) {
  if (probes.empty())
    throw ConfigError("attention_stats needs at least one probe sample");
  if (!(selectors.sigma > 0.0) || !std::isfinite(selectors.sigma))
    throw ConfigError("attention probe sigma must be positive and finite");
  const bool want_mask = (mode == MaskMode::kMaskedCyclic);
  if (model.config().use_mask != want_mask)
    throw ConfigError("attention probe mode '" + to_string(mode) +
                      "' does not match the model's mask setting");

  AttnCapture capture;
  capture.block_select = selectors.block;
  capture.head_select = selectors.head;

  for (size_t i = 0; i < probes.size(); ++i) {
    const PairedSample& p = probes[i];
    p.validate();
    Video truth = p.truth;
    Video coarse = p.coarse;
    if (mode == MaskMode::kNoneNoncyclic) {
      truth = strip_cycle(truth);
      coarse = strip_cycle(coarse);
    }
    const LatentVideo z_gt = video_to_latent(truth, kLatentPatch);
    const LatentVideo z_c = video_to_latent(coarse, kLatentPatch);
    Rng rng(derive_seed(selectors.seed, "attn-probe", i));
    const LatentVideo noise = gaussian_like(z_gt, rng);
    const LatentVideo z_t = forward_diffuse(z_gt, selectors.sigma, noise);
    const Eigen::MatrixXd m_f = model.embed_reference(p.ref_embedding);
    model.denoise(z_t, selectors.sigma, z_c, m_f, &capture);
  }

  AttnHeatmap h;
  h.mean = capture.mean();
  h.block = selectors.block;
  h.head = selectors.head;
  h.sigma = selectors.sigma;
  h.samples = static_cast<long>(probes.size());
  h.fully_masked_rows = capture.fully_masked_rows;
  return h;
}

void save_heatmap_png(const std::string& path, const Eigen::MatrixXd& m,
                      int cell_px) {
  if (m.rows() == 0 || m.cols() == 0)
    throw ConfigError("cannot render an empty heatmap");
  if (cell_px < 1) throw ConfigError("heatmap cell size must be at least 1px");
  const double peak = m.maxCoeff();
  const double scale = peak > 0.0 ? 1.0 / peak : 1.0;
  const int w = cell_px * static_cast<int>(m.cols());
  const int h = cell_px * static_cast<int>(m.rows());
  std::vector<double> pixels(static_cast<size_t>(w) * h, 0.0);
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) {
      const double v = std::clamp(m(r, c) * scale, 0.0, 1.0);
      for (int dy = 0; dy < cell_px; ++dy) {
        double* row = pixels.data() +
                      static_cast<size_t>(r * cell_px + dy) * w + c * cell_px;
        std::fill(row, row + cell_px, v);
      }
    }
  }
  write_gray_png(path, pixels, w, h);
}

void save_heatmap_csv(const std::string& path, const Eigen::MatrixXd& m) {
  std::ofstream f(path);
  if (!f) throw StageError("cannot write heatmap csv: " + path);
  f << std::setprecision(17);
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) {
      if (c) f << ",";
      f << m(r, c);
    }
    f << "\n";
  }
  if (!f) throw StageError("failed while writing heatmap csv: " + path);
}

}  // namespace resplat
