#pragma once

#include <string>
#include <vector>

#include "resplat/restorer.hpp"

namespace resplat {

// One latent-space training example: clean target latents, coarse
// conditioning latents, and the raw reference patch tokens.
struct TrainingSample {
  LatentVideo z_gt;
  LatentVideo z_c;
  Eigen::MatrixXd ref;
};

struct TrainConfig {
  int steps = 600;
  int batch_size = 2;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  double grad_clip = 1.0;  // global-norm clip; <= 0 disables
  double p_mean = -1.2;    // log-normal sigma proposal
  double p_std = 1.2;
  uint64_t seed = 0;
  std::string log_csv;  // per-step CSV (step, sigma, loss); empty = no log
  void validate() const;
};

// Adam moments plus the step counter; owned by the caller so train_step can
// be driven one step at a time.
struct TrainState {
  std::vector<double> m, v;
  long step = 0;
};

struct TrainReport {
  std::vector<double> loss_history;  // batch-mean weighted loss per step
  double final_loss = 0.0;

  // Mean of the last `window` entries (all of them if fewer).
  double trailing_mean(size_t window) const;
};

// One optimizer step over `batch`: per-sample sigma from the log-normal
// proposal, fresh i.i.d. noise per frame, weighted denoising loss, global
// gradient clip, Adam update. Returns the batch-mean loss.
double train_step(FixerModel* model, TrainState* state,
                  const std::vector<const TrainingSample*>& batch,
                  const TrainConfig& cfg, Rng* rng,
                  double* mean_sigma = nullptr);

// cfg.steps full steps over uniformly resampled batches from `data`.
TrainReport train_fixer(FixerModel* model, const std::vector<TrainingSample>& data,
                        const TrainConfig& cfg);

}  // namespace resplat
