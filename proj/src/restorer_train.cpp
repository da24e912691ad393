#include "resplat/restorer_train.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "resplat/common.hpp"

namespace resplat {

void TrainConfig::validate() const {
  if (steps < 0) throw ConfigError("train config: steps must be >= 0");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train config: lr must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw ConfigError("train config: betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("train config: eps must be positive");
  if (!(p_std > 0.0)) throw ConfigError("train config: p_std must be positive");
}

double TrainReport::trailing_mean(size_t window) const {
  if (loss_history.empty()) return 0.0;
  const size_t n = std::min(window, loss_history.size());
  double s = 0.0;
  for (size_t i = loss_history.size() - n; i < loss_history.size(); ++i)
    s += loss_history[i];
  return s / double(n);
}

double train_step(FixerModel* model, TrainState* state,
                  const std::vector<const TrainingSample*>& batch,
                  const TrainConfig& cfg, Rng* rng, double* mean_sigma) {
  if (model == nullptr || state == nullptr || rng == nullptr)
    throw ConfigError("train_step: null model/state/rng");
  if (batch.empty()) throw ConfigError("train_step: empty batch");

  const size_t n_params = model->param_count();
  std::vector<double> grads(n_params, 0.0);

  double loss_sum = 0.0;
  double sigma_sum = 0.0;
  std::ostringstream sigma_list;
  for (size_t i = 0; i < batch.size(); ++i) {
    const TrainingSample& s = *batch[i];
    const double sigma = sample_train_sigma(*rng, cfg.p_mean, cfg.p_std);
    sigma_sum += sigma;
    if (i) sigma_list << ", ";
    sigma_list << sigma;
    LatentVideo noise = gaussian_like(s.z_gt, *rng);
    LatentVideo z_t = forward_diffuse(s.z_gt, sigma, noise);
    loss_sum += model->loss_and_grad(z_t, sigma, s.z_c, s.ref, s.z_gt, &grads);
  }
  const double inv_b = 1.0 / double(batch.size());
  const double loss = loss_sum * inv_b;
  if (mean_sigma) *mean_sigma = sigma_sum * inv_b;

  if (!std::isfinite(loss))
    throw NumericError("train step " + std::to_string(state->step) +
                       ": non-finite loss " + std::to_string(loss) +
                       " (batch of " + std::to_string(batch.size()) +
                       ", sigmas = [" + sigma_list.str() + "])");

  for (double& g : grads) g *= inv_b;
  if (cfg.grad_clip > 0.0) {
    double sq = 0.0;
    for (double g : grads) sq += g * g;
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm))
      throw NumericError("train step " + std::to_string(state->step) +
                         ": non-finite gradient norm (sigmas = [" +
                         sigma_list.str() + "])");
    if (norm > cfg.grad_clip) {
      const double scale = cfg.grad_clip / norm;
      for (double& g : grads) g *= scale;
    }
  }

  if (state->m.empty()) {
    state->m.assign(n_params, 0.0);
    state->v.assign(n_params, 0.0);
  }
  if (state->m.size() != n_params || state->v.size() != n_params)
    throw ConfigError("train_step: optimizer state size mismatch");

  state->step += 1;
  const double t = double(state->step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  std::vector<double>& params = model->params();
  for (size_t i = 0; i < n_params; ++i) {
    state->m[i] = cfg.beta1 * state->m[i] + (1.0 - cfg.beta1) * grads[i];
    state->v[i] = cfg.beta2 * state->v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double mhat = state->m[i] / bc1;
    const double vhat = state->v[i] / bc2;
    params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
  return loss;
}

TrainReport train_fixer(FixerModel* model,
                        const std::vector<TrainingSample>& data,
                        const TrainConfig& cfg) {
  if (model == nullptr) throw ConfigError("train_fixer: null model");
  cfg.validate();
  if (data.empty()) throw ConfigError("train_fixer: empty training set");

  std::ofstream csv;
  if (!cfg.log_csv.empty()) {
    csv.open(cfg.log_csv, std::ios::trunc);
    if (!csv) throw ConfigError("train_fixer: cannot open log " + cfg.log_csv);
    csv << "step,sigma,loss\n";
  }

  Rng rng(derive_seed(cfg.seed, "fixer-train"));
  TrainState state;
  TrainReport report;
  report.loss_history.reserve(size_t(cfg.steps));
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<const TrainingSample*> batch;
    batch.reserve(size_t(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b)
      batch.push_back(&data[size_t(rng.uniform_int(0, int(data.size()) - 1))]);
    double mean_sigma = 0.0;
    const double loss = train_step(model, &state, batch, cfg, &rng, &mean_sigma);
    report.loss_history.push_back(loss);
    if (csv.is_open()) csv << step << "," << mean_sigma << "," << loss << "\n";
  }
  report.final_loss = report.loss_history.empty() ? 0.0 : report.loss_history.back();
  if (csv.is_open()) {
    csv.flush();
    if (!csv) throw ConfigError("train_fixer: failed writing log " + cfg.log_csv);
  }
  return report;
}

}  // namespace resplat
