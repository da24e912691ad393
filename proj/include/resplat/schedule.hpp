#pragma once

#include <cmath>
#include <vector>

#include "resplat/common.hpp"

namespace resplat {

// Preconditioning coefficients for a denoiser trained on data with std
// sigma_data: D(z, s) = c_skip * z + c_out * F(c_in * z, c_noise).
struct EdmCoeffs {
  double c_skip = 1.0;
  double c_out = 0.0;
  double c_in = 1.0;
  double c_noise = 0.0;
};

inline EdmCoeffs edm_coeffs(double sigma, double sigma_data = 0.5) {
  if (!(sigma > 0.0)) throw NumericError("edm coefficients need sigma > 0");
  const double s2 = sigma * sigma;
  const double d2 = sigma_data * sigma_data;
  EdmCoeffs c;
  c.c_skip = d2 / (s2 + d2);
  c.c_out = sigma * sigma_data / std::sqrt(s2 + d2);
  c.c_in = 1.0 / std::sqrt(s2 + d2);
  c.c_noise = 0.25 * std::log(sigma);
  return c;
}

// Weight making the effective loss on the raw network output unit-scale:
// weight * c_out^2 = 1.
inline double edm_loss_weight(double sigma, double sigma_data = 0.5) {
  const double s2 = sigma * sigma;
  const double d2 = sigma_data * sigma_data;
  return (s2 + d2) / (s2 * d2);
}

// Log-normal training-noise proposal.
inline double sample_train_sigma(Rng& rng, double p_mean = -1.2,
                                 double p_std = 1.2) {
  return std::exp(p_mean + p_std * rng.normal());
}

struct NoiseSchedule {
  std::vector<double> sigmas;  // strictly decreasing; final entry may be 0
  double sigma_data = 0.5;

  int steps() const { return static_cast<int>(sigmas.size()) - 1; }
  void validate() const {
    if (sigmas.size() < 2)
      throw ConfigError("noise schedule needs at least two sigmas");
    for (size_t i = 0; i + 1 < sigmas.size(); ++i) {
      if (!(sigmas[i] > sigmas[i + 1]))
        throw ConfigError("noise schedule sigmas must strictly decrease");
      if (!(sigmas[i] > 0.0))
        throw ConfigError("only the final schedule sigma may be zero");
    }
    if (sigmas.back() < 0.0)
      throw ConfigError("noise schedule sigma below zero");
    if (!(sigma_data > 0.0)) throw ConfigError("sigma_data must be positive");
  }
};

// Karras-style spacing: sigma_i interpolates sigma_max -> sigma_min in
// rho-warped space over n points, with a final 0 appended. n = 1 gives the
// single-step schedule {sigma_max, 0}.
inline NoiseSchedule karras_schedule(int n, double sigma_min = 0.002,
                                     double sigma_max = 80.0,
                                     double rho = 7.0) {
  if (n < 1) throw ConfigError("schedule needs at least one step");
  if (!(sigma_min > 0.0) || !(sigma_max > sigma_min))
    throw ConfigError("schedule needs 0 < sigma_min < sigma_max");
  NoiseSchedule s;
  s.sigmas.reserve(n + 1);
  if (n == 1) {
    s.sigmas.push_back(sigma_max);
  } else {
    const double a = std::pow(sigma_max, 1.0 / rho);
    const double b = std::pow(sigma_min, 1.0 / rho);
    for (int i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / (n - 1);
      s.sigmas.push_back(std::pow(a + t * (b - a), rho));
    }
  }
  s.sigmas.push_back(0.0);
  s.validate();
  return s;
}

}  // namespace resplat
