#include "resplat/metrics.hpp"

#include <cmath>

namespace resplat {

double mse(const Image& a, const Image& b) {
  a.validate();
  b.validate();
  if (a.width != b.width || a.height != b.height)
    throw NumericError("mse: image size mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.data.size());
}

double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

double attn_corner_mass(const Eigen::MatrixXd& attn) {
  const Eigen::Index n = attn.rows() - 1;
  if (n < 1 || attn.cols() != attn.rows())
    throw NumericError("attention matrix must be square, at least 2x2");
  return 0.25 * (attn(0, 0) + attn(0, n) + attn(n, 0) + attn(n, n));
}

double attn_max_entry(const Eigen::MatrixXd& attn) {
  return attn.maxCoeff();
}

void validate_attention(const Eigen::MatrixXd& attn, double tol) {
  for (Eigen::Index r = 0; r < attn.rows(); ++r) {
    double sum = 0.0;
    for (Eigen::Index c = 0; c < attn.cols(); ++c) {
      if (attn(r, c) < -tol)
        throw NumericError("attention weight below zero");
      sum += attn(r, c);
    }
    if (std::abs(sum - 1.0) > tol)
      throw NumericError("attention row does not sum to one");
  }
}

}  // namespace resplat
