#pragma once

#include <Eigen/Dense>

#include "resplat/image.hpp"

namespace resplat {

// Mean squared error over all pixels and channels.
double mse(const Image& a, const Image& b);

// 10 * log10(1 / MSE) for unit dynamic range, capped at 99 dB (identical
// images would otherwise be infinite).
double psnr(const Image& a, const Image& b);
constexpr double kPsnrCap = 99.0;

// Helpers for inspecting temporal attention maps (rows = queries,
// cols = keys, each row is a softmax distribution).

// Mean weight over the four corner entries (0,0), (0,last), (last,0),
// (last,last) — the positions the boundary mask removes.
double attn_corner_mass(const Eigen::MatrixXd& attn);

// Largest single entry; near-uniform rows stay close to 1/cols.
double attn_max_entry(const Eigen::MatrixXd& attn);

// Verifies every row sums to 1 within tol and entries are non-negative.
void validate_attention(const Eigen::MatrixXd& attn, double tol = 1e-6);

}  // namespace resplat
