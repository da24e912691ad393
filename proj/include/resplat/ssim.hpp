#pragma once

#include "resplat/image.hpp"

namespace resplat {

// Mean SSIM over all valid (unpadded) windows and the three channels.
// Box-filter windows, C1 = 0.01^2, C2 = 0.03^2 for unit dynamic range.
// Throws if either image is smaller than the window.
double ssim(const Image& a, const Image& b, int window = 7);

// d(upstream * SSIM(a, b)) / da as an image-shaped gradient. The second
// argument is treated as constant.
Image ssim_backward(const Image& a, const Image& b, double upstream,
                    int window = 7);

}  // namespace resplat
