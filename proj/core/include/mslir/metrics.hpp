#pragma once

#include <span>

#include "mslir/grid.hpp"

namespace mslir {

/// 10 log10(range^2 / MSE) with range = max(ref) - min(ref). Returns
/// +infinity when the images are identical.
double psnr(std::span<const float> x, std::span<const float> ref);

struct SsimOptions {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
};

/// Mean SSIM over all window positions that fit inside the image (no
/// padding), separable Gaussian window, dynamic range max(ref) - min(ref).
/// Works on 2D and 3D row-major arrays of `shape`.
double ssim(std::span<const float> x, std::span<const float> ref, const Shape& shape, const SsimOptions& opt = {});

}  // namespace mslir
