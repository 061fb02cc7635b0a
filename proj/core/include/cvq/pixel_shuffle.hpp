#pragma once

// Space-to-depth and depth-to-space resampling. Channel packing is
// zero-based: input pixel (c, d*y+i, d*x+j) lands in output channel
// c*d*d + i*d + j at (y, x), and pixel_shuffle is the exact inverse.

#include "cvq/tensor.hpp"

namespace cvq {

// [C, H, W] -> [C*d*d, H/d, W/d]; H and W must be divisible by d.
Tensor inverse_pixel_shuffle(const Tensor& x, int d);

// [C*d*d, h, w] -> [C, h*d, w*d]; the channel count must be divisible by d*d.
Tensor pixel_shuffle(const Tensor& x, int d);

}  // namespace cvq
