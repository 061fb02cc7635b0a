#pragma once

// Parameter initialization helpers shared by the network builders.

#include "cvq/rng.hpp"
#include "cvq/tensor.hpp"

namespace cvq {

// Kaiming-uniform fan-in initialization: U(-b, b) with b = sqrt(6 / fan_in),
// fan_in = in_channels * kh * kw.
Tensor kaiming_conv2d_weight(int out_channels, int in_channels, int kh, int kw, Rng& rng);

// Same rule for cubic 3d kernels (fan_in = in_channels * k^3).
Tensor kaiming_conv3d_weight(int out_channels, int in_channels, int k, Rng& rng);

Tensor zero_bias(int channels);

}  // namespace cvq
