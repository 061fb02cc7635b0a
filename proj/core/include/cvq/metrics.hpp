#pragma once

// Rate/distortion metrics. psnr, ms_ssim_db and bpp are plain reporting
// numbers; ms_ssim builds a differentiable graph so it can serve directly as
// the distortion term of a training loss.

#include <cstddef>

#include "cvq/tensor.hpp"

namespace cvq {

// 10*log10(1/MSE) over same-shape images in [0,1], capped at 99 dB.
double psnr(const Tensor& a, const Tensor& b);

// Multi-scale SSIM over [C,H,W] images in [0,1]: 11x11 Gaussian window with
// sigma 1.5, K1=0.01, K2=0.03, level count min(5, floor(log2(min(H,W)/8)))
// with the standard five level weights renormalized over the levels used.
// Requires min(H,W) >= 16; returns a [1] graph tensor in (0,1].
Tensor ms_ssim(const Tensor& a, const Tensor& b);

double ms_ssim_value(const Tensor& a, const Tensor& b);

// -10*log10(1-v) for v in [0,1]; v=1 (and anything above the cap) reports 99.
double ms_ssim_db(double v);

// 8*stream_bytes/(H*W).
double bpp(size_t stream_bytes, int height, int width);

}  // namespace cvq
