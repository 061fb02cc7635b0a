#pragma once

// End-to-end image pipeline: importance scoring, split, quantization, context
// coding, merge, reconstruction, and the compressed-container round trip.
// `reconstruct` builds the differentiable training graph; the *_eval helpers
// quantize hard with no straight-through machinery and exist for the pruning
// experiments and for compression itself.

#include <cstdint>
#include <vector>

#include "cvq/bitstream.hpp"
#include "cvq/model.hpp"

namespace cvq {

// Importance for the model's configured mode, calibrated on `images`
// (predefined ignores them; the squeeze-excite path averages scores over
// them; the pruned-reconstruction path measures each channel's damage).
ChannelImportance compute_importance(Model& m, const std::vector<Tensor>& images);

// w_c = mean over images of (1 - MS-SSIM) after zeroing latent channel c
// ahead of quantization; `delta` subtracts each image's unpruned error.
// Channels are evaluated under the predefined (identity) grouping so the
// measurement does not depend on any previously chosen ordering.
ChannelImportance importance_re(const std::vector<Tensor>& images, Model& m, bool delta);

struct Reconstruction {
    Tensor z;                           // [C,h,w] before quantization
    SplitResult split;                  // group latents + permutation
    std::vector<QuantizeResult> quant;  // per group
    Tensor z_hat;                       // merged quantized latent
    Tensor recon;                       // [3,H,W]
};

// Differentiable pass. With a null `imp`, importance follows the configured
// mode: predefined uses the ramp, the squeeze-excite mode scores this image's
// own latent; the pruned-reconstruction mode must be precomputed and passed in.
Reconstruction reconstruct(const Tensor& image, Model& m, const ChannelImportance* imp = nullptr);

// Hard-quantized reconstruction from a detached latent. `zero_before` zeroes
// one latent channel ahead of quantization, `zero_after` zeroes it on the
// quantized latent; indices refer to the unpermuted channel order.
Tensor reconstruct_from_latent(const Tensor& z_plain, Model& m, const ChannelImportance& imp,
                               int zero_before = -1, int zero_after = -1);

struct CompressResult {
    Bitstream stream;
    std::vector<uint8_t> bytes;      // serialized container
    std::vector<size_t> group_bits;  // payload size per group, in bits
    double bits_per_pixel = 0.0;     // over the whole container
};

CompressResult compress_image(const Tensor& image, Model& m);

Tensor decompress_stream(const Bitstream& bs, Model& m);

}  // namespace cvq
