#pragma once

// Channel-attention residual encoder and its mirror decoder. The encoder is
// head conv -> four body stages -> tail conv. Each stage packs space to depth
// (factor d), refines with B residual channel-attention blocks, and remaps
// channels with one stage-final convolution, so the spatial size shrinks by
// exactly d per stage (d^4 overall). The decoder runs the recipe backwards
// with depth-to-space upsampling and ends in a sigmoid, clamped to [0,1]
// defensively before metric computation.

#include <string>
#include <utility>
#include <vector>

#include "cvq/rng.hpp"
#include "cvq/tensor.hpp"

namespace cvq {

struct CodecConfig {
    std::vector<int> stage_channels_enc = {32, 64, 128, 192};  // per-stage outputs
    std::vector<int> stage_channels_dec = {192, 128, 64, 32};
    int blocks_per_group = 6;   // residual blocks per stage
    int latent_channels = 32;
    int downsample_factor = 2;  // per stage
    int se_reduction = 4;
    int kernel_size = 3;        // odd
};

void validate_codec_config(const CodecConfig& cfg);

// Total image-to-latent spatial reduction, downsample_factor^4.
int spatial_divisor(const CodecConfig& cfg);

// Residual block: x + gate * branch. The branch is conv-relu-conv at a fixed
// channel count; the per-channel gate is a squeeze-excite sub-network
// (global pool -> 1x1 reduce -> relu -> 1x1 expand -> sigmoid), so gates lie
// strictly inside (0,1).
struct RcabBlock {
    Tensor conv1_w, conv1_b;
    Tensor conv2_w, conv2_b;
    Tensor reduce_w, reduce_b;  // 1x1, channels -> max(1, channels/reduction)
    Tensor expand_w, expand_b;  // 1x1, back to channels
};

RcabBlock make_rcab(int channels, int se_reduction, int kernel_size, Rng& rng);

// [C,h,w] -> [C,h,w]; C must match the block's channel count.
Tensor rcab_forward(const Tensor& x, const RcabBlock& block);

struct EncoderStage {
    std::vector<RcabBlock> blocks;  // run at d*d times the stage input channels
    Tensor conv_w, conv_b;          // stage-final channel remap
};

struct Encoder {
    CodecConfig cfg;
    Tensor head_w, head_b;  // 3 -> stage_channels_enc[0], full resolution
    std::vector<EncoderStage> stages;
    Tensor tail_w, tail_b;  // stage_channels_enc[3] -> latent_channels
};

Encoder make_encoder(const CodecConfig& cfg, Rng& rng);

// [3,H,W] -> [latent_channels, H/d^4, W/d^4]; H and W must divide by d^4.
Tensor encode(const Tensor& image, const Encoder& enc);

struct DecoderStage {
    Tensor conv_w, conv_b;          // expand to d*d times the stage output channels
    std::vector<RcabBlock> blocks;  // run at the expanded width, before upsampling
};

struct Decoder {
    CodecConfig cfg;
    Tensor head_w, head_b;  // latent_channels -> stage_channels_dec[0]
    std::vector<DecoderStage> stages;
    Tensor tail_w, tail_b;  // stage_channels_dec[3] -> 3
};

Decoder make_decoder(const CodecConfig& cfg, Rng& rng);

// [latent_channels, h, w] -> [3, h*d^4, w*d^4], values in [0,1].
Tensor decode(const Tensor& z_hat, const Decoder& dec);

// Named parameter access in a fixed order (checkpointing, optimizers).
std::vector<std::pair<std::string, Tensor*>> rcab_params(RcabBlock& b, const std::string& prefix);
std::vector<std::pair<std::string, Tensor*>> encoder_params(Encoder& e, const std::string& prefix);
std::vector<std::pair<std::string, Tensor*>> decoder_params(Decoder& d, const std::string& prefix);

}  // namespace cvq
