#include "cvq/codec_network.hpp"

#include <algorithm>
#include <stdexcept>

#include "cvq/init.hpp"
#include "cvq/pixel_shuffle.hpp"

namespace cvq {

namespace {

constexpr int kStages = 4;

// Channels entering encoder stage t (before space-to-depth). The head already
// produces stage_channels_enc[0], so stage 0 reads that width.
int enc_stage_in(const CodecConfig& cfg, int t) {
    return cfg.stage_channels_enc[static_cast<size_t>(t == 0 ? 0 : t - 1)];
}

// Channels leaving decoder stage t (after depth-to-space). The mirror of the
// encoder rule: the last stage keeps stage_channels_dec[3].
int dec_stage_out(const CodecConfig& cfg, int t) {
    return cfg.stage_channels_dec[static_cast<size_t>(t < kStages - 1 ? t + 1 : kStages - 1)];
}

int dec_stage_in(const CodecConfig& cfg, int t) {
    return t == 0 ? cfg.stage_channels_dec[0] : dec_stage_out(cfg, t - 1);
}

Tensor clamp01(const Tensor& x) {
    // min(max(x, 0), 1) from the one-sided primitive.
    return neg(clamp_min(neg(clamp_min(x, 0.0)), -1.0));
}

void append_params(std::vector<std::pair<std::string, Tensor*>>& out,
                   std::vector<std::pair<std::string, Tensor*>> more) {
    for (auto& p : more) out.push_back(std::move(p));
}

}  // namespace

void validate_codec_config(const CodecConfig& cfg) {
    if (cfg.stage_channels_enc.size() != kStages || cfg.stage_channels_dec.size() != kStages)
        throw std::invalid_argument("codec config: stage channel lists must have 4 entries");
    for (int c : cfg.stage_channels_enc)
        if (c < 1) throw std::invalid_argument("codec config: encoder stage channels must be positive");
    for (int c : cfg.stage_channels_dec)
        if (c < 1) throw std::invalid_argument("codec config: decoder stage channels must be positive");
    if (cfg.blocks_per_group < 1)
        throw std::invalid_argument("codec config: blocks per group must be positive");
    if (cfg.latent_channels < 1)
        throw std::invalid_argument("codec config: latent channels must be positive");
    if (cfg.downsample_factor < 1)
        throw std::invalid_argument("codec config: downsample factor must be positive");
    if (cfg.se_reduction < 1)
        throw std::invalid_argument("codec config: se reduction must be positive");
    if (cfg.kernel_size < 1 || cfg.kernel_size % 2 == 0)
        throw std::invalid_argument("codec config: kernel size must be odd and positive");
}

int spatial_divisor(const CodecConfig& cfg) {
    int p = 1;
    for (int i = 0; i < kStages; ++i) p *= cfg.downsample_factor;
    return p;
}

RcabBlock make_rcab(int channels, int se_reduction, int kernel_size, Rng& rng) {
    if (channels < 1) throw std::invalid_argument("make_rcab: channels must be positive");
    if (se_reduction < 1) throw std::invalid_argument("make_rcab: se reduction must be positive");
    if (kernel_size < 1 || kernel_size % 2 == 0)
        throw std::invalid_argument("make_rcab: kernel size must be odd and positive");
    int mid = std::max(1, channels / se_reduction);
    RcabBlock b;
    b.conv1_w = kaiming_conv2d_weight(channels, channels, kernel_size, kernel_size, rng);
    b.conv1_b = zero_bias(channels);
    b.conv2_w = kaiming_conv2d_weight(channels, channels, kernel_size, kernel_size, rng);
    b.conv2_b = zero_bias(channels);
    b.reduce_w = kaiming_conv2d_weight(mid, channels, 1, 1, rng);
    b.reduce_b = zero_bias(mid);
    b.expand_w = kaiming_conv2d_weight(channels, mid, 1, 1, rng);
    b.expand_b = zero_bias(channels);
    return b;
}

Tensor rcab_forward(const Tensor& x, const RcabBlock& block) {
    if (x.rank() != 3) throw std::invalid_argument("rcab_forward: expected a [C,h,w] tensor");
    if (x.dim(0) != block.conv1_w.dim(1))
        throw std::invalid_argument("rcab_forward: channel count does not match the block");
    int pad = block.conv1_w.dim(2) / 2;
    Tensor branch = conv2d(relu(conv2d(x, block.conv1_w, block.conv1_b, pad)),
                           block.conv2_w, block.conv2_b, pad);
    Tensor pooled = global_avg_pool2d(branch);
    Tensor hidden = relu(conv2d(pooled, block.reduce_w, block.reduce_b, 0));
    Tensor gate = sigmoid(conv2d(hidden, block.expand_w, block.expand_b, 0));
    return add(x, scale_channels(branch, gate));
}

Encoder make_encoder(const CodecConfig& cfg, Rng& rng) {
    validate_codec_config(cfg);
    int k = cfg.kernel_size;
    int dd = cfg.downsample_factor * cfg.downsample_factor;
    Encoder e;
    e.cfg = cfg;
    e.head_w = kaiming_conv2d_weight(cfg.stage_channels_enc[0], 3, k, k, rng);
    e.head_b = zero_bias(cfg.stage_channels_enc[0]);
    for (int t = 0; t < kStages; ++t) {
        EncoderStage st;
        int width = dd * enc_stage_in(cfg, t);
        for (int i = 0; i < cfg.blocks_per_group; ++i)
            st.blocks.push_back(make_rcab(width, cfg.se_reduction, k, rng));
        int out = cfg.stage_channels_enc[static_cast<size_t>(t)];
        st.conv_w = kaiming_conv2d_weight(out, width, k, k, rng);
        st.conv_b = zero_bias(out);
        e.stages.push_back(std::move(st));
    }
    e.tail_w = kaiming_conv2d_weight(cfg.latent_channels, cfg.stage_channels_enc[3], k, k, rng);
    e.tail_b = zero_bias(cfg.latent_channels);
    return e;
}

Tensor encode(const Tensor& image, const Encoder& enc) {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw std::invalid_argument("encode: expected a [3,H,W] image");
    int divisor = spatial_divisor(enc.cfg);
    if (image.dim(1) % divisor != 0 || image.dim(2) % divisor != 0)
        throw std::invalid_argument("encode: spatial dims must be divisible by " +
                                    std::to_string(divisor));
    int pad = enc.cfg.kernel_size / 2;
    Tensor x = conv2d(image, enc.head_w, enc.head_b, pad);
    for (const EncoderStage& st : enc.stages) {
        x = inverse_pixel_shuffle(x, enc.cfg.downsample_factor);
        for (const RcabBlock& b : st.blocks) x = rcab_forward(x, b);
        x = conv2d(x, st.conv_w, st.conv_b, pad);
    }
    return conv2d(x, enc.tail_w, enc.tail_b, pad);
}

Decoder make_decoder(const CodecConfig& cfg, Rng& rng) {
    validate_codec_config(cfg);
    int k = cfg.kernel_size;
    int dd = cfg.downsample_factor * cfg.downsample_factor;
    Decoder d;
    d.cfg = cfg;
    d.head_w = kaiming_conv2d_weight(cfg.stage_channels_dec[0], cfg.latent_channels, k, k, rng);
    d.head_b = zero_bias(cfg.stage_channels_dec[0]);
    for (int t = 0; t < kStages; ++t) {
        DecoderStage st;
        int width = dd * dec_stage_out(cfg, t);
        st.conv_w = kaiming_conv2d_weight(width, dec_stage_in(cfg, t), k, k, rng);
        st.conv_b = zero_bias(width);
        for (int i = 0; i < cfg.blocks_per_group; ++i)
            st.blocks.push_back(make_rcab(width, cfg.se_reduction, k, rng));
        d.stages.push_back(std::move(st));
    }
    d.tail_w = kaiming_conv2d_weight(3, cfg.stage_channels_dec[3], k, k, rng);
    d.tail_b = zero_bias(3);
    return d;
}

Tensor decode(const Tensor& z_hat, const Decoder& dec) {
    if (z_hat.rank() != 3 || z_hat.dim(0) != dec.cfg.latent_channels)
        throw std::invalid_argument("decode: latent channel count does not match the decoder");
    int pad = dec.cfg.kernel_size / 2;
    Tensor x = conv2d(z_hat, dec.head_w, dec.head_b, pad);
    for (const DecoderStage& st : dec.stages) {
        x = conv2d(x, st.conv_w, st.conv_b, pad);
        for (const RcabBlock& b : st.blocks) x = rcab_forward(x, b);
        x = pixel_shuffle(x, dec.cfg.downsample_factor);
    }
    return clamp01(sigmoid(conv2d(x, dec.tail_w, dec.tail_b, pad)));
}

std::vector<std::pair<std::string, Tensor*>> rcab_params(RcabBlock& b, const std::string& prefix) {
    return {{prefix + ".w1", &b.conv1_w},    {prefix + ".b1", &b.conv1_b},
            {prefix + ".w2", &b.conv2_w},    {prefix + ".b2", &b.conv2_b},
            {prefix + ".se_w1", &b.reduce_w}, {prefix + ".se_b1", &b.reduce_b},
            {prefix + ".se_w2", &b.expand_w}, {prefix + ".se_b2", &b.expand_b}};
}

std::vector<std::pair<std::string, Tensor*>> encoder_params(Encoder& e, const std::string& prefix) {
    std::vector<std::pair<std::string, Tensor*>> out;
    out.push_back({prefix + ".head_w", &e.head_w});
    out.push_back({prefix + ".head_b", &e.head_b});
    for (size_t t = 0; t < e.stages.size(); ++t) {
        std::string sp = prefix + ".s" + std::to_string(t);
        for (size_t i = 0; i < e.stages[t].blocks.size(); ++i)
            append_params(out, rcab_params(e.stages[t].blocks[i], sp + ".blk" + std::to_string(i)));
        out.push_back({sp + ".w", &e.stages[t].conv_w});
        out.push_back({sp + ".b", &e.stages[t].conv_b});
    }
    out.push_back({prefix + ".tail_w", &e.tail_w});
    out.push_back({prefix + ".tail_b", &e.tail_b});
    return out;
}

std::vector<std::pair<std::string, Tensor*>> decoder_params(Decoder& d, const std::string& prefix) {
    std::vector<std::pair<std::string, Tensor*>> out;
    out.push_back({prefix + ".head_w", &d.head_w});
    out.push_back({prefix + ".head_b", &d.head_b});
    for (size_t t = 0; t < d.stages.size(); ++t) {
        std::string sp = prefix + ".s" + std::to_string(t);
        out.push_back({sp + ".w", &d.stages[t].conv_w});
        out.push_back({sp + ".b", &d.stages[t].conv_b});
        for (size_t i = 0; i < d.stages[t].blocks.size(); ++i)
            append_params(out, rcab_params(d.stages[t].blocks[i], sp + ".blk" + std::to_string(i)));
    }
    out.push_back({prefix + ".tail_w", &d.tail_w});
    out.push_back({prefix + ".tail_b", &d.tail_b});
    return out;
}

}  // namespace cvq
