#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "cvq/codec_network.hpp"
#include "cvq/grad_check.hpp"
#include "cvq/rng.hpp"
#include "cvq/tensor.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cvq;

namespace {

CodecConfig toy_config(int latent_channels) {
    CodecConfig cfg;
    cfg.stage_channels_enc = {4, 4, 4, 4};
    cfg.stage_channels_dec = {4, 4, 4, 4};
    cfg.blocks_per_group = 1;
    cfg.latent_channels = latent_channels;
    return cfg;
}

void fill_zero(Tensor& t) {
    std::vector<double>& v = t.mutable_values();
    std::fill(v.begin(), v.end(), 0.0);
}

void fill_value(Tensor& t, double value) {
    std::vector<double>& v = t.mutable_values();
    std::fill(v.begin(), v.end(), value);
}

void nudge_zeros(Tensor& t, Rng& rng) {
    for (double& v : t.mutable_values())
        if (v == 0.0) v = rng.uniform(-0.3, 0.3);
}

bool all_finite(const Tensor& t) {
    for (double v : t.values())
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace

TEST_CASE("codec config validation") {
    CodecConfig cfg;
    CHECK_NOTHROW(validate_codec_config(cfg));
    CHECK(spatial_divisor(cfg) == 16);

    CodecConfig d3 = cfg;
    d3.downsample_factor = 3;
    CHECK(spatial_divisor(d3) == 81);

    CodecConfig bad = cfg;
    bad.stage_channels_enc = {32, 64, 128};
    CHECK_THROWS_AS(validate_codec_config(bad), std::invalid_argument);
    bad = cfg;
    bad.stage_channels_dec = {192, 128, 64, 32, 16};
    CHECK_THROWS_AS(validate_codec_config(bad), std::invalid_argument);
    bad = cfg;
    bad.stage_channels_enc[2] = 0;
    CHECK_THROWS_AS(validate_codec_config(bad), std::invalid_argument);
    bad = cfg;
    bad.blocks_per_group = 0;
    CHECK_THROWS_AS(validate_codec_config(bad), std::invalid_argument);
    bad = cfg;
    bad.latent_channels = 0;
    CHECK_THROWS_AS(validate_codec_config(bad), std::invalid_argument);
    bad = cfg;
    bad.downsample_factor = 0;
    CHECK_THROWS_AS(validate_codec_config(bad), std::invalid_argument);
    bad = cfg;
    bad.se_reduction = 0;
    CHECK_THROWS_AS(validate_codec_config(bad), std::invalid_argument);
    bad = cfg;
    bad.kernel_size = 4;
    CHECK_THROWS_AS(validate_codec_config(bad), std::invalid_argument);

    Rng rng(1);
    CHECK_THROWS_AS(make_rcab(0, 4, 3, rng), std::invalid_argument);
    CHECK_THROWS_AS(make_rcab(8, 0, 3, rng), std::invalid_argument);
    CHECK_THROWS_AS(make_rcab(8, 4, 2, rng), std::invalid_argument);
}

TEST_CASE("encoder maps a 32x32 image to the configured latent grid") {
    Rng rng(7);
    Encoder enc = make_encoder(toy_config(8), rng);
    Tensor image = test_util::random_tensor(rng, {3, 32, 32}, 0.0, 1.0, false);
    Tensor z = encode(image, enc);
    CHECK(z.shape() == Shape{8, 2, 2});
    CHECK(all_finite(z));
}

TEST_CASE("zero image with zero biases encodes to exactly zero") {
    Rng rng(11);
    Encoder enc = make_encoder(toy_config(8), rng);
    Tensor z = encode(Tensor::zeros({3, 32, 32}), enc);
    CHECK(all_finite(z));
    double m = 0.0;
    for (double v : z.values()) m = std::max(m, std::abs(v));
    CHECK(m == 0.0);
}

TEST_CASE("encode is deterministic given seed and params") {
    Rng rng_img(3);
    Tensor image = test_util::random_tensor(rng_img, {3, 32, 32}, 0.0, 1.0, false);

    Rng r1(42), r2(42);
    Encoder e1 = make_encoder(toy_config(8), r1);
    Encoder e2 = make_encoder(toy_config(8), r2);
    std::vector<double> z1 = encode(image, e1).values();
    std::vector<double> z2 = encode(image, e2).values();
    std::vector<double> z1again = encode(image, e1).values();
    CHECK(z1 == z2);
    CHECK(z1 == z1again);
}

TEST_CASE("encode rejects bad inputs") {
    Rng rng(5);
    Encoder enc = make_encoder(toy_config(8), rng);
    CHECK_THROWS_AS(encode(Tensor::zeros({3, 30, 32}), enc), std::invalid_argument);
    CHECK_THROWS_AS(encode(Tensor::zeros({3, 32, 24}), enc), std::invalid_argument);
    CHECK_THROWS_AS(encode(Tensor::zeros({4, 32, 32}), enc), std::invalid_argument);
    CHECK_THROWS_AS(encode(Tensor::zeros({32, 32}), enc), std::invalid_argument);
}

TEST_CASE("decoder maps the latent grid back to an image in [0,1]") {
    Rng rng(9);
    Decoder dec = make_decoder(toy_config(8), rng);
    Tensor z = test_util::random_tensor(rng, {8, 2, 2}, -2.0, 2.0, false);
    Tensor out = decode(z, dec);
    CHECK(out.shape() == Shape{3, 32, 32});
    for (double v : out.values()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    std::vector<double> a = decode(z, dec).values();
    std::vector<double> b = out.values();
    CHECK(a == b);
    CHECK_THROWS_AS(decode(Tensor::zeros({7, 2, 2}), dec), std::invalid_argument);
    CHECK_THROWS_AS(decode(Tensor::zeros({8, 2}), dec), std::invalid_argument);
}

TEST_CASE("encode-decode round trip preserves image shape") {
    Rng rng(13);
    CodecConfig cfg = toy_config(8);
    Encoder enc = make_encoder(cfg, rng);
    Decoder dec = make_decoder(cfg, rng);
    Tensor image = test_util::random_tensor(rng, {3, 32, 32}, 0.0, 1.0, false);
    Tensor recon = decode(encode(image, enc), dec);
    CHECK(recon.shape() == Shape{3, 32, 32});
}

TEST_CASE("stage channel bookkeeping mirrors between encoder and decoder") {
    CodecConfig cfg;
    cfg.stage_channels_enc = {4, 6, 8, 10};
    cfg.stage_channels_dec = {10, 8, 6, 4};
    cfg.blocks_per_group = 1;
    cfg.latent_channels = 5;
    Rng rng(21);
    Encoder enc = make_encoder(cfg, rng);
    Decoder dec = make_decoder(cfg, rng);

    CHECK(enc.head_w.shape() == Shape{4, 3, 3, 3});
    CHECK(enc.stages[0].blocks[0].conv1_w.shape() == Shape{16, 16, 3, 3});
    CHECK(enc.stages[0].conv_w.shape() == Shape{4, 16, 3, 3});
    CHECK(enc.stages[1].conv_w.shape() == Shape{6, 16, 3, 3});
    CHECK(enc.stages[2].conv_w.shape() == Shape{8, 24, 3, 3});
    CHECK(enc.stages[3].conv_w.shape() == Shape{10, 32, 3, 3});
    CHECK(enc.tail_w.shape() == Shape{5, 10, 3, 3});

    CHECK(dec.head_w.shape() == Shape{10, 5, 3, 3});
    CHECK(dec.stages[0].conv_w.shape() == Shape{32, 10, 3, 3});
    CHECK(dec.stages[0].blocks[0].conv1_w.shape() == Shape{32, 32, 3, 3});
    CHECK(dec.stages[1].conv_w.shape() == Shape{24, 8, 3, 3});
    CHECK(dec.stages[2].conv_w.shape() == Shape{16, 6, 3, 3});
    CHECK(dec.stages[3].conv_w.shape() == Shape{16, 4, 3, 3});
    CHECK(dec.tail_w.shape() == Shape{3, 4, 3, 3});

    Tensor image = test_util::random_tensor(rng, {3, 32, 32}, 0.0, 1.0, false);
    Tensor z = encode(image, enc);
    CHECK(z.shape() == Shape{5, 2, 2});
    CHECK(decode(z, dec).shape() == Shape{3, 32, 32});
}

TEST_CASE("zeroed branch convolutions make the block an exact identity") {
    Rng rng(17);
    RcabBlock b = make_rcab(6, 4, 3, rng);
    fill_zero(b.conv1_w);
    fill_zero(b.conv1_b);
    fill_zero(b.conv2_w);
    fill_zero(b.conv2_b);
    Tensor x = test_util::random_tensor(rng, {6, 4, 5}, -1.0, 1.0, false);
    std::vector<double> out = rcab_forward(x, b).values();
    CHECK(out == x.values());
}

TEST_CASE("saturated gate reduces the block to input plus branch") {
    Rng rng(19);
    RcabBlock b = make_rcab(5, 2, 3, rng);
    fill_zero(b.expand_w);
    fill_value(b.expand_b, 40.0);  // sigmoid(40) rounds to 1.0 in double precision
    Tensor x = test_util::random_tensor(rng, {5, 6, 4}, -1.0, 1.0, false);
    Tensor branch = conv2d(relu(conv2d(x, b.conv1_w, b.conv1_b, 1)), b.conv2_w, b.conv2_b, 1);
    std::vector<double> expected = add(x, branch).values();
    std::vector<double> got = rcab_forward(x, b).values();
    CHECK(got == expected);
}

TEST_CASE("attention gate stays strictly inside (0,1)") {
    Rng rng(23);
    RcabBlock b = make_rcab(7, 4, 3, rng);
    Tensor x = test_util::random_tensor(rng, {7, 5, 5}, -2.0, 2.0, false);
    Tensor branch = conv2d(relu(conv2d(x, b.conv1_w, b.conv1_b, 1)), b.conv2_w, b.conv2_b, 1);
    Tensor gate = sigmoid(conv2d(relu(conv2d(global_avg_pool2d(branch), b.reduce_w, b.reduce_b, 0)),
                                 b.expand_w, b.expand_b, 0));
    CHECK(gate.shape() == Shape{7, 1, 1});
    for (double g : gate.values()) {
        CHECK(g > 0.0);
        CHECK(g < 1.0);
    }
    // the forward pass is exactly x + gate * branch
    std::vector<double> expected = add(x, scale_channels(branch, gate)).values();
    std::vector<double> got = rcab_forward(x, b).values();
    CHECK(got == expected);

    CHECK_THROWS_AS(rcab_forward(Tensor::zeros({6, 5, 5}), b), std::invalid_argument);
    CHECK_THROWS_AS(rcab_forward(Tensor::zeros({7, 5}), b), std::invalid_argument);
}

TEST_CASE("block gradients match finite differences") {
    Rng rng(29);
    RcabBlock b = make_rcab(3, 2, 3, rng);
    nudge_zeros(b.conv1_b, rng);
    nudge_zeros(b.conv2_b, rng);
    nudge_zeros(b.reduce_b, rng);
    nudge_zeros(b.expand_b, rng);
    Tensor x = test_util::random_tensor(rng, {3, 5, 4}, -1.0, 1.0, true);
    auto loss = [&]() { return sum_all(square(rcab_forward(x, b))); };

    for (Tensor* leaf : {&x, &b.conv1_w, &b.conv1_b, &b.conv2_w, &b.conv2_b, &b.reduce_w,
                         &b.reduce_b, &b.expand_w, &b.expand_b}) {
        GradCheckReport rep = finite_difference_check(loss, *leaf, 1e-5, 1e-4, 12, &rng);
        INFO("max_err=", rep.max_err, " worst=", rep.worst_index);
        CHECK(rep.pass);
    }
}

TEST_CASE("parameter registry covers live storage with unique names") {
    Rng rng(31);
    CodecConfig cfg = toy_config(8);
    Encoder enc = make_encoder(cfg, rng);
    Decoder dec = make_decoder(cfg, rng);

    auto eparams = encoder_params(enc, "enc");
    auto dparams = decoder_params(dec, "dec");
    // head + tail plus, per stage, one remap conv and B blocks of 8 tensors
    CHECK(eparams.size() == 4 + 4 * (8 * 1 + 2));
    CHECK(dparams.size() == 4 + 4 * (8 * 1 + 2));
    std::set<std::string> names;
    for (const auto& [name, t] : eparams) names.insert(name);
    for (const auto& [name, t] : dparams) names.insert(name);
    CHECK(names.size() == eparams.size() + dparams.size());
    CHECK(names.count("enc.head_w") == 1);
    CHECK(names.count("enc.s0.blk0.se_w1") == 1);
    CHECK(names.count("enc.s3.w") == 1);
    CHECK(names.count("dec.tail_b") == 1);

    // mutating through the registry pointer changes the forward pass
    Tensor image = test_util::random_tensor(rng, {3, 32, 32}, 0.0, 1.0, false);
    std::vector<double> before = encode(image, enc).values();
    for (auto& [name, t] : eparams)
        if (name == "enc.tail_b") fill_value(*t, 1.0);
    std::vector<double> after = encode(image, enc).values();
    for (size_t i = 0; i < before.size(); ++i) CHECK(std::abs(after[i] - before[i] - 1.0) < 1e-9);
}

TEST_CASE("encoder-to-decoder gradients match finite differences") {
    CodecConfig cfg;
    cfg.stage_channels_enc = {2, 2, 2, 2};
    cfg.stage_channels_dec = {2, 2, 2, 2};
    cfg.blocks_per_group = 1;
    cfg.latent_channels = 2;
    cfg.se_reduction = 2;
    Rng rng(37);
    Encoder enc = make_encoder(cfg, rng);
    Decoder dec = make_decoder(cfg, rng);
    for (auto& [name, t] : encoder_params(enc, "e")) nudge_zeros(*t, rng);
    for (auto& [name, t] : decoder_params(dec, "d")) nudge_zeros(*t, rng);

    Tensor image = test_util::random_tensor(rng, {3, 32, 32}, 0.0, 1.0, true);
    Tensor target = test_util::random_tensor(rng, {3, 32, 32}, 0.0, 1.0, false);
    auto loss = [&]() {
        Tensor recon = decode(encode(image, enc), dec);  // quantizer bypassed
        return mean_all(square(sub(recon, target)));
    };

    // the loss actually reaches the encoder
    enc.head_w.zero_grad();
    backward(loss());
    double gmax = 0.0;
    for (double g : enc.head_w.grad().values()) gmax = std::max(gmax, std::abs(g));
    CHECK(gmax > 0.0);

    for (Tensor* leaf : {&image, &enc.head_w, &enc.stages[0].blocks[0].conv1_w,
                         &enc.stages[0].blocks[0].expand_b, &enc.stages[2].conv_w, &enc.tail_w,
                         &dec.head_w, &dec.stages[3].blocks[0].conv2_w, &dec.tail_b}) {
        GradCheckReport rep = finite_difference_check(loss, *leaf, 1e-5, 1e-3, 4, &rng);
        INFO("max_err=", rep.max_err, " worst=", rep.worst_index);
        CHECK(rep.pass);
    }
}
