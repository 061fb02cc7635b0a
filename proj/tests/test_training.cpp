#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "cvq/checkpoint.hpp"
#include "cvq/metrics.hpp"
#include "cvq/training.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cvq;

namespace {

Settings toy_settings(const std::string& extra = "") {
    return parse_settings(
        "stage_channels_enc=4,4,4,4\n"
        "stage_channels_dec=4,4,4,4\n"
        "blocks_per_stage=1\n"
        "latent_channels=8\n"
        "se_reduction=2\n"
        "context_hidden=4\n"
        "batch_size=3\n"
        "epochs=2\n"
        "lr_encoder=0.001\n"
        "lr_quantizer=0.001\n"
        "lr_entropy=0.0005\n"
        "lr_decoder=0.001\n"
        "seed=7\n" +
        extra);
}

std::vector<Tensor> toy_images(int count, unsigned long long seed, int hw = 32) {
    Rng rng(seed);
    std::vector<Tensor> out;
    for (int i = 0; i < count; ++i)
        out.push_back(test_util::random_tensor(rng, {3, hw, hw}, 0.0, 1.0));
    return out;
}

void silence_latent_channel(Model& m, int c) {
    auto& w = m.encoder.tail_w.mutable_values();
    size_t per_out = w.size() / static_cast<size_t>(m.encoder.tail_w.dim(0));
    std::fill(w.begin() + static_cast<ptrdiff_t>(c * per_out),
              w.begin() + static_cast<ptrdiff_t>((c + 1) * per_out), 0.0);
    m.encoder.tail_b.mutable_values()[static_cast<size_t>(c)] = 0.0;
}

}  // namespace

TEST_CASE("adam leaves a parameter untouched when the gradient is zero") {
    Tensor p = Tensor::from_vector({3}, {1.0, -2.0, 0.5}, true);
    AdamState st;
    adam_step(p, st, 0.01);
    CHECK(p.values() == std::vector<double>{1.0, -2.0, 0.5});
    CHECK(st.t == 1);
}

TEST_CASE("adam steps approach the learning rate under a constant gradient") {
    Tensor p = Tensor::from_vector({2}, {0.4, -0.7}, true);
    AdamState st;
    double lr = 0.01;
    for (int step = 0; step < 5; ++step) {
        std::vector<double> before = p.values();
        Tensor loss = mul_const(sum_all(p), 3.0);
        backward(loss);
        adam_step(p, st, lr);
        p.zero_grad();
        for (size_t i = 0; i < 2; ++i) {
            // bias correction makes every step lr * g/(|g|+eps), i.e. ~lr downhill
            CHECK(before[i] - p.values()[i] == doctest::Approx(lr).epsilon(1e-6));
        }
    }
    CHECK(st.t == 5);
}

TEST_CASE("adam moves uphill parameters downhill and vice versa") {
    Tensor p = Tensor::from_vector({1}, {0.0}, true);
    AdamState st;
    Tensor loss = mul_const(sum_all(p), -2.0);  // gradient -2: descent increases p
    backward(loss);
    adam_step(p, st, 0.05);
    CHECK(p.values()[0] > 0.0);
}

TEST_CASE("adam with zero learning rate changes nothing") {
    Tensor p = Tensor::from_vector({2}, {0.25, -0.5}, true);
    AdamState st;
    backward(mul_const(sum_all(p), 3.0));
    adam_step(p, st, 0.0);
    CHECK(p.values() == std::vector<double>{0.25, -0.5});
    CHECK(st.t == 1);
}

TEST_CASE("adam rejects a state from a different parameter") {
    Tensor a = Tensor::from_vector({2}, {1.0, 2.0}, true);
    Tensor b = Tensor::from_vector({3}, {1.0, 2.0, 3.0}, true);
    AdamState st;
    adam_step(a, st, 0.01);
    CHECK_THROWS_AS(adam_step(b, st, 0.01), std::invalid_argument);
}

TEST_CASE("learning rate drops fivefold at each milestone") {
    std::vector<int> ms{200, 300};
    double base = 1e-3;
    CHECK(scheduled_lr(base, ms, 1) == base);
    CHECK(scheduled_lr(base, ms, 199) == base);
    CHECK(scheduled_lr(base, ms, 200) == scheduled_lr(base, ms, 199) / 5.0);
    CHECK(scheduled_lr(base, ms, 299) == scheduled_lr(base, ms, 200));
    CHECK(scheduled_lr(base, ms, 300) == scheduled_lr(base, ms, 299) / 5.0);
    CHECK(scheduled_lr(base, {}, 50) == base);
}

TEST_CASE("loss terms recombine into the reported total") {
    Settings s = toy_settings();
    Rng rng(s.seed);
    Model m = make_model(s, rng);
    Tensor img = toy_images(1, 77)[0];
    Reconstruction r = reconstruct(img, m);
    LossBreakdown lb = total_loss(img, m, r);

    double expected = s.alpha * lb.dis + lb.ent_bits / 3.0 + s.beta * lb.gmm_nll / 3.0;
    CHECK(lb.total.item() == doctest::Approx(expected).epsilon(1e-12));
    CHECK(lb.dis == -lb.ms_ssim);
    CHECK(lb.est_bpp == lb.ent_bits / (32.0 * 32.0));
    CHECK(std::isfinite(lb.gmm_nll));

    // a freshly built context model predicts exactly uniform distributions,
    // so the rate term equals count * log2(levels) per group
    double uniform_bits = 8.0 * std::log2(3.0) + 16.0 * std::log2(5.0) + 8.0 * std::log2(7.0);
    CHECK(lb.ent_bits == doctest::Approx(uniform_bits).epsilon(1e-9));
}

TEST_CASE("a perfect reconstruction pins the distortion term at minus one") {
    Settings s = toy_settings();
    Rng rng(s.seed);
    Model m = make_model(s, rng);
    Tensor img = toy_images(1, 78)[0];
    Reconstruction r = reconstruct(img, m);
    r.recon = img;  // pretend the decoder was perfect
    LossBreakdown lb = total_loss(img, m, r);
    CHECK(lb.ms_ssim == 1.0);
    CHECK(lb.dis == -1.0);
    double expected = -s.alpha + lb.ent_bits / 3.0 + s.beta * lb.gmm_nll / 3.0;
    CHECK(lb.total.item() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("loss rejects a reconstruction with a mismatched group count") {
    Settings s = toy_settings();
    Rng rng(s.seed);
    Model m = make_model(s, rng);
    Tensor img = toy_images(1, 79)[0];
    Reconstruction r = reconstruct(img, m);
    r.quant.pop_back();
    CHECK_THROWS_AS(total_loss(img, m, r), std::invalid_argument);
}

TEST_CASE("training runs, logs, and is bitwise reproducible") {
    Settings s = toy_settings();
    std::vector<Tensor> images = toy_images(4, 100);

    Rng rng_a(s.seed);
    Model a = make_model(s, rng_a);
    std::vector<EpochLog> log_a = train(a, images, rng_a);

    Rng rng_b(s.seed);
    Model b = make_model(s, rng_b);
    std::vector<EpochLog> log_b = train(b, images, rng_b);

    REQUIRE(log_a.size() == 2);
    CHECK(log_a[0].epoch == 1);
    CHECK(log_a[1].epoch == 2);
    for (const EpochLog& e : log_a) {
        CHECK(std::isfinite(e.loss));
        CHECK(e.ms_ssim > -1.0);
        CHECK(e.ms_ssim <= 1.0);
        CHECK(e.ent_bits > 0.0);
    }
    CHECK(train_log_csv(log_a) == train_log_csv(log_b));

    auto pa = model_params(a);
    auto pb = model_params(b);
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].first == pb[i].first);
        CHECK(pa[i].second->values() == pb[i].second->values());
    }

    // parameters actually moved
    Rng rng_c(s.seed);
    Model c = make_model(s, rng_c);
    auto pc = model_params(c);
    bool any_moved = false;
    for (size_t i = 0; i < pa.size() && !any_moved; ++i)
        any_moved = pa[i].second->values() != pc[i].second->values();
    CHECK(any_moved);

    std::string csv = train_log_csv(log_a);
    CHECK(csv.rfind("epoch,loss,dis,ent_bits,gmm_nll,ms_ssim,est_bpp\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("training validates its dataset") {
    Settings s = toy_settings();
    Rng rng(s.seed);
    Model m = make_model(s, rng);
    std::vector<Tensor> none;
    CHECK_THROWS_AS(train(m, none, rng), std::invalid_argument);
    std::vector<Tensor> bad{Tensor::zeros({3, 30, 30})};
    CHECK_THROWS_AS(train(m, bad, rng), std::invalid_argument);
}

TEST_CASE("channel influence reports zero damage for a silent channel") {
    Settings s = toy_settings();
    Rng rng(s.seed);
    Model m = make_model(s, rng);
    silence_latent_channel(m, 5);
    std::vector<Tensor> images = toy_images(2, 200);

    std::vector<InfluenceRow> rows = channel_influence_experiment(m, images);
    REQUIRE(rows.size() == 8);
    for (int c = 0; c < 8; ++c) CHECK(rows[static_cast<size_t>(c)].channel == c);
    CHECK(rows[5].psnr_loss_db == 0.0);
    CHECK(rows[5].msssim_loss_db == 0.0);

    std::vector<InfluenceRow> again = channel_influence_experiment(m, images);
    for (size_t c = 0; c < 8; ++c) {
        CHECK(rows[c].psnr_loss_db == again[c].psnr_loss_db);
        CHECK(rows[c].msssim_loss_db == again[c].msssim_loss_db);
    }

    std::string csv = influence_csv(rows);
    CHECK(csv.rfind("channel,psnr_loss_db,msssim_loss_db\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);
    CHECK_THROWS_AS(channel_influence_experiment(m, {}), std::invalid_argument);
}

TEST_CASE("a trained model round-trips through a checkpoint with identical behavior") {
    Settings s = toy_settings();
    s.epochs = 1;
    std::vector<Tensor> images = toy_images(2, 300);
    Rng rng(s.seed);
    Model m = make_model(s, rng);
    train(m, images, rng);

    CheckpointData loaded = parse_checkpoint(serialize_checkpoint(m, 1, rng));
    Tensor probe = toy_images(1, 301)[0];
    CompressResult before = compress_image(probe, m);
    CompressResult after = compress_image(probe, loaded.model);
    CHECK(before.bytes == after.bytes);
    CHECK(decompress_stream(before.stream, m).values() ==
          decompress_stream(after.stream, loaded.model).values());
}
