#include <cmath>
#include <stdexcept>
#include <vector>

#include "cvq/grad_check.hpp"
#include "cvq/metrics.hpp"
#include "cvq/rng.hpp"
#include "cvq/tensor.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cvq;

namespace {

Tensor checkerboard(int h, int w) {
    std::vector<double> v(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) v[static_cast<size_t>(y * w + x)] = (y + x) % 2;
    return Tensor::from_vector({1, h, w}, std::move(v));
}

Tensor clip01(const Tensor& t) {
    std::vector<double> v = t.values();
    for (double& x : v) x = std::min(1.0, std::max(0.0, x));
    return Tensor::from_vector(t.shape(), std::move(v));
}

}  // namespace

TEST_CASE("psnr oracles") {
    Rng rng(5);
    Tensor a = test_util::random_tensor(rng, {3, 8, 8}, 0.0, 1.0);
    CHECK(psnr(a, a) == 99.0);
    Tensor half = Tensor::full({2, 4, 4}, 0.5);
    Tensor off = Tensor::full({2, 4, 4}, 0.6);
    CHECK(std::abs(psnr(half, off) - 20.0) < 1e-12);
    Tensor c = test_util::random_tensor(rng, {3, 8, 8}, 0.0, 1.0);
    CHECK(psnr(a, c) == psnr(c, a));
    CHECK_THROWS_AS(psnr(a, half), std::invalid_argument);
}

TEST_CASE("ms_ssim of an image with itself is one") {
    Rng rng(7);
    for (Shape s : {Shape{1, 16, 16}, Shape{3, 20, 24}, Shape{2, 33, 47}}) {
        Tensor a = test_util::random_tensor(rng, s, 0.0, 1.0);
        CHECK(std::abs(ms_ssim_value(a, a) - 1.0) < 1e-12);
    }
}

TEST_CASE("ms_ssim rejects images that are too small") {
    Tensor tiny = Tensor::full({1, 15, 64}, 0.5);
    CHECK_THROWS_AS(ms_ssim(tiny, tiny), std::invalid_argument);
    Tensor tall = Tensor::full({1, 64, 8}, 0.5);
    CHECK_THROWS_AS(ms_ssim(tall, tall), std::invalid_argument);
    Tensor shaped = Tensor::full({1, 16, 16}, 0.5);
    Tensor other = Tensor::full({1, 16, 17}, 0.5);
    CHECK_THROWS_AS(ms_ssim(shaped, other), std::invalid_argument);
}

TEST_CASE("contrast inversion scores below one half") {
    Tensor a = checkerboard(16, 16);
    Tensor b = add_const(mul_const(a, -1.0), 1.0);  // 1 - a
    CHECK(ms_ssim_value(a, b) < 0.5);
}

TEST_CASE("ms_ssim lies in (0,1] and degrades monotonically with noise") {
    Rng rng(11);
    Tensor a = test_util::random_tensor(rng, {1, 32, 32}, 0.2, 0.8);
    double prev = 1.0;
    for (double amp : {0.02, 0.1, 0.3}) {
        std::vector<double> v = a.values();
        Rng noise(13);  // same noise pattern, growing amplitude
        for (double& x : v) x += amp * noise.uniform(-1.0, 1.0);
        double score = ms_ssim_value(a, clip01(Tensor::from_vector(a.shape(), std::move(v))));
        CHECK(score > 0.0);
        CHECK(score < prev);
        prev = score;
    }
}

TEST_CASE("ms_ssim gradient matches finite differences") {
    Rng rng(17);
    Tensor a = test_util::random_tensor(rng, {1, 16, 16}, 0.1, 0.9);
    Tensor b = test_util::random_tensor(rng, {1, 16, 16}, 0.1, 0.9, /*requires_grad=*/true);
    auto loss = [&] { return ms_ssim(a, b); };
    GradCheckReport rep = finite_difference_check(loss, b, 1e-5, 1e-3, 64, &rng);
    CHECK(rep.pass);
    Tensor a3 = test_util::random_tensor(rng, {3, 16, 16}, 0.1, 0.9);
    Tensor b3 = test_util::random_tensor(rng, {3, 16, 16}, 0.1, 0.9, /*requires_grad=*/true);
    auto loss3 = [&] { return ms_ssim(a3, b3); };
    CHECK(finite_difference_check(loss3, b3, 1e-5, 1e-3, 64, &rng).pass);
}

TEST_CASE("larger images engage more scales without changing the fixed points") {
    Rng rng(19);
    // 32x32 uses two levels, 64x64 three; identical images still score one
    for (int side : {32, 64}) {
        Tensor a = test_util::random_tensor(rng, {1, side, side}, 0.0, 1.0);
        CHECK(std::abs(ms_ssim_value(a, a) - 1.0) < 1e-12);
    }
}

TEST_CASE("ms_ssim_db oracles") {
    CHECK(std::abs(ms_ssim_db(0.9) - 10.0) < 1e-12);
    CHECK(std::abs(ms_ssim_db(0.9651) - 14.5717) < 1e-3);
    CHECK(ms_ssim_db(0.0) == 0.0);
    CHECK(ms_ssim_db(1.0) == 99.0);
    CHECK_THROWS_AS(ms_ssim_db(-0.1), std::invalid_argument);
    CHECK_THROWS_AS(ms_ssim_db(1.1), std::invalid_argument);
    double prev = -1.0;
    for (double v = 0.0; v < 0.999; v += 0.037) {
        double db = ms_ssim_db(v);
        CHECK(db > prev);
        prev = db;
    }
}

TEST_CASE("bpp oracles") {
    CHECK(bpp(1024, 32, 32) == 8.0);  // 8192 bits over 1024 pixels
    CHECK(bpp(0, 16, 16) == 0.0);
    CHECK(bpp(10, 16, 16) > 0.0);
    // additive over groups
    CHECK(std::abs(bpp(300, 50, 40) + bpp(200, 50, 40) - bpp(500, 50, 40)) < 1e-15);
    // doubling the payload doubles the payload contribution
    CHECK(bpp(600, 50, 40) == 2.0 * bpp(300, 50, 40));
    CHECK_THROWS_AS(bpp(1, 0, 5), std::invalid_argument);
}
