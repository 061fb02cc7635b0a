#include <cmath>

#include "cvq/gmm_quantizer.hpp"
#include "cvq/grad_check.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cvq;
using test_util::random_tensor;

namespace {

GmmParams two_unit_gaussians() {
    GmmParams g = make_gmm(2);
    set_gmm_pi(g, {0.5, 0.5});
    set_gmm_mu(g, {0.0, 1.0});
    set_gmm_sigma(g, {1.0, 1.0});
    return g;
}

}  // namespace

TEST_CASE("responsibilities for two balanced unit gaussians") {
    GmmSnapshot s = gmm_snapshot(two_unit_gaussians());
    auto r = responsibilities(0.2, s);
    CHECK(r[0] == doctest::Approx(0.574442516811659).epsilon(1e-9));
    CHECK(r[1] == doctest::Approx(0.425557483188341).epsilon(1e-9));
    CHECK(r[0] + r[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("hard quantization picks the dominant component") {
    GmmSnapshot s = gmm_snapshot(two_unit_gaussians());
    auto [value, symbol] = quantize_hard(0.2, s);
    CHECK(value == 0.0);
    CHECK(symbol == 0);
    auto [v2, s2] = quantize_hard(0.9, s);
    CHECK(v2 == 1.0);
    CHECK(s2 == 1);
}

TEST_CASE("equidistant ties resolve to the lowest index") {
    GmmSnapshot s = gmm_snapshot(two_unit_gaussians());
    auto [value, symbol] = quantize_hard(0.5, s);
    CHECK(symbol == 0);
    CHECK(value == 0.0);
}

TEST_CASE("soft quantization blends the centers") {
    GmmParams g = two_unit_gaussians();
    GmmSnapshot s = gmm_snapshot(g);
    CHECK(quantize_soft_value(0.2, s) == doctest::Approx(0.425557483188341).epsilon(1e-9));
    Tensor z = Tensor::from_vector({1}, {0.2});
    CHECK(quantize_soft(z, g).item() == doctest::Approx(0.425557483188341).epsilon(1e-9));
}

TEST_CASE("single-component edge case") {
    GmmParams g = make_gmm(1);
    set_gmm_mu(g, {0.25});
    GmmSnapshot s = gmm_snapshot(g);
    CHECK(responsibilities(3.0, s) == std::vector<double>{1.0});
    auto [value, symbol] = quantize_hard(-7.0, s);
    CHECK(value == 0.25);
    CHECK(symbol == 0);
}

TEST_CASE("log-space stability at extreme inputs") {
    GmmSnapshot s = gmm_snapshot(two_unit_gaussians());
    for (double z : {1e6, -1e6, 12345.0}) {
        auto r = responsibilities(z, s);
        double total = 0.0;
        for (double v : r) {
            CHECK(std::isfinite(v));
            total += v;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("negative log likelihood of a standard normal at zero") {
    GmmParams g = make_gmm(1);
    set_gmm_mu(g, {0.0});
    set_gmm_sigma(g, {1.0});
    Tensor z = Tensor::from_vector({1}, {0.0});
    CHECK(gmm_nll(z, g).item() == doctest::Approx(0.9189385332046727).epsilon(1e-9));
}

TEST_CASE("uniform mixture with matched scale collapses to the plain soft quantizer") {
    Rng rng(31);
    const double sigma = std::sqrt(2.0) / 2.0;
    for (int levels = 2; levels <= 8; ++levels) {
        GmmParams g = make_gmm(levels);
        set_gmm_pi(g, std::vector<double>(levels, 1.0 / levels));
        set_gmm_sigma(g, std::vector<double>(levels, sigma));
        GmmSnapshot s = gmm_snapshot(g);
        for (int trial = 0; trial < 200; ++trial) {
            double z = rng.uniform(-2.0, 2.0);
            double ours = quantize_soft_value(z, s);
            double ref = soft_quantizer_reference(z, s.mu, 1.0);
            CHECK(std::abs(ours - ref) <= 1e-12);
        }
    }
}

TEST_CASE("quantize_ste forwards hard centers and soft gradients") {
    Rng rng(41);
    GmmParams g = make_gmm(3);
    Tensor z = random_tensor(rng, {2, 2, 2}, -1.2, 1.2);
    auto result = quantize_ste(z, g);
    GmmSnapshot s = gmm_snapshot(g);
    for (int64_t i = 0; i < z.size(); ++i) {
        auto [value, symbol] = quantize_hard(z.values()[i], s);
        CHECK(result.values.values()[i] == value);
        CHECK(result.symbols[i] == symbol);
        CHECK(result.embedding.values()[i] ==
              doctest::Approx(symbol / 2.0 - 0.5).epsilon(1e-12));
    }
    // The STE backward must push the upstream gradient through the soft path.
    // With loss sum(v^2) the upstream factor is 2*v_hard, so the reference is
    // the soft graph contracted against that same constant.
    backward(sum_all(square(result.values)));
    Tensor ste_grad = z.grad();

    std::vector<double> upstream(z.size());
    for (int64_t i = 0; i < z.size(); ++i) upstream[i] = 2.0 * result.values.values()[i];
    Tensor z2 = Tensor::from_vector(z.shape(), z.values(), true);
    backward(sum_all(mul(quantize_soft(z2, g), Tensor::from_vector(z.shape(), upstream))));
    CHECK(test_util::max_abs_diff(ste_grad, z2.grad()) < 1e-12);
}

TEST_CASE("soft path matches finite differences in every parameter") {
    Rng rng(43);
    GmmParams g = make_gmm(4);
    Tensor z = random_tensor(rng, {6}, -1.5, 1.5);

    auto soft_loss = [&]() { return sum_all(square(quantize_soft(z, g))); };
    CHECK(finite_difference_check(soft_loss, z, 1e-5, 1e-4).pass);
    CHECK(finite_difference_check(soft_loss, g.mu, 1e-5, 1e-4).pass);
    CHECK(finite_difference_check(soft_loss, g.pi_logits, 1e-5, 1e-4).pass);
    CHECK(finite_difference_check(soft_loss, g.sigma_raw, 1e-5, 1e-4).pass);

    auto nll_loss = [&]() { return gmm_nll(z, g); };
    CHECK(finite_difference_check(nll_loss, z, 1e-5, 1e-4).pass);
    CHECK(finite_difference_check(nll_loss, g.mu, 1e-5, 1e-4).pass);
    CHECK(finite_difference_check(nll_loss, g.pi_logits, 1e-5, 1e-4).pass);
    CHECK(finite_difference_check(nll_loss, g.sigma_raw, 1e-5, 1e-4).pass);
}

TEST_CASE("soft-forward flag bypasses the override") {
    Rng rng(47);
    GmmParams g = make_gmm(3);
    Tensor z = random_tensor(rng, {5}, -1.0, 1.0, false);
    auto ste = quantize_ste(z, g, /*soft_forward=*/true);
    Tensor soft = quantize_soft(z, g);
    CHECK(ste.values.values() == soft.values());
}
