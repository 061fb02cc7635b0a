#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "cvq/controller.hpp"
#include "cvq/grad_check.hpp"
#include "cvq/rng.hpp"
#include "cvq/tensor.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cvq;

namespace {

GroupSpec default_spec() { return {{0.25, 0.5, 0.25}, {3, 5, 7}}; }

Tensor channel_ramp(int c, int h, int w) {
    // channel k filled with the constant k
    std::vector<double> v(static_cast<size_t>(c) * h * w);
    for (int k = 0; k < c; ++k)
        for (int p = 0; p < h * w; ++p) v[static_cast<size_t>(k) * h * w + p] = k;
    return Tensor::from_vector({c, h, w}, std::move(v));
}

}  // namespace

TEST_CASE("group spec validation") {
    CHECK_NOTHROW(validate_group_spec(default_spec()));
    CHECK_THROWS_AS(validate_group_spec(GroupSpec{{}, {}}), std::invalid_argument);
    CHECK_THROWS_AS(validate_group_spec(GroupSpec{{0.5, 0.5}, {3}}), std::invalid_argument);
    CHECK_THROWS_AS(validate_group_spec(GroupSpec{{0.5, 0.4}, {3, 5}}), std::invalid_argument);
    CHECK_THROWS_AS(validate_group_spec(GroupSpec{{1.5, -0.5}, {3, 5}}), std::invalid_argument);
    // decreasing levels violate the low-to-high pairing
    CHECK_THROWS_AS(validate_group_spec(GroupSpec{{0.5, 0.5}, {7, 5}}), std::invalid_argument);
    CHECK_NOTHROW(validate_group_spec(GroupSpec{{0.5, 0.5}, {5, 5}}));
}

TEST_CASE("group sizes: floor plus remainder from the last group backward") {
    CHECK(group_sizes(default_spec(), 8) == std::vector<int>{2, 4, 2});
    GroupSpec thirds{{1.0 / 3, 1.0 / 3, 1.0 / 3}, {3, 5, 7}};
    CHECK(group_sizes(thirds, 9) == std::vector<int>{3, 3, 3});
    CHECK(group_sizes(thirds, 10) == std::vector<int>{3, 3, 4});
    CHECK(group_sizes(thirds, 11) == std::vector<int>{3, 4, 4});
    CHECK(group_sizes(GroupSpec{{1.0}, {5}}, 7) == std::vector<int>{7});
    // sizes always sum to the channel count
    Rng rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        int g = 1 + rng.uniform_int(6);
        GroupSpec spec;
        double sum = 0.0;
        for (int i = 0; i < g; ++i) {
            spec.ratios.push_back(0.2 + rng.uniform());
            spec.levels.push_back(2 + i);
            sum += spec.ratios.back();
        }
        for (double& r : spec.ratios) r /= sum;
        int channels = g + rng.uniform_int(60);
        std::vector<int> sizes;
        try {
            sizes = group_sizes(spec, channels);
        } catch (const std::invalid_argument&) {
            continue;  // a tiny ratio left some group empty; rejection is the contract
        }
        CHECK(std::accumulate(sizes.begin(), sizes.end(), 0) == channels);
        for (int s : sizes) CHECK(s >= 1);
    }
    // a ratio too small to earn a channel is rejected, not silently dropped
    CHECK_THROWS_AS(group_sizes(GroupSpec{{0.1, 0.1, 0.8}, {3, 5, 7}}, 3),
                    std::invalid_argument);
}

TEST_CASE("predefined importance is the ascending ramp with identity permutation") {
    ChannelImportance imp = importance_predefined(4);
    CHECK(imp.weights == std::vector<double>{1.0, 2.0, 3.0, 4.0});
    CHECK(imp.permutation == std::vector<int>{0, 1, 2, 3});
    CHECK(imp.mode == ImportanceMode::Predefined);
    CHECK(importance_predefined(1).weights == std::vector<double>{1.0});
    CHECK_THROWS_AS(importance_predefined(0), std::invalid_argument);
}

TEST_CASE("importance sort is ascending and stable on ties") {
    ChannelImportance imp =
        importance_from_weights({2.0, 1.0, 2.0, 1.0}, ImportanceMode::Predefined);
    CHECK(imp.permutation == std::vector<int>{1, 3, 0, 2});
    ChannelImportance equal = importance_from_weights({0.5, 0.5, 0.5}, ImportanceMode::Se);
    CHECK(equal.permutation == std::vector<int>{0, 1, 2});
}

TEST_CASE("importance mode names round-trip") {
    for (ImportanceMode m : {ImportanceMode::Se, ImportanceMode::Re, ImportanceMode::Predefined})
        CHECK(importance_mode_from_string(to_string(m)) == m);
    CHECK_THROWS_AS(importance_mode_from_string("none"), std::invalid_argument);
}

TEST_CASE("split assigns low-importance channels to the low-level group") {
    // channels already ascending by importance; channel k holds the constant k
    Tensor z = channel_ramp(8, 2, 2);
    SplitResult r = split_channels(z, importance_predefined(8), default_spec());
    REQUIRE(r.groups.size() == 3);
    CHECK(r.groups[0].shape() == Shape{2, 2, 2});
    CHECK(r.groups[1].shape() == Shape{4, 2, 2});
    CHECK(r.groups[2].shape() == Shape{2, 2, 2});
    CHECK(r.groups[0].values()[0] == 0.0);  // channels 0,1
    CHECK(r.groups[0].values()[4] == 1.0);
    CHECK(r.groups[1].values()[0] == 2.0);  // channels 2..5
    CHECK(r.groups[1].values()[12] == 5.0);
    CHECK(r.groups[2].values()[0] == 6.0);  // channels 6,7
    CHECK(r.groups[2].values()[4] == 7.0);
}

TEST_CASE("split honors a non-trivial importance ordering") {
    Tensor z = channel_ramp(4, 1, 1);
    ChannelImportance imp = importance_from_weights({0.9, 0.1, 0.4, 0.2}, ImportanceMode::Re);
    CHECK(imp.permutation == std::vector<int>{1, 3, 2, 0});
    SplitResult r = split_channels(z, imp, GroupSpec{{0.5, 0.5}, {3, 5}});
    CHECK(r.groups[0].values() == std::vector<double>{1.0, 3.0});
    CHECK(r.groups[1].values() == std::vector<double>{2.0, 0.0});
}

TEST_CASE("merge of split is the identity, bit for bit") {
    Rng rng(77);
    for (int trial = 0; trial < 60; ++trial) {
        int c = 1 + rng.uniform_int(64);
        int g_max = std::min(c, 8);
        GroupSpec spec;
        double sum = 0.0;
        int g = 1 + rng.uniform_int(g_max);
        for (int i = 0; i < g; ++i) {
            spec.ratios.push_back(0.25 + rng.uniform());
            spec.levels.push_back(2 + 2 * i);
            sum += spec.ratios.back();
        }
        for (double& x : spec.ratios) x /= sum;
        std::vector<double> w(c);
        for (double& x : w) x = rng.uniform(-5.0, 5.0);
        Tensor z = test_util::random_tensor(rng, {c, 3, 2}, -2.0, 2.0);
        SplitResult s;
        try {
            s = split_channels(z, importance_from_weights(w, ImportanceMode::Se), spec);
        } catch (const std::invalid_argument&) {
            continue;  // empty-group draw
        }
        Tensor back = merge_channels(s.groups, s.permutation);
        CHECK(test_util::max_abs_diff(back, z) == 0.0);
    }
}

TEST_CASE("single group split and merge are the identity") {
    Rng rng(5);
    Tensor z = test_util::random_tensor(rng, {6, 2, 2}, -1.0, 1.0);
    SplitResult s = split_channels(z, importance_predefined(6), GroupSpec{{1.0}, {5}});
    REQUIRE(s.groups.size() == 1);
    CHECK(test_util::max_abs_diff(s.groups[0], z) == 0.0);
    CHECK(test_util::max_abs_diff(merge_channels(s.groups, s.permutation), z) == 0.0);
}

TEST_CASE("inverse permutation round-trips and rejects non-bijections") {
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        int n = 1 + rng.uniform_int(64);
        std::vector<int> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        std::vector<int> inv = inverse_permutation(perm);
        for (int k = 0; k < n; ++k) CHECK(inv[perm[k]] == k);
        CHECK(inverse_permutation(inv) == perm);
    }
    CHECK_THROWS_AS(inverse_permutation({0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(inverse_permutation({1, 2}), std::invalid_argument);
}

TEST_CASE("gather_channels validates and differentiates") {
    Rng rng(31);
    Tensor z = test_util::random_tensor(rng, {4, 2, 3}, -1.0, 1.0, /*requires_grad=*/true);
    CHECK_THROWS_AS(gather_channels(z, {0, 4}), std::invalid_argument);
    auto loss = [&] {
        Tensor g = gather_channels(z, {3, 1, 0, 2});
        return sum_all(square(g));
    };
    GradCheckReport rep = finite_difference_check(loss, z);
    CHECK(rep.pass);
    // duplicated selection accumulates both contributions in the gradient
    z.zero_grad();
    Tensor doubled = gather_channels(z, {1, 1});
    backward(sum_all(doubled));
    std::vector<double> g = z.grad().values();
    for (int p = 0; p < 6; ++p) {
        CHECK(g[6 + p] == 2.0);
        CHECK(g[p] == 0.0);
    }
}

TEST_CASE("split/merge mismatch errors") {
    Tensor z = channel_ramp(8, 2, 2);
    ChannelImportance imp = importance_predefined(6);
    CHECK_THROWS_AS(split_channels(z, imp, default_spec()), std::invalid_argument);
    SplitResult s = split_channels(z, importance_predefined(8), default_spec());
    CHECK_THROWS_AS(merge_channels(s.groups, std::vector<int>{0, 1, 2}),
                    std::invalid_argument);
    std::vector<Tensor> bad = s.groups;
    bad[1] = Tensor::zeros({4, 3, 3});
    CHECK_THROWS_AS(merge_channels(bad, s.permutation), std::invalid_argument);
    CHECK_THROWS_AS(merge_channels({}, {}), std::invalid_argument);
}

TEST_CASE("squeeze-excite scores: identity weights reduce to sigmoid of channel means") {
    int c = 3, h = 2, w = 2;
    SeScorer s;
    std::vector<double> eye(static_cast<size_t>(c) * c, 0.0);
    for (int i = 0; i < c; ++i) eye[static_cast<size_t>(i) * c + i] = 1.0;
    s.reduce_w = Tensor::from_vector({c, c, 1, 1}, eye);
    s.reduce_b = Tensor::zeros({c});
    s.expand_w = Tensor::from_vector({c, c, 1, 1}, eye);
    s.expand_b = Tensor::zeros({c});
    Tensor z = Tensor::from_vector({c, h, w}, {0.1, 0.2, 0.3, 0.4,    // mean 0.25
                                               1.0, 1.0, 1.0, 1.0,    // mean 1.0
                                               0.5, 0.7, 0.9, 1.1});  // mean 0.8
    Tensor scores = se_scores(z, s);
    REQUIRE(scores.shape() == Shape{3});
    std::vector<double> expect = {1.0 / (1.0 + std::exp(-0.25)), 1.0 / (1.0 + std::exp(-1.0)),
                                  1.0 / (1.0 + std::exp(-0.8))};
    CHECK(test_util::max_abs_diff(scores.values(), expect) < 1e-12);
}

TEST_CASE("squeeze-excite scores: symmetric weights on channel-constant input are equal") {
    int c = 4;
    Rng rng(3);
    SeScorer s = make_se_scorer(c, 2, rng);
    // every hidden unit and every output unit sees the same mixture
    s.reduce_w = Tensor::full({2, c, 1, 1}, 0.3);
    s.reduce_b = Tensor::full({2}, 0.1);
    s.expand_w = Tensor::full({c, 2, 1, 1}, -0.4);
    s.expand_b = Tensor::full({c}, 0.2);
    Tensor z = Tensor::full({c, 3, 3}, 0.7);
    std::vector<double> v = se_scores(z, s).values();
    for (int i = 1; i < c; ++i) CHECK(v[i] == v[0]);
}

TEST_CASE("squeeze-excite scores stay strictly inside (0,1)") {
    Rng rng(41);
    for (int trial = 0; trial < 10; ++trial) {
        int c = 2 + rng.uniform_int(15);
        SeScorer s = make_se_scorer(c, 4, rng);
        Tensor z = test_util::random_tensor(rng, {c, 4, 4}, -3.0, 3.0);
        std::vector<double> scores = se_scores(z, s).values();
        for (double v : scores) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
        }
    }
}

TEST_CASE("batch importance averages per-sample scores") {
    Rng rng(9);
    int c = 5, h = 3, w = 3;
    SeScorer s = make_se_scorer(c, 2, rng);
    Tensor z = test_util::random_tensor(rng, {c, h, w}, -1.0, 1.0);
    Tensor single = reshape(z, {1, c, h, w});
    Tensor doubled = concat({single, single}, 0);
    ChannelImportance one = importance_se(single, s);
    ChannelImportance two = importance_se(doubled, s);
    CHECK(one.mode == ImportanceMode::Se);
    CHECK(test_util::max_abs_diff(one.weights, two.weights) < 1e-15);
    CHECK(one.permutation == two.permutation);
    // distinct samples genuinely mix
    Tensor other = test_util::random_tensor(rng, {c, h, w}, -1.0, 1.0);
    Tensor mixed = concat({single, reshape(other, {1, c, h, w})}, 0);
    ChannelImportance avg = importance_se(mixed, s);
    std::vector<double> expect(c);
    std::vector<double> a = se_scores(z, s).values();
    std::vector<double> b = se_scores(other, s).values();
    for (int i = 0; i < c; ++i) expect[i] = a[i] / 2 + b[i] / 2;
    CHECK(test_util::max_abs_diff(avg.weights, expect) < 1e-15);
    CHECK_THROWS_AS(importance_se(z, s), std::invalid_argument);
}

TEST_CASE("entropy bound: ratio-weighted levels versus a single level count") {
    EntropyBound b = entropy_upper_bound(default_spec(), 8, 4, 4, 5);
    CHECK(std::abs(b.grouped_per_symbol - 2.2590) < 1e-4);
    CHECK(std::abs(b.single_per_symbol - 2.3219) < 1e-4);
    CHECK(b.satisfied);
    CHECK(std::abs(b.grouped_bits - 8 * 4 * 4 * 2.259043403138371) < 1e-9);
    CHECK(std::abs(b.single_bits - 8 * 4 * 4 * std::log2(5.0)) < 1e-9);
}

TEST_CASE("entropy bound ordering across level combinations") {
    std::vector<std::vector<int>> combos = {{2, 5, 8}, {3, 5, 7}, {4, 5, 6}, {5, 5, 5}};
    std::vector<double> per_symbol;
    for (const auto& q : combos) {
        EntropyBound b = entropy_upper_bound(GroupSpec{{0.25, 0.5, 0.25}, q}, 8, 2, 2, 5);
        per_symbol.push_back(b.grouped_per_symbol);
    }
    CHECK(per_symbol[0] < per_symbol[1]);
    CHECK(per_symbol[1] < per_symbol[2]);
    CHECK(per_symbol[2] < per_symbol[3]);
    CHECK(std::abs(per_symbol[3] - std::log2(5.0)) < 1e-14);
}

TEST_CASE("entropy bound equality case and scale-freeness") {
    EntropyBound eq = entropy_upper_bound(GroupSpec{{1.0}, {5}}, 8, 2, 2, 5);
    CHECK(eq.grouped_bits == eq.single_bits);
    CHECK_FALSE(eq.satisfied);  // strict comparison
    EntropyBound small = entropy_upper_bound(default_spec(), 8, 4, 4, 5);
    EntropyBound big = entropy_upper_bound(default_spec(), 32, 8, 32, 5);
    CHECK(small.satisfied == big.satisfied);
    CHECK(std::abs(big.grouped_bits - 64.0 * small.grouped_bits) < 1e-9);
    CHECK(small.grouped_per_symbol == big.grouped_per_symbol);
}

TEST_CASE("gradients flow through a split, per-group scaling, merge pipeline") {
    Rng rng(55);
    Tensor z = test_util::random_tensor(rng, {8, 2, 2}, -1.0, 1.0, /*requires_grad=*/true);
    auto loss = [&] {
        SplitResult s = split_channels(z, importance_predefined(8), default_spec());
        std::vector<Tensor> scaled;
        for (size_t g = 0; g < s.groups.size(); ++g)
            scaled.push_back(mul_const(s.groups[g], static_cast<double>(g + 1)));
        return sum_all(square(merge_channels(scaled, s.permutation)));
    };
    GradCheckReport rep = finite_difference_check(loss, z);
    CHECK(rep.pass);
}
