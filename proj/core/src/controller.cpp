#include "cvq/controller.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cvq/init.hpp"

namespace cvq {

ImportanceMode importance_mode_from_string(const std::string& s) {
    if (s == "se") return ImportanceMode::Se;
    if (s == "re") return ImportanceMode::Re;
    if (s == "predefined") return ImportanceMode::Predefined;
    throw std::invalid_argument("importance mode must be one of se|re|predefined, got '" + s +
                                "'");
}

std::string to_string(ImportanceMode mode) {
    switch (mode) {
        case ImportanceMode::Se: return "se";
        case ImportanceMode::Re: return "re";
        case ImportanceMode::Predefined: return "predefined";
    }
    throw std::logic_error("unknown importance mode");
}

void validate_group_spec(const GroupSpec& spec) {
    if (spec.ratios.empty()) throw std::invalid_argument("group spec: no groups");
    if (spec.ratios.size() != spec.levels.size())
        throw std::invalid_argument("group spec: ratios and levels must have equal length");
    double sum = 0.0;
    for (double r : spec.ratios) {
        if (!(r > 0.0)) throw std::invalid_argument("group spec: ratios must be positive");
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("group spec: ratios must sum to 1");
    for (size_t g = 0; g < spec.levels.size(); ++g) {
        if (spec.levels[g] < 1)
            throw std::invalid_argument("group spec: levels must be positive");
        if (g > 0 && spec.levels[g] < spec.levels[g - 1])
            throw std::invalid_argument(
                "group spec: levels must be nondecreasing (low-importance groups first)");
    }
}

std::vector<int> group_sizes(const GroupSpec& spec, int channels) {
    validate_group_spec(spec);
    if (channels < 1) throw std::invalid_argument("group_sizes: channels must be positive");
    int g_count = spec.groups();
    std::vector<int> sizes(g_count);
    int assigned = 0;
    for (int g = 0; g < g_count; ++g) {
        sizes[g] = static_cast<int>(std::floor(channels * spec.ratios[g] + 1e-9));
        assigned += sizes[g];
    }
    int leftover = channels - assigned;
    // Floor of each term loses under 1 channel per group, so 0 <= leftover < G.
    for (int g = g_count - 1; g >= 0 && leftover > 0; --g) {
        ++sizes[g];
        --leftover;
    }
    for (int g = 0; g < g_count; ++g)
        if (sizes[g] < 1)
            throw std::invalid_argument("group_sizes: ratio " + std::to_string(spec.ratios[g]) +
                                        " yields an empty group for " +
                                        std::to_string(channels) + " channels");
    return sizes;
}

ChannelImportance importance_from_weights(std::vector<double> weights, ImportanceMode mode) {
    if (weights.empty()) throw std::invalid_argument("importance: empty weight vector");
    std::vector<int> perm(weights.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::stable_sort(perm.begin(), perm.end(),
                     [&](int a, int b) { return weights[a] < weights[b]; });
    return {std::move(weights), std::move(perm), mode};
}

ChannelImportance importance_predefined(int channels) {
    if (channels < 1) throw std::invalid_argument("importance_predefined: channels must be positive");
    std::vector<double> w(channels);
    for (int c = 0; c < channels; ++c) w[c] = static_cast<double>(c + 1);
    return importance_from_weights(std::move(w), ImportanceMode::Predefined);
}

SeScorer make_se_scorer(int channels, int reduction, Rng& rng) {
    if (channels < 1) throw std::invalid_argument("se scorer: channels must be positive");
    if (reduction < 1) throw std::invalid_argument("se scorer: reduction must be positive");
    int mid = std::max(1, channels / reduction);
    SeScorer s;
    s.reduce_w = kaiming_conv2d_weight(mid, channels, 1, 1, rng);
    s.reduce_b = zero_bias(mid);
    s.expand_w = kaiming_conv2d_weight(channels, mid, 1, 1, rng);
    s.expand_b = zero_bias(channels);
    return s;
}

Tensor se_scores(const Tensor& z, const SeScorer& scorer) {
    if (z.rank() != 3) throw std::invalid_argument("se_scores: expected a [C,h,w] tensor");
    if (z.dim(0) != scorer.expand_b.dim(0))
        throw std::invalid_argument("se_scores: channel count does not match the scorer");
    Tensor pooled = global_avg_pool2d(z);
    Tensor hidden = relu(conv2d(pooled, scorer.reduce_w, scorer.reduce_b, 0));
    Tensor scores = sigmoid(conv2d(hidden, scorer.expand_w, scorer.expand_b, 0));
    return reshape(scores, {z.dim(0)});
}

ChannelImportance importance_se(const Tensor& z_batch, const SeScorer& scorer) {
    if (z_batch.rank() != 4)
        throw std::invalid_argument("importance_se: expected a [M,C,h,w] batch");
    int m = z_batch.dim(0);
    if (m < 1) throw std::invalid_argument("importance_se: empty batch");
    int c = z_batch.dim(1), h = z_batch.dim(2), w = z_batch.dim(3);
    std::vector<Tensor> samples = split(z_batch, 0, std::vector<int>(m, 1));
    std::vector<double> mean(c, 0.0);
    for (const Tensor& sample : samples) {
        Tensor scores = se_scores(reshape(sample, {c, h, w}), scorer);
        const std::vector<double>& v = scores.values();
        for (int i = 0; i < c; ++i) mean[i] += v[i] / m;
    }
    return importance_from_weights(std::move(mean), ImportanceMode::Se);
}

Tensor gather_channels(const Tensor& z, const std::vector<int>& order) {
    if (z.rank() != 3) throw std::invalid_argument("gather_channels: expected a [C,h,w] tensor");
    if (order.empty()) throw std::invalid_argument("gather_channels: empty order");
    int c = z.dim(0);
    int64_t plane = static_cast<int64_t>(z.dim(1)) * z.dim(2);
    std::vector<int64_t> map(order.size() * plane);
    for (size_t k = 0; k < order.size(); ++k) {
        if (order[k] < 0 || order[k] >= c)
            throw std::invalid_argument("gather_channels: channel index out of range");
        for (int64_t p = 0; p < plane; ++p)
            map[k * plane + p] = order[k] * plane + p;
    }
    return apply_index_map(z, {static_cast<int>(order.size()), z.dim(1), z.dim(2)},
                           std::move(map), "gather_channels");
}

std::vector<int> inverse_permutation(const std::vector<int>& perm) {
    std::vector<int> inv(perm.size(), -1);
    for (size_t k = 0; k < perm.size(); ++k) {
        int p = perm[k];
        if (p < 0 || p >= static_cast<int>(perm.size()) || inv[p] != -1)
            throw std::invalid_argument("inverse_permutation: not a bijection");
        inv[p] = static_cast<int>(k);
    }
    return inv;
}

SplitResult split_channels(const Tensor& z, const ChannelImportance& imp, const GroupSpec& spec) {
    if (z.rank() != 3) throw std::invalid_argument("split_channels: expected a [C,h,w] tensor");
    if (static_cast<int>(imp.permutation.size()) != z.dim(0))
        throw std::invalid_argument("split_channels: importance covers " +
                                    std::to_string(imp.permutation.size()) + " channels, tensor has " +
                                    std::to_string(z.dim(0)));
    std::vector<int> sizes = group_sizes(spec, z.dim(0));
    Tensor sorted = gather_channels(z, imp.permutation);
    return {split(sorted, 0, sizes), imp.permutation};
}

Tensor merge_channels(const std::vector<Tensor>& groups, const std::vector<int>& permutation) {
    if (groups.empty()) throw std::invalid_argument("merge_channels: no groups");
    int total = 0;
    for (const Tensor& g : groups) {
        if (g.rank() != 3) throw std::invalid_argument("merge_channels: groups must be [C,h,w]");
        if (g.dim(1) != groups[0].dim(1) || g.dim(2) != groups[0].dim(2))
            throw std::invalid_argument("merge_channels: inconsistent spatial shapes");
        total += g.dim(0);
    }
    if (total != static_cast<int>(permutation.size()))
        throw std::invalid_argument("merge_channels: permutation length does not match channels");
    Tensor sorted = groups.size() == 1 ? groups[0] : concat(groups, 0);
    return gather_channels(sorted, inverse_permutation(permutation));
}

EntropyBound entropy_upper_bound(const GroupSpec& spec, int channels, int height, int width,
                                 int single_levels) {
    validate_group_spec(spec);
    if (channels < 1 || height < 1 || width < 1)
        throw std::invalid_argument("entropy_upper_bound: dimensions must be positive");
    if (single_levels < 1)
        throw std::invalid_argument("entropy_upper_bound: level count must be positive");
    EntropyBound b;
    for (int g = 0; g < spec.groups(); ++g)
        b.grouped_per_symbol += spec.ratios[g] * std::log2(static_cast<double>(spec.levels[g]));
    b.single_per_symbol = std::log2(static_cast<double>(single_levels));
    double symbols = static_cast<double>(channels) * height * width;
    b.grouped_bits = symbols * b.grouped_per_symbol;
    b.single_bits = symbols * b.single_per_symbol;
    b.satisfied = b.grouped_per_symbol < b.single_per_symbol;
    return b;
}

}  // namespace cvq
